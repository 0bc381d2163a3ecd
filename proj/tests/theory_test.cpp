#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dwlab/theory.hpp"

using namespace dwlab::theory;

namespace {

double rel_diff(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

}  // namespace

TEST_CASE("per_step_success basics") {
  CHECK(per_step_success(0.9, 1) == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(per_step_success(0.5, 2) == doctest::Approx(0.25).epsilon(1e-15));
  const double v = per_step_success(0.99, 10);
  CHECK(v > 0.904);
  CHECK(v < 0.905);
  CHECK(rel_diff(v, 0.90438207500880449) < 1e-14);
  CHECK_THROWS_AS(per_step_success(0.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(per_step_success(1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(per_step_success(0.5, 0), std::invalid_argument);
}

TEST_CASE("per_step_success_hetero multiplies per-operation rates") {
  const std::vector<double> qs{0.9, 0.8, 0.5};
  CHECK(per_step_success_hetero(qs) == doctest::Approx(0.36).epsilon(1e-12));
  const std::vector<double> uniform{0.7, 0.7, 0.7};
  CHECK(per_step_success_hetero(uniform) ==
        doctest::Approx(per_step_success(0.7, 3)).epsilon(1e-15));
  CHECK_THROWS_AS(per_step_success_hetero({}), std::invalid_argument);
  const std::vector<double> bad{0.5, 1.0};
  CHECK_THROWS_AS(per_step_success_hetero(bad), std::invalid_argument);
}

TEST_CASE("ModelParams validates bounds") {
  CHECK_NOTHROW(ModelParams(0.9, 1, 1, 2, 1.0));
  CHECK_THROWS_AS(ModelParams(0.0, 1, 1, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(1.0, 1, 1, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.9, 0, 1, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.9, 1, 0, 2, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.9, 1, 1, 1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.9, 1, 1, 2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(ModelParams(0.9, 1, 1, 2, 1.1), std::invalid_argument);
}

TEST_CASE("single_success closed form") {
  CHECK(single_success(ModelParams(0.9, 1, 1, 2, 1.0)) ==
        doctest::Approx(0.9).epsilon(1e-15));
  CHECK(single_success(ModelParams(0.9, 2, 3, 2, 1.0)) ==
        doctest::Approx(std::pow(0.81, 3)).epsilon(1e-15));
  // (0.5^3)^4 = 1/4096 exactly.
  CHECK(single_success(ModelParams(0.5, 3, 4, 2, 1.0)) == 0.000244140625);
}

TEST_CASE("multi_success closed form, aggregator applied once") {
  // (1 - 0.1^2)^2 = 9801/10000.
  CHECK(multi_success(ModelParams(0.9, 1, 2, 2, 1.0)) ==
        doctest::Approx(0.9801).epsilon(1e-15));
  // r scales the whole expression linearly, not per step.
  const double base = multi_success(ModelParams(0.9, 1, 3, 2, 1.0));
  CHECK(multi_success(ModelParams(0.9, 1, 3, 2, 0.5)) ==
        doctest::Approx(0.5 * base).epsilon(1e-14));
}

TEST_CASE("success probabilities stay inside their ranges") {
  for (double q : {0.05, 0.5, 0.9, 0.999}) {
    for (int w : {1, 2, 5}) {
      for (int d : {1, 3, 7}) {
        for (int n : {2, 4}) {
          for (double r : {0.6, 1.0}) {
            const ModelParams p(q, w, d, n, r);
            const double ss = single_success(p);
            const double ms = multi_success(p);
            CHECK(ss > 0.0);
            CHECK(ss < 1.0);
            CHECK(ms > 0.0);
            CHECK(ms <= 1.0);
          }
        }
      }
    }
  }
}

TEST_CASE("performance_gain pinned values") {
  const GainAssessment a = performance_gain(ModelParams(0.5, 1, 1, 3, 1.0));
  CHECK(a.gain == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(a.assumption_ok);
  CHECK(a.per_step == doctest::Approx(0.5).epsilon(1e-15));

  const GainAssessment b = performance_gain(ModelParams(0.9, 1, 1, 2, 1.0));
  CHECK(b.gain == doctest::Approx(0.1).epsilon(1e-13));

  // (0.95 * (1 - 0.1^3) / 0.9)^4 - 1, exact rational 3783645390161/16e12.
  const GainAssessment c = performance_gain(ModelParams(0.9, 1, 4, 3, 0.95));
  CHECK(rel_diff(c.gain, 0.2364778368850625) < 1e-13);
  CHECK(c.assumption_ok);
}

TEST_CASE("performance_gain flags the broken-benefit regime") {
  // r(1 - (1-0.9)^2) = 0.495 < s = 0.9, so f < 1.
  const GainAssessment g = performance_gain(ModelParams(0.9, 1, 1, 2, 0.5));
  CHECK_FALSE(g.assumption_ok);
  CHECK(g.gain < 0.0);
  CHECK(g.gain >= -1.0);
}

TEST_CASE("gain agrees with the success-ratio route when r = 1 or d = 1") {
  for (double q : {0.3, 0.7, 0.9}) {
    for (int w : {1, 2, 4}) {
      for (int d : {1, 2, 8, 32}) {
        const ModelParams p(q, w, d, 3, 1.0);
        const double direct =
            (multi_success(p) - single_success(p)) / single_success(p);
        CHECK(rel_diff(performance_gain(p).gain, direct) < 1e-12);
      }
      const ModelParams p1(q, w, 1, 4, 0.85);
      const double direct1 =
          (multi_success(p1) - single_success(p1)) / single_success(p1);
      CHECK(rel_diff(performance_gain(p1).gain, direct1) < 1e-12);
    }
  }
}

TEST_CASE("assumption satisfied implies the panel beats the solo agent") {
  for (double q : {0.4, 0.8, 0.95}) {
    for (int w : {1, 3}) {
      for (int d : {1, 2, 6}) {
        for (double r : {0.9, 1.0}) {
          const ModelParams p(q, w, d, 3, r);
          if (performance_gain(p).assumption_ok)
            CHECK(multi_success(p) > single_success(p));
        }
      }
    }
  }
}

TEST_CASE("width_limit_gain pinned values") {
  CHECK(width_limit_gain(2, 3, 1.0) == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(width_limit_gain(5, 2, 0.5) == doctest::Approx(0.0));
  CHECK(width_limit_gain(2, 5, 0.9) == doctest::Approx(19.25).epsilon(1e-14));
  CHECK_THROWS_AS(width_limit_gain(0, 3, 1.0), std::invalid_argument);
}

TEST_CASE("verify_monotonicity: clean grid has zero violations") {
  const ModelParams base(0.9, 1, 1, 3, 0.95);
  const MonotonicityReport rep =
      verify_monotonicity(base, IntRange{1, 6}, IntRange{1, 6});
  CHECK(rep.passed());
  CHECK(rep.violations.empty());
  CHECK(rep.assumption_violated.empty());
  CHECK(rep.points.size() == 36);
  // Interior points contribute two comparisons, edges fewer: 2*6*5 total.
  CHECK(rep.comparisons == 60);
}

TEST_CASE("verify_monotonicity: single point passes vacuously") {
  const ModelParams base(0.9, 1, 1, 3, 0.95);
  const MonotonicityReport rep =
      verify_monotonicity(base, IntRange{2, 2}, IntRange{3, 3});
  CHECK(rep.passed());
  CHECK(rep.comparisons == 0);
  CHECK(rep.points.size() == 1);
}

TEST_CASE("verify_monotonicity: broken-assumption points are excluded") {
  // q=0.9, N=2, r=0.5: f < 1 at w=1 (0.495 < 0.9).
  const ModelParams base(0.9, 1, 1, 2, 0.5);
  const MonotonicityReport rep =
      verify_monotonicity(base, IntRange{1, 3}, IntRange{1, 3});
  CHECK_FALSE(rep.assumption_violated.empty());
  bool w1_flagged = false;
  for (const auto& [d, w] : rep.assumption_violated)
    if (w == 1) w1_flagged = true;
  CHECK(w1_flagged);
  CHECK(rep.passed());  // flagged points are excluded, not failures
}

TEST_CASE("verify_width_saturation reaches the pinned first width") {
  const ModelParams base(0.9, 1, 2, 3, 1.0);
  const SaturationReport rep = verify_width_saturation(base, 200, 1e-6);
  CHECK(rep.limit == doctest::Approx(8.0).epsilon(1e-14));
  CHECK(rep.converged);
  CHECK(rep.first_width_within_tol == 159);
  CHECK(rep.monotone_decreasing);
  CHECK(rep.final_abs_err < 1e-6);
}

TEST_CASE("verify_width_saturation: unreachable tolerance is not an error") {
  const ModelParams base(0.9, 1, 2, 3, 1.0);
  const SaturationReport rep = verify_width_saturation(base, 8, 1e-6);
  CHECK_FALSE(rep.converged);
  CHECK(rep.first_width_within_tol == -1);
  CHECK(rep.monotone_decreasing);
}

TEST_CASE("verify_depth_divergence pinned values") {
  // f = 1.75; gain(1) = 0.75 does not strictly exceed 0.75, gain(2) does.
  CHECK(verify_depth_divergence(ModelParams(0.5, 1, 1, 3, 1.0), 0.75) == 2);
  // f(0.81, N=4, r=0.99) = 1.2206..., first depth past 1e6 is 70.
  CHECK(verify_depth_divergence(ModelParams(0.9, 2, 1, 4, 0.99), 1e6) == 70);
  CHECK(verify_depth_divergence(ModelParams(0.5, 1, 1, 3, 1.0), 0.0) == 1);
}

TEST_CASE("verify_depth_divergence works in log space for huge thresholds") {
  const int d = verify_depth_divergence(ModelParams(0.9, 1, 1, 3, 0.95), 1e300);
  CHECK(d > 0);
  const ModelParams probe(0.9, 1, 1, 3, 0.95);
  const double f = improvement_factor(0.9, 3, 0.95);
  CHECK(double(d) * std::log(f) > std::log(1e300));
  CHECK(double(d - 1) * std::log(f) <= std::log(1e300));
}

TEST_CASE("verify_depth_divergence rejects non-diverging parameters") {
  CHECK_THROWS_AS(verify_depth_divergence(ModelParams(0.9, 1, 1, 2, 0.5), 1.0),
                  std::domain_error);
}
