#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "dwlab/rng.hpp"
#include "dwlab/simkit.hpp"
#include "dwlab/theory.hpp"

using namespace dwlab;
using simkit::TrialConfig;

namespace {

constexpr std::uint64_t kSeed = 20250816;

TrialConfig cfg(double q, int w, int d, int n, double r, std::uint64_t trials,
                std::uint64_t seed = kSeed) {
  return TrialConfig{theory::ModelParams(q, w, d, n, r), trials, seed};
}

// Intentionally wrong variant used as a mutation oracle: draws the
// aggregator on every step instead of once per trial, which estimates
// r^d * [1-(1-s)^N]^d rather than r * [...]^d.
double buggy_multi_rate(const TrialConfig& c) {
  const theory::ModelParams& p = c.params;
  std::uint64_t hits = 0;
  for (std::uint64_t trial = 0; trial < c.trials; ++trial) {
    bool ok = true;
    for (int t = 0; t < p.depth && ok; ++t) {
      bool covered = false;
      for (int a = 0; a < p.n_agents && !covered; ++a) {
        bool agent_ok = true;
        for (int j = 0; j < p.width; ++j) {
          if (!(rng::uniform01(c.seed, std::uint32_t(trial),
                               std::uint32_t(trial >> 32),
                               (1u << 28) | std::uint32_t(t),
                               (std::uint32_t(a) << 24) | std::uint32_t(j)) <
                p.q)) {
            agent_ok = false;
            break;
          }
        }
        covered = agent_ok;
      }
      if (!covered) {
        ok = false;
        break;
      }
      // wrong: one reliability draw per step
      if (!(rng::uniform01(c.seed, std::uint32_t(trial),
                           std::uint32_t(trial >> 32),
                           (2u << 28) | std::uint32_t(t), 0) < p.r))
        ok = false;
    }
    if (ok) ++hits;
  }
  return double(hits) / double(c.trials);
}

}  // namespace

TEST_CASE("simulations are deterministic and partition-invariant") {
  const TrialConfig c = cfg(0.8, 2, 3, 3, 0.9, 20000);
  const auto s1 = simkit::simulate_single(c, 1);
  const auto s4 = simkit::simulate_single(c, 4);
  CHECK(s1.successes == s4.successes);
  CHECK(s1.p_hat == s4.p_hat);
  const auto m1 = simkit::simulate_multi(c, 1);
  const auto m7 = simkit::simulate_multi(c, 7);
  CHECK(m1.successes == m7.successes);

  const auto s1b = simkit::simulate_single(c, 1);
  CHECK(s1.successes == s1b.successes);
}

TEST_CASE("different seeds give different samples") {
  const auto a = simkit::simulate_single(cfg(0.8, 2, 3, 3, 0.9, 20000, 1));
  const auto b = simkit::simulate_single(cfg(0.8, 2, 3, 3, 0.9, 20000, 2));
  CHECK(a.successes != b.successes);
}

TEST_CASE("single simulation matches the closed form within 3 sigma") {
  for (double q : {0.5, 0.9}) {
    for (int w : {1, 3}) {
      for (int d : {1, 4}) {
        const TrialConfig c = cfg(q, w, d, 2, 1.0, 100000);
        const auto est = simkit::simulate_single(c, 4);
        const double closed = theory::single_success(c.params);
        CHECK(std::abs(est.p_hat - closed) <= est.ci_halfwidth);
      }
    }
  }
}

TEST_CASE("near-certain micro-operations yield a near-one rate") {
  const auto est = simkit::simulate_single(cfg(0.999999, 1, 1, 2, 1.0, 10000));
  CHECK(est.p_hat >= 0.999);
}

TEST_CASE("multi simulation matches the closed form within 3 sigma") {
  const TrialConfig pinned = cfg(0.9, 1, 2, 2, 1.0, 100000);
  const auto est = simkit::simulate_multi(pinned, 4);
  CHECK(std::abs(est.p_hat - 0.9801) <= est.ci_halfwidth);

  for (double r : {0.8, 1.0}) {
    for (int n : {2, 5}) {
      const TrialConfig c = cfg(0.7, 2, 3, n, r, 100000);
      const auto e = simkit::simulate_multi(c, 4);
      CHECK(std::abs(e.p_hat - theory::multi_success(c.params)) <=
            e.ci_halfwidth);
    }
  }
}

TEST_CASE("per-step aggregator mutation is caught by the closed form") {
  // r^3 vs r scaling differs by 2x at r = 0.7; 1e5 trials resolve it easily.
  const TrialConfig c = cfg(0.9, 1, 3, 2, 0.7, 100000);
  const double buggy = buggy_multi_rate(c);
  const double closed = theory::multi_success(c.params);
  const auto honest = simkit::simulate_multi(c, 4);
  CHECK(std::abs(honest.p_hat - closed) <= honest.ci_halfwidth);
  CHECK(std::abs(buggy - closed) > 10.0 * honest.ci_halfwidth);
}

TEST_CASE("comparison report flags agreement and carries both gains") {
  const auto rep = compare_to_closed_form(cfg(0.9, 1, 2, 3, 0.95, 100000), 4);
  CHECK(rep.pass());
  CHECK(rep.single_within_ci);
  CHECK(rep.multi_within_ci);
  REQUIRE(rep.empirical_gain.has_value());
  CHECK(std::abs(*rep.empirical_gain - rep.closed_form_gain) < 0.05);
  CHECK(rep.closed_form_gain ==
        doctest::Approx((rep.multi_closed - rep.single_closed) /
                        rep.single_closed));
}

TEST_CASE("zero observed single successes leave the gain undefined") {
  // s^d = (0.01^3)^3 = 1e-18; 1000 trials will never hit it.
  const auto rep = compare_to_closed_form(cfg(0.01, 3, 3, 2, 1.0, 1000));
  CHECK(rep.single_est.successes == 0);
  CHECK_FALSE(rep.empirical_gain.has_value());
  CHECK(rep.closed_form_gain > 0.0);
  const std::string js = simkit::to_json(rep);
  CHECK(js.find("\"empirical_gain\": null") != std::string::npos);
}

TEST_CASE("clopper_pearson matches published spot values") {
  // alpha = 0.05, n = 10: textbook endpoints.
  const auto zero = simkit::clopper_pearson(0, 10, 0.05);
  CHECK(zero.lo == 0.0);
  CHECK(zero.hi == doctest::Approx(0.30849710781876083).epsilon(1e-9));
  const auto full = simkit::clopper_pearson(10, 10, 0.05);
  CHECK(full.lo == doctest::Approx(0.6915028921812392).epsilon(1e-9));
  CHECK(full.hi == 1.0);

  const auto mid = simkit::clopper_pearson(5, 10, 0.05);
  CHECK(mid.lo == doctest::Approx(0.187086).epsilon(1e-4));
  CHECK(mid.hi == doctest::Approx(0.812914).epsilon(1e-4));
  CHECK_THROWS_AS(simkit::clopper_pearson(5, 0), std::invalid_argument);
  CHECK_THROWS_AS(simkit::clopper_pearson(11, 10), std::invalid_argument);
}

TEST_CASE("exact intervals cover the closed form on a healthy cell") {
  const auto rep =
      compare_to_closed_form(cfg(0.9, 2, 2, 3, 0.9, 50000), 4, true);
  REQUIRE(rep.single_exact_ci.has_value());
  REQUIRE(rep.multi_exact_ci.has_value());
  CHECK(rep.single_exact_ci->lo <= rep.single_closed);
  CHECK(rep.single_exact_ci->hi >= rep.single_closed);
  CHECK(rep.multi_exact_ci->lo <= rep.multi_closed);
  CHECK(rep.multi_exact_ci->hi >= rep.multi_closed);
}

TEST_CASE("simulation rejects parameters beyond counter capacity") {
  CHECK_THROWS_AS(
      simkit::simulate_multi(cfg(0.9, 1, 1, 300, 1.0, 10)),
      std::invalid_argument);
  TrialConfig no_trials = cfg(0.9, 1, 1, 2, 1.0, 1);
  no_trials.trials = 0;
  CHECK_THROWS_AS(simkit::simulate_single(no_trials), std::invalid_argument);
}

TEST_CASE("canonical grid agreement at desk scale") {
  // 3 q-levels x 3 shapes x 2 panel sizes, 1e5 trials each; every cell must
  // sit inside its own 3-sigma band for both systems at this seed.
  int cells = 0, ok = 0;
  for (double q : {0.5, 0.7, 0.9}) {
    for (auto [d, w] : {std::pair{1, 1}, {2, 2}, {4, 3}}) {
      for (int n : {2, 3}) {
        const auto rep =
            compare_to_closed_form(cfg(q, w, d, n, 0.95, 100000), 4);
        ++cells;
        if (rep.pass()) ++ok;
      }
    }
  }
  CHECK(cells == 18);
  CHECK(ok == cells);
}
