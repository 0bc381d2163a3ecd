#include "dwlab/theory.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dwlab::theory {
namespace {

// 1 - (1-s)^N evaluated in log space so tiny s (deep width sweeps) keeps
// full relative precision.
double coverage(double s, int n_agents) {
  return -std::expm1(double(n_agents) * std::log1p(-s));
}

double gain_from_step(double s, int n_agents, double r, int depth) {
  const double f = improvement_factor(s, n_agents, r);
  return std::expm1(double(depth) * std::log(f));
}

}  // namespace

ModelParams::ModelParams(double q, int width, int depth, int n_agents,
                         double r)
    : q(q), width(width), depth(depth), n_agents(n_agents), r(r) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("ModelParams: q must be in (0,1)");
  if (width < 1) throw std::invalid_argument("ModelParams: width must be >= 1");
  if (depth < 1) throw std::invalid_argument("ModelParams: depth must be >= 1");
  if (n_agents < 2)
    throw std::invalid_argument("ModelParams: n_agents must be >= 2");
  if (!(r > 0.0 && r <= 1.0))
    throw std::invalid_argument("ModelParams: r must be in (0,1]");
}

double per_step_success(double q, int width) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("per_step_success: q must be in (0,1)");
  if (width < 1)
    throw std::invalid_argument("per_step_success: width must be >= 1");
  return std::pow(q, double(width));
}

double per_step_success_hetero(std::span<const double> qs) {
  if (qs.empty())
    throw std::invalid_argument("per_step_success_hetero: empty step");
  double s = 1.0;
  for (double q : qs) {
    if (!(q > 0.0 && q < 1.0))
      throw std::invalid_argument(
          "per_step_success_hetero: probabilities must be in (0,1)");
    s *= q;
  }
  return s;
}

double single_success(const ModelParams& p) {
  return std::pow(per_step_success(p.q, p.width), double(p.depth));
}

double multi_success(const ModelParams& p) {
  const double s = per_step_success(p.q, p.width);
  return p.r * std::pow(coverage(s, p.n_agents), double(p.depth));
}

double improvement_factor(double s, int n_agents, double r) {
  if (!(s > 0.0 && s < 1.0))
    throw std::invalid_argument("improvement_factor: s must be in (0,1)");
  if (n_agents < 2)
    throw std::invalid_argument("improvement_factor: n_agents must be >= 2");
  if (!(r > 0.0 && r <= 1.0))
    throw std::invalid_argument("improvement_factor: r must be in (0,1]");
  return r * coverage(s, n_agents) / s;
}

GainAssessment performance_gain(const ModelParams& p) {
  const double s = per_step_success(p.q, p.width);
  const double f = improvement_factor(s, p.n_agents, p.r);
  return GainAssessment{std::expm1(double(p.depth) * std::log(f)), f > 1.0, s};
}

double width_limit_gain(int depth, int n_agents, double r) {
  if (depth < 1)
    throw std::invalid_argument("width_limit_gain: depth must be >= 1");
  if (n_agents < 2)
    throw std::invalid_argument("width_limit_gain: n_agents must be >= 2");
  if (!(r > 0.0 && r <= 1.0))
    throw std::invalid_argument("width_limit_gain: r must be in (0,1]");
  return std::expm1(double(depth) * std::log(r * double(n_agents)));
}

MonotonicityReport verify_monotonicity(const ModelParams& base,
                                       IntRange depth_range,
                                       IntRange width_range) {
  if (depth_range.lo < 1 || depth_range.hi < depth_range.lo)
    throw std::invalid_argument("verify_monotonicity: bad depth range");
  if (width_range.lo < 1 || width_range.hi < width_range.lo)
    throw std::invalid_argument("verify_monotonicity: bad width range");

  MonotonicityReport report;
  const int n_d = depth_range.hi - depth_range.lo + 1;
  const int n_w = width_range.hi - width_range.lo + 1;
  report.points.reserve(std::size_t(n_d) * std::size_t(n_w));

  auto at = [&](int di, int wi) -> const GridPoint& {
    return report.points[std::size_t(di) * std::size_t(n_w) + std::size_t(wi)];
  };

  for (int d = depth_range.lo; d <= depth_range.hi; ++d) {
    for (int w = width_range.lo; w <= width_range.hi; ++w) {
      const ModelParams p(base.q, w, d, base.n_agents, base.r);
      const GainAssessment g = performance_gain(p);
      report.points.push_back(GridPoint{d, w, g.gain, g.assumption_ok});
      if (!g.assumption_ok) report.assumption_violated.emplace_back(d, w);
    }
  }

  for (int di = 0; di < n_d; ++di) {
    for (int wi = 0; wi < n_w; ++wi) {
      const GridPoint& here = at(di, wi);
      if (!here.assumption_ok) continue;
      for (const GridPoint* next :
           {di + 1 < n_d ? &at(di + 1, wi) : nullptr,
            wi + 1 < n_w ? &at(di, wi + 1) : nullptr}) {
        if (next == nullptr || !next->assumption_ok) continue;
        ++report.comparisons;
        if (!(next->gain > here.gain))
          report.violations.push_back(MonotonicityViolation{here, *next});
      }
    }
  }
  return report;
}

SaturationReport verify_width_saturation(const ModelParams& base, int w_max,
                                         double tol) {
  if (w_max < 1)
    throw std::invalid_argument("verify_width_saturation: w_max must be >= 1");
  if (!(tol > 0.0))
    throw std::invalid_argument("verify_width_saturation: tol must be > 0");

  SaturationReport report;
  report.limit = width_limit_gain(base.depth, base.n_agents, base.r);

  auto abs_err = [&](int w) {
    const double s = per_step_success(base.q, w);
    return std::abs(gain_from_step(s, base.n_agents, base.r, base.depth) -
                    report.limit);
  };

  for (int w = 1; w < w_max; w *= 2) report.trace.emplace_back(w, abs_err(w));
  report.trace.emplace_back(w_max, abs_err(w_max));

  report.monotone_decreasing = true;
  for (std::size_t i = 1; i < report.trace.size(); ++i) {
    // Allow float jitter once the error sits at the noise floor.
    if (report.trace[i].second >
        report.trace[i - 1].second * (1.0 + 1e-9) + 1e-15) {
      report.monotone_decreasing = false;
      break;
    }
  }

  report.final_abs_err = report.trace.back().second;
  report.converged = report.final_abs_err < tol;
  if (report.converged) {
    for (int w = 1; w <= w_max; ++w) {
      if (abs_err(w) < tol) {
        report.first_width_within_tol = w;
        break;
      }
    }
  }
  return report;
}

int verify_depth_divergence(const ModelParams& base, double threshold) {
  if (threshold < 0.0)
    throw std::invalid_argument(
        "verify_depth_divergence: threshold must be >= 0");
  const double s = per_step_success(base.q, base.width);
  const double f = improvement_factor(s, base.n_agents, base.r);
  if (!(f > 1.0))
    throw std::domain_error(
        "verify_depth_divergence: f(s) <= 1, gain does not diverge");

  // Strictly-exceeds in log space: d * log f > log1p(threshold). Jump close
  // with the closed form, then settle the boundary by scanning.
  const double log_f = std::log(f);
  const double target = std::log1p(threshold);
  long long d = std::max(1LL, (long long)std::floor(target / log_f) - 2);
  while (double(d) * log_f <= target) ++d;
  if (d > std::numeric_limits<int>::max())
    throw std::overflow_error("verify_depth_divergence: depth overflow");
  return int(d);
}

}  // namespace dwlab::theory
