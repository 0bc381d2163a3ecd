#pragma once

#include <span>
#include <utility>
#include <vector>

namespace dwlab::theory {

// Task/system parameters for the closed-form collaboration model.
// A task is d sequential steps; each step is w micro-operations that each
// succeed independently with probability q. A panel of n_agents attempts
// every step redundantly and an aggregator with reliability r picks the
// correct candidate when one exists.
struct ModelParams {
  double q;      // per-micro-operation success probability, in (0,1)
  int width;     // w >= 1
  int depth;     // d >= 1
  int n_agents;  // N >= 2
  double r;      // aggregator reliability, in (0,1]

  // Throws std::invalid_argument when any bound is violated.
  ModelParams(double q, int width, int depth, int n_agents, double r);
};

// q^w: probability that one agent completes a single step of width w.
double per_step_success(double q, int width);

// Product of per-micro-operation probabilities for a heterogeneous step.
// Every entry must lie in (0,1); throws std::invalid_argument otherwise.
double per_step_success_hetero(std::span<const double> qs);

// Solo-agent task success: s(w)^d. Strictly within (0,1).
double single_success(const ModelParams& p);

// Panel task success: r * [1 - (1-s(w))^N]^d, the aggregator applied once.
double multi_success(const ModelParams& p);

// f(s) = r * [1 - (1-s)^N] / s, the relative-improvement factor. The model's
// benefit assumption is f(s) > 1.
double improvement_factor(double s, int n_agents, double r);

struct GainAssessment {
  double gain;         // f(s)^d - 1, computed as expm1(d * log f)
  bool assumption_ok;  // r * [1 - (1-s)^N] > s
  double per_step;     // s = q^w used for the assessment
};

// Relative gain of the panel over the solo agent, with the benefit
// assumption evaluated rather than enforced: callers flag-and-exclude
// rather than fail on assumption_ok == false.
GainAssessment performance_gain(const ModelParams& p);

// Width-saturation limit of the gain: (r*N)^d - 1.
double width_limit_gain(int depth, int n_agents, double r);

// Inclusive integer range.
struct IntRange {
  int lo;
  int hi;
};

struct GridPoint {
  int depth;
  int width;
  double gain;
  bool assumption_ok;
};

struct MonotonicityViolation {
  GridPoint from;
  GridPoint to;
};

struct MonotonicityReport {
  std::vector<GridPoint> points;
  std::vector<MonotonicityViolation> violations;
  // (depth, width) points excluded because f(s) <= 1 there.
  std::vector<std::pair<int, int>> assumption_violated;
  int comparisons = 0;

  bool passed() const { return violations.empty(); }
};

// Checks strict gain increase along +1 depth and +1 width moves at every
// assumption-satisfying grid point. Depth/width from `base` are ignored;
// the ranges define the grid. A single-point grid passes vacuously.
MonotonicityReport verify_monotonicity(const ModelParams& base,
                                       IntRange depth_range,
                                       IntRange width_range);

struct SaturationReport {
  double limit = 0.0;            // (r*N)^d - 1
  bool converged = false;        // |gain(w_max) - limit| < tol
  int first_width_within_tol = -1;
  double final_abs_err = 0.0;    // |gain(w_max) - limit|
  // |gain(w) - limit| sampled on w = 1, 2, 4, ... and w_max.
  std::vector<std::pair<int, double>> trace;
  bool monotone_decreasing = false;
};

// Width saturation toward (rN)^d - 1. Not reaching tol by w_max reports
// converged == false; it is not an error.
SaturationReport verify_width_saturation(const ModelParams& base, int w_max,
                                         double tol);

// Smallest depth whose gain strictly exceeds `threshold`, holding the other
// parameters of `base` fixed. Requires f(s) > 1; throws std::domain_error
// otherwise since the gain does not diverge.
int verify_depth_divergence(const ModelParams& base, double threshold);

}  // namespace dwlab::theory
