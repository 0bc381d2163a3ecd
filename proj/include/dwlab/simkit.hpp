#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "dwlab/theory.hpp"

namespace dwlab::simkit {

struct TrialConfig {
  theory::ModelParams params;
  std::uint64_t trials;
  std::uint64_t seed;
};

struct RateEstimate {
  double p_hat = 0.0;
  double ci_halfwidth = 0.0;  // 3 * sqrt(p_hat*(1-p_hat)/trials)
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
};

// Every micro-operation draw is addressed by (seed, trial, step, agent, op)
// through the counter engine, so results are identical whether trials run
// sequentially or partitioned across `jobs` workers.
RateEstimate simulate_single(const TrialConfig& cfg, int jobs = 1);
RateEstimate simulate_multi(const TrialConfig& cfg, int jobs = 1);

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Two-sided exact binomial interval at confidence 1 - alpha. The default
// alpha matches the 3-sigma normal band used by RateEstimate.
inline constexpr double kThreeSigmaAlpha = 0.0026997960632601866;
Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials,
                         double alpha = kThreeSigmaAlpha);

struct ComparisonReport {
  theory::ModelParams params;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;

  RateEstimate single_est{};
  RateEstimate multi_est{};
  double single_closed = 0.0;
  double multi_closed = 0.0;
  double single_abs_err = 0.0;
  double multi_abs_err = 0.0;
  bool single_within_ci = false;
  bool multi_within_ci = false;

  // (multi_hat - single_hat) / single_hat; absent when single_hat == 0.
  std::optional<double> empirical_gain{};
  // (S_multi - S_single) / S_single, the closed-form counterpart.
  double closed_form_gain = 0.0;

  // Exact intervals, filled only when requested.
  std::optional<Interval> single_exact_ci{};
  std::optional<Interval> multi_exact_ci{};

  bool pass() const { return single_within_ci && multi_within_ci; }
};

ComparisonReport compare_to_closed_form(const TrialConfig& cfg, int jobs = 1,
                                        bool exact_ci = false);

// Pretty JSON rendering of the report (stable key order).
std::string to_json(const ComparisonReport& report);

}  // namespace dwlab::simkit
