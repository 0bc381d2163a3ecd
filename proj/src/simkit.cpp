#include "dwlab/simkit.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>
#include <thread>
#include <vector>

#include "dwlab/rng.hpp"

namespace dwlab::simkit {
namespace {

constexpr std::uint32_t kTagSingle = 0;
constexpr std::uint32_t kTagMulti = 1;
constexpr std::uint32_t kTagAggregator = 2;

// Counter packing limits: step in 28 bits, agent in 8, op in 24.
constexpr int kMaxDepth = (1 << 28) - 1;
constexpr int kMaxWidth = (1 << 24) - 1;
constexpr int kMaxAgents = 256;

double draw(std::uint64_t seed, std::uint64_t trial, std::uint32_t tag,
            std::uint32_t step, std::uint32_t agent, std::uint32_t op) {
  return rng::uniform01(seed, std::uint32_t(trial), std::uint32_t(trial >> 32),
                        (tag << 28) | step, (agent << 24) | op);
}

void check_capacity(const theory::ModelParams& p) {
  if (p.depth > kMaxDepth || p.width > kMaxWidth || p.n_agents > kMaxAgents)
    throw std::invalid_argument("simulate: parameters exceed counter capacity");
}

bool single_trial(const TrialConfig& cfg, std::uint64_t trial) {
  const theory::ModelParams& p = cfg.params;
  for (int t = 0; t < p.depth; ++t)
    for (int j = 0; j < p.width; ++j)
      if (!(draw(cfg.seed, trial, kTagSingle, std::uint32_t(t), 0,
                 std::uint32_t(j)) < p.q))
        return false;
  return true;
}

bool multi_trial(const TrialConfig& cfg, std::uint64_t trial) {
  const theory::ModelParams& p = cfg.params;
  for (int t = 0; t < p.depth; ++t) {
    bool covered = false;
    for (int a = 0; a < p.n_agents && !covered; ++a) {
      bool agent_ok = true;
      for (int j = 0; j < p.width; ++j) {
        if (!(draw(cfg.seed, trial, kTagMulti, std::uint32_t(t),
                   std::uint32_t(a), std::uint32_t(j)) < p.q)) {
          agent_ok = false;
          break;
        }
      }
      covered = agent_ok;
    }
    if (!covered) return false;
  }
  // The aggregator is drawn once per trial, after all steps.
  return draw(cfg.seed, trial, kTagAggregator, 0, 0, 0) < p.r;
}

template <typename Trial>
RateEstimate run_trials(const TrialConfig& cfg, int jobs, Trial trial_fn) {
  check_capacity(cfg.params);
  if (cfg.trials == 0)
    throw std::invalid_argument("simulate: trials must be >= 1");
  if (jobs < 1) jobs = 1;

  const auto count_range = [&](std::uint64_t lo, std::uint64_t hi) {
    std::uint64_t hits = 0;
    for (std::uint64_t i = lo; i < hi; ++i)
      if (trial_fn(cfg, i)) ++hits;
    return hits;
  };

  std::uint64_t successes = 0;
  if (jobs == 1 || cfg.trials < 1024) {
    successes = count_range(0, cfg.trials);
  } else {
    std::vector<std::uint64_t> counts(std::size_t(jobs), 0);
    std::vector<std::thread> workers;
    const std::uint64_t chunk = (cfg.trials + jobs - 1) / jobs;
    for (int k = 0; k < jobs; ++k) {
      const std::uint64_t lo = std::uint64_t(k) * chunk;
      const std::uint64_t hi = std::min(cfg.trials, lo + chunk);
      if (lo >= hi) break;
      workers.emplace_back(
          [&, k, lo, hi] { counts[std::size_t(k)] = count_range(lo, hi); });
    }
    for (auto& w : workers) w.join();
    for (std::uint64_t c : counts) successes += c;
  }

  RateEstimate est;
  est.successes = successes;
  est.trials = cfg.trials;
  est.p_hat = double(successes) / double(cfg.trials);
  est.ci_halfwidth =
      3.0 * std::sqrt(est.p_hat * (1.0 - est.p_hat) / double(cfg.trials));
  return est;
}

double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Continued fraction for the regularized incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;

  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front = std::exp(a * std::log(x) + b * std::log1p(-x) -
                                log_beta(a, b));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double beta_quantile(double p, double a, double b) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (reg_inc_beta(a, b, mid) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

RateEstimate simulate_single(const TrialConfig& cfg, int jobs) {
  return run_trials(cfg, jobs,
                    [](const TrialConfig& c, std::uint64_t i) {
                      return single_trial(c, i);
                    });
}

RateEstimate simulate_multi(const TrialConfig& cfg, int jobs) {
  return run_trials(cfg, jobs,
                    [](const TrialConfig& c, std::uint64_t i) {
                      return multi_trial(c, i);
                    });
}

Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials,
                         double alpha) {
  if (trials == 0)
    throw std::invalid_argument("clopper_pearson: trials must be >= 1");
  if (successes > trials)
    throw std::invalid_argument("clopper_pearson: successes > trials");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("clopper_pearson: alpha must be in (0,1)");

  const double k = double(successes), n = double(trials);
  Interval iv;
  iv.lo = successes == 0 ? 0.0 : beta_quantile(alpha / 2.0, k, n - k + 1.0);
  iv.hi = successes == trials
              ? 1.0
              : beta_quantile(1.0 - alpha / 2.0, k + 1.0, n - k);
  return iv;
}

ComparisonReport compare_to_closed_form(const TrialConfig& cfg, int jobs,
                                        bool exact_ci) {
  ComparisonReport rep{.params = cfg.params};
  rep.trials = cfg.trials;
  rep.seed = cfg.seed;
  rep.single_est = simulate_single(cfg, jobs);
  rep.multi_est = simulate_multi(cfg, jobs);
  rep.single_closed = theory::single_success(cfg.params);
  rep.multi_closed = theory::multi_success(cfg.params);
  rep.single_abs_err = std::abs(rep.single_est.p_hat - rep.single_closed);
  rep.multi_abs_err = std::abs(rep.multi_est.p_hat - rep.multi_closed);
  rep.single_within_ci = rep.single_abs_err <= rep.single_est.ci_halfwidth;
  rep.multi_within_ci = rep.multi_abs_err <= rep.multi_est.ci_halfwidth;
  if (rep.single_est.p_hat > 0.0)
    rep.empirical_gain =
        (rep.multi_est.p_hat - rep.single_est.p_hat) / rep.single_est.p_hat;
  rep.closed_form_gain =
      (rep.multi_closed - rep.single_closed) / rep.single_closed;
  if (exact_ci) {
    rep.single_exact_ci =
        clopper_pearson(rep.single_est.successes, rep.single_est.trials);
    rep.multi_exact_ci =
        clopper_pearson(rep.multi_est.successes, rep.multi_est.trials);
  }
  return rep;
}

std::string to_json(const ComparisonReport& rep) {
  nlohmann::ordered_json j;
  j["params"] = {{"q", rep.params.q},
                 {"width", rep.params.width},
                 {"depth", rep.params.depth},
                 {"n_agents", rep.params.n_agents},
                 {"r", rep.params.r}};
  j["trials"] = rep.trials;
  j["seed"] = rep.seed;
  auto estimate = [](const RateEstimate& e) {
    return nlohmann::ordered_json{{"p_hat", e.p_hat},
                                  {"ci_halfwidth", e.ci_halfwidth},
                                  {"successes", e.successes},
                                  {"trials", e.trials}};
  };
  j["single"] = estimate(rep.single_est);
  j["single"]["closed_form"] = rep.single_closed;
  j["single"]["abs_err"] = rep.single_abs_err;
  j["single"]["within_ci"] = rep.single_within_ci;
  j["multi"] = estimate(rep.multi_est);
  j["multi"]["closed_form"] = rep.multi_closed;
  j["multi"]["abs_err"] = rep.multi_abs_err;
  j["multi"]["within_ci"] = rep.multi_within_ci;
  if (rep.empirical_gain)
    j["empirical_gain"] = *rep.empirical_gain;
  else
    j["empirical_gain"] = nullptr;
  j["closed_form_gain"] = rep.closed_form_gain;
  auto interval = [](const Interval& iv) {
    return nlohmann::ordered_json{{"lo", iv.lo}, {"hi", iv.hi}};
  };
  if (rep.single_exact_ci) j["single_exact_ci"] = interval(*rep.single_exact_ci);
  if (rep.multi_exact_ci) j["multi_exact_ci"] = interval(*rep.multi_exact_ci);
  j["pass"] = rep.pass();
  return j.dump(2);
}

}  // namespace dwlab::simkit
