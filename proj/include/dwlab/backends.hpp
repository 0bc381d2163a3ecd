#pragma once

// Synthetic agent backends. All of them are pure functions of the
// GenerationRequest plus their construction parameters, which makes every
// run bit-reproducible and safe to share across threads.

#include "dwlab/debate.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dwlab::backends {

using debate::AgentBackend;
using debate::GenerationRequest;

// Fixed per-turn outputs, identical for every task. Turns beyond the last
// scripted entry repeat the final entry.
class ScriptedBackend : public AgentBackend {
 public:
  ScriptedBackend(std::string identity, std::vector<std::string> per_turn);
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string identity_;
  std::vector<std::string> per_turn_;
};

// Always reaches the known-correct answer.
class OracleBackend : public AgentBackend {
 public:
  OracleBackend(std::string identity, std::string answer);
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string identity_;
  std::string answer_;
};

// Never commits to an answer; graded unparseable downstream.
class AdversarialBackend : public AgentBackend {
 public:
  explicit AdversarialBackend(std::string identity);
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string identity_;
};

// Summarizer that only selects among candidate answers present in its
// context: it emits the known-correct candidate when some debater proposed
// it, otherwise the first candidate, otherwise no answer at all.
class SelectingSummarizer : public AgentBackend {
 public:
  SelectingSummarizer(std::string identity, std::string correct_answer);
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string identity_;
  std::string correct_;
};

// ---------------------------------------------------------------- model

// Parameters of the stochastic step/subskill task model shared by the
// stochastic debater and summarizer below: a task has `depth` steps of
// `width` independent subskills each; a subskill succeeds with probability
// q, a step succeeds iff all its subskills do, and an attempt reaches the
// correct answer iff all steps succeed.
struct StochasticModel {
  double q = 0.9;
  int depth = 1;
  int width = 1;
  std::string correct_answer;
  std::string wrong_answer;
  std::uint64_t seed = 0;
};

void validate(const StochasticModel& m);

// Debater/solo agent under the stochastic model. Each generation draws
// depth x width subskill Bernoullis from a stream derived from
// (seed, task id, role, turn, agent index), reports per-step outcomes on a
// machine-readable "steps_ok:" line, and answers correctly iff every step
// succeeded. Distinct turns and agents draw independently.
class StochasticTaskBackend : public AgentBackend {
 public:
  StochasticTaskBackend(std::string identity, StochasticModel model);
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string identity_;
  StochasticModel model_;
};

// Aggregator under the stochastic model: a step counts as covered when any
// context message's "steps_ok:" line marks it successful; the summary is
// correct iff every step is covered AND one Bernoulli(r) aggregation draw
// (per task) succeeds. Together with N StochasticTaskBackend debaters this
// reproduces the redundancy model r * [1 - (1-s)^N]^depth end to end.
class StochasticSummarizer : public AgentBackend {
 public:
  StochasticSummarizer(std::string identity, double r, StochasticModel model);
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& request) override;

 private:
  std::string identity_;
  double r_;
  StochasticModel model_;
};

// Parses one message body for a "steps_ok:" line; returns per-step flags
// (empty when the marker is absent). Exposed for tests.
std::vector<bool> parse_steps_ok(const std::string& content, int depth);

}  // namespace dwlab::backends
