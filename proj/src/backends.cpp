#include "dwlab/backends.hpp"

#include "dwlab/rng.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace dwlab::backends {

namespace {

// Candidate answers are whatever follows an "ANSWER:" marker, one per
// message, trimmed of surrounding whitespace.
std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string candidate_after_marker(const std::string& content) {
  const std::string marker = "ANSWER:";
  std::size_t pos = content.rfind(marker);
  if (pos == std::string::npos) return "";
  std::string rest = content.substr(pos + marker.size());
  std::size_t eol = rest.find('\n');
  if (eol != std::string::npos) rest = rest.substr(0, eol);
  return trim(rest);
}

// Deterministic per-generation stream: task first, then the role, then a
// (turn, agent) index. agent_index is -1 for solo/summarizer roles.
std::uint64_t generation_seed(const StochasticModel& m,
                              const GenerationRequest& req) {
  std::uint64_t task_seed = rng::derive_seed(m.seed, req.task_id);
  std::uint64_t index =
      (static_cast<std::uint64_t>(static_cast<std::uint32_t>(req.turn)) << 16) |
      static_cast<std::uint64_t>(static_cast<std::uint32_t>(req.agent_index + 2) &
                                 0xFFFFu);
  return rng::derive_seed(task_seed, req.role, index);
}

}  // namespace

void validate(const StochasticModel& m) {
  if (!(m.q > 0.0) || m.q > 1.0) {
    throw std::invalid_argument("stochastic model needs q in (0,1]");
  }
  if (m.depth < 1 || m.width < 1) {
    throw std::invalid_argument("stochastic model needs depth >= 1, width >= 1");
  }
  if (m.correct_answer == m.wrong_answer) {
    throw std::invalid_argument(
        "stochastic model needs distinct correct/wrong answers");
  }
}

ScriptedBackend::ScriptedBackend(std::string identity,
                                 std::vector<std::string> per_turn)
    : identity_(std::move(identity)), per_turn_(std::move(per_turn)) {
  if (per_turn_.empty()) {
    throw std::invalid_argument("scripted backend needs at least one output");
  }
}

std::string ScriptedBackend::generate(const GenerationRequest& request) {
  std::size_t idx = static_cast<std::size_t>(std::max(request.turn - 1, 0));
  idx = std::min(idx, per_turn_.size() - 1);
  return per_turn_[idx];
}

OracleBackend::OracleBackend(std::string identity, std::string answer)
    : identity_(std::move(identity)), answer_(std::move(answer)) {}

std::string OracleBackend::generate(const GenerationRequest&) {
  return "I worked through every step of the task and checked each result.\n"
         "ANSWER: " + answer_;
}

AdversarialBackend::AdversarialBackend(std::string identity)
    : identity_(std::move(identity)) {}

std::string AdversarialBackend::generate(const GenerationRequest&) {
  return "I don't know.";
}

SelectingSummarizer::SelectingSummarizer(std::string identity,
                                         std::string correct_answer)
    : identity_(std::move(identity)), correct_(std::move(correct_answer)) {}

std::string SelectingSummarizer::generate(const GenerationRequest& request) {
  std::vector<std::string> candidates;
  for (const debate::Message& m : request.context) {
    std::string c = candidate_after_marker(m.content);
    if (!c.empty()) candidates.push_back(std::move(c));
  }
  if (candidates.empty()) {
    return "None of the debaters committed to an answer. I don't know.";
  }
  auto hit = std::find(candidates.begin(), candidates.end(), correct_);
  const std::string& chosen = (hit != candidates.end()) ? *hit : candidates.front();
  return "Considering all candidate answers from the debate.\nANSWER: " + chosen;
}

StochasticTaskBackend::StochasticTaskBackend(std::string identity,
                                             StochasticModel model)
    : identity_(std::move(identity)), model_(std::move(model)) {
  validate(model_);
}

std::string StochasticTaskBackend::generate(const GenerationRequest& request) {
  rng::SequenceRng stream(generation_seed(model_, request), 0);
  bool all_ok = true;
  std::ostringstream flags;
  for (int step = 0; step < model_.depth; ++step) {
    bool step_ok = true;
    for (int sub = 0; sub < model_.width; ++sub) {
      // One subskill draw each; a step needs all of its subskills.
      bool sub_ok = stream.next_bernoulli(model_.q);
      step_ok = step_ok && sub_ok;
    }
    if (step > 0) flags << ',';
    flags << (step_ok ? '1' : '0');
    all_ok = all_ok && step_ok;
  }
  std::ostringstream out;
  out << "I attempted all " << model_.depth << " steps of the task.\n"
      << "steps_ok: " << flags.str() << "\n"
      << "ANSWER: " << (all_ok ? model_.correct_answer : model_.wrong_answer);
  return out.str();
}

StochasticSummarizer::StochasticSummarizer(std::string identity, double r,
                                           StochasticModel model)
    : identity_(std::move(identity)), r_(r), model_(std::move(model)) {
  validate(model_);
  if (r_ < 0.0 || r_ > 1.0) {
    throw std::invalid_argument("aggregation reliability r must lie in [0,1]");
  }
}

std::string StochasticSummarizer::generate(const GenerationRequest& request) {
  std::vector<bool> covered(static_cast<std::size_t>(model_.depth), false);
  for (const debate::Message& m : request.context) {
    std::vector<bool> ok = parse_steps_ok(m.content, model_.depth);
    for (std::size_t i = 0; i < ok.size(); ++i) {
      if (ok[i]) covered[i] = true;
    }
  }
  bool all_covered =
      std::all_of(covered.begin(), covered.end(), [](bool b) { return b; });

  // Exactly one aggregation draw per task, independent of coverage.
  rng::SequenceRng stream(
      rng::derive_seed(rng::derive_seed(model_.seed, request.task_id),
                       "aggregator"),
      0);
  bool aggregation_ok = stream.next_bernoulli(r_);

  std::ostringstream out;
  out << "Coverage across debaters: ";
  for (std::size_t i = 0; i < covered.size(); ++i) {
    if (i > 0) out << ',';
    out << (covered[i] ? '1' : '0');
  }
  out << "\nANSWER: "
      << ((all_covered && aggregation_ok) ? model_.correct_answer
                                          : model_.wrong_answer);
  return out.str();
}

std::vector<bool> parse_steps_ok(const std::string& content, int depth) {
  const std::string marker = "steps_ok:";
  std::size_t pos = content.find(marker);
  if (pos == std::string::npos) return {};
  std::size_t eol = content.find('\n', pos);
  std::string line = content.substr(pos + marker.size(),
                                    eol == std::string::npos
                                        ? std::string::npos
                                        : eol - pos - marker.size());
  std::vector<bool> out;
  std::string token;
  std::istringstream stream(line);
  while (std::getline(stream, token, ',') &&
         out.size() < static_cast<std::size_t>(depth)) {
    out.push_back(trim(token) == "1");
  }
  return out;
}

}  // namespace dwlab::backends
