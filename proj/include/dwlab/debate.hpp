#pragma once

// Orchestration engine for single-agent chain-of-thought runs and
// multi-agent debate with a summarizer, over pluggable agent backends.
//
// The orchestrator owns turn structure and context assembly only; it never
// parses domain content. Answer grading belongs to the task family.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace dwlab::debate {

// ------------------------------------------------------------------ types

struct Message {
  std::string agent;   // identity label of the author
  std::string content;
  bool self = false;   // true when presented to its own author as context
};

// Everything a backend may condition on. Synthetic backends derive their
// randomness from (seed, task_id, turn, agent_index, role), which makes
// every generation a pure function of the request.
struct GenerationRequest {
  std::string task_id;
  int turn = 1;        // 1-based; summarizer runs at turn = turns + 1
  int agent_index = 0; // 0-based among debaters; -1 for summarizer/single
  std::string role;    // "single" | "debater" | "summarizer"
  std::string prompt;  // rendered role instruction including the question
  std::vector<Message> context;  // prior-turn messages, self flagged
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AgentBackend {
 public:
  virtual ~AgentBackend() = default;
  virtual std::string identity() const = 0;
  virtual bool deterministic() const = 0;
  virtual std::string generate(const GenerationRequest& request) = 0;
};

// Per-role prompt templates. "{question}" is substituted with the task
// prompt. Shipped as a versioned data file (data/prompts.json); the
// compiled-in copy must stay in lockstep with it.
struct PromptTemplates {
  std::string version;
  std::string single;        // chain-of-thought instruction
  std::string debate_open;   // turn-1 debater instruction
  std::string debate_revise; // turn-2+ critique/refine instruction
  std::string summarize;     // aggregator instruction
};

PromptTemplates builtin_templates();
PromptTemplates load_templates(const std::filesystem::path& path);
std::string render_template(const std::string& tpl, const std::string& question);

struct DebateConfig {
  int n_agents = 3;  // debaters, excluding the summarizer; >= 2
  int turns = 2;     // >= 1
  PromptTemplates templates = builtin_templates();
  int jobs = 1;      // in-turn generation parallelism
};

// Parity guard for runs meant to mirror the reference experiment scale:
// total agents including the summarizer must lie in [4, 6].
void validate_parity(const DebateConfig& cfg);

struct TurnRecord {
  std::vector<Message> messages;  // ordered by agent index
};

struct DebateTranscript {
  std::string task_id;
  std::vector<TurnRecord> turns;
  std::string summary;       // final aggregator message ("" if failed earlier)
  std::string final_answer;  // extracted answer text (summary by default)
  bool failed = false;
  int failed_turn = 0;       // 1-based turn of first failure; turns+1 = summary
  int failed_agent = -1;     // debater index, or -1 for the summarizer
  std::string failed_role;   // "debater" | "summarizer"
  std::string error;
};

struct SingleResult {
  std::string task_id;
  std::string trace;   // the full generation
  std::string answer;  // extracted answer text (trace by default)
};

// Optional domain-side answer extraction; the default keeps the raw text so
// task-family graders can parse it downstream.
using AnswerExtractor = std::function<std::string(const std::string&)>;

// ------------------------------------------------------------------- ops

// One chain-of-thought generation. Backend failures are surfaced as
// BackendError tagged with the task id.
SingleResult run_single(const std::string& task_prompt, AgentBackend& backend,
                        const PromptTemplates& templates,
                        const std::string& task_id,
                        const AnswerExtractor& extract = nullptr);

// Full debate: turn 1 independent; turns 2..T condition each debater on its
// own prior message (marked self) plus all other debaters' prior-turn
// messages; then the summarizer reads all final-turn messages and emits the
// final answer. Backend failures mark the transcript failed at the first
// (turn, lowest agent index) and preserve the partial transcript.
DebateTranscript run_debate(
    const std::string& task_prompt, const DebateConfig& cfg,
    const std::vector<std::shared_ptr<AgentBackend>>& debaters,
    AgentBackend& summarizer, const std::string& task_id,
    const AnswerExtractor& extract = nullptr);

// --------------------------------------------------------- persistence

std::string to_json_line(const DebateTranscript& t);
DebateTranscript transcript_from_json(const std::string& line);

}  // namespace dwlab::debate
