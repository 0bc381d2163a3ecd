#pragma once

// Experiment loop: runs the single and/or multi system over a labeled task
// list, grades the outputs through a caller-supplied scorer, and persists
// one JSON-lines record per (cell, task, system) unit.
//
// The records file doubles as the completed-unit ledger: records are
// appended in dataset order regardless of worker completion order, so a
// seeded synthetic run produces byte-identical records under any --jobs
// setting, and an interrupted run resumes without duplicating units.
// Timings are reported in the return value only; they never enter the
// records file, which keeps it byte-reproducible.

#include "dwlab/debate.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace dwlab::runner {

struct TaskUnit {
  std::string cell_id;  // e.g. "d2w3" or "k8q2"
  std::string task_id;  // unique within the dataset
  std::string prompt;   // fully rendered task question
};

enum class SystemKind { kSingle, kMulti };

std::string to_string(SystemKind kind);

// Per-task backend bundle. Factories may return shared stateless backends
// or fresh per-task instances; generate() must be thread-safe.
struct TaskBackends {
  std::shared_ptr<debate::AgentBackend> single;
  std::vector<std::shared_ptr<debate::AgentBackend>> debaters;
  std::shared_ptr<debate::AgentBackend> summarizer;
};

using BackendFactory = std::function<TaskBackends(const TaskUnit&)>;

// Maps the system's final answer text to a score. Must be thread-safe.
using Scorer = std::function<double(const TaskUnit&, const std::string& answer)>;

struct CellwiseConfig {
  std::vector<SystemKind> systems{SystemKind::kSingle, SystemKind::kMulti};
  debate::DebateConfig debate;
  int jobs = 1;
  long max_tasks = -1;  // <0 means the whole dataset
  std::filesystem::path records_path;      // required
  std::filesystem::path transcripts_path;  // empty: skip transcript persistence
  bool resume = false;  // false + existing records file -> error
};

struct ResultRecord {
  std::string cell_id;
  std::string task_id;
  std::string system;  // "single" | "multi"
  double score = 0.0;
  std::string answer;
  bool failed = false;
  std::string error;
};

std::string to_json_line(const ResultRecord& r);
ResultRecord record_from_json(const std::string& line);

struct CellwiseReport {
  long n_tasks = 0;      // tasks in scope after max_tasks
  long n_units = 0;      // task x system units in scope
  long n_completed = 0;  // units newly executed by this call
  long n_skipped = 0;    // units already present in the ledger
  long n_failed = 0;     // newly executed units that recorded a failure
  double wall_seconds = 0.0;
};

CellwiseReport run_cellwise(const std::vector<TaskUnit>& tasks,
                            const CellwiseConfig& cfg,
                            const BackendFactory& factory,
                            const Scorer& scorer);

}  // namespace dwlab::runner
