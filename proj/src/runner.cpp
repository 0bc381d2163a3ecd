#include "dwlab/runner.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <fstream>
#include <set>
#include <stdexcept>
#include <thread>
#include <utility>

namespace dwlab::runner {

namespace {

using nlohmann::ordered_json;

std::string ledger_key(const std::string& task_id, const std::string& system) {
  return task_id + ":" + system;
}

// One schedulable unit plus its outputs.
struct Unit {
  const TaskUnit* task = nullptr;
  SystemKind kind = SystemKind::kSingle;
  ResultRecord record;
  std::string transcript_line;  // non-empty only for completed multi units
};

// Reads the completed-unit ledger. A trailing partial line (from an
// interrupted append) is truncated away so the file ends on a record
// boundary before new appends land.
std::set<std::string> scan_ledger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open records file: " + path.string());
  }
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  in.close();

  std::size_t keep = content.rfind('\n');
  keep = (keep == std::string::npos) ? 0 : keep + 1;
  if (keep < content.size()) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(keep));
    content.resize(keep);
  }

  std::set<std::string> done;
  std::size_t start = 0;
  while (start < content.size()) {
    std::size_t end = content.find('\n', start);
    std::string line = content.substr(start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    ResultRecord r = record_from_json(line);  // corrupt line -> throws
    done.insert(ledger_key(r.task_id, r.system));
  }
  return done;
}

void execute_unit(Unit& unit, const CellwiseConfig& cfg,
                  const BackendFactory& factory, const Scorer& scorer) {
  const TaskUnit& task = *unit.task;
  ResultRecord& rec = unit.record;
  rec.cell_id = task.cell_id;
  rec.task_id = task.task_id;
  rec.system = to_string(unit.kind);
  try {
    TaskBackends backends = factory(task);
    if (unit.kind == SystemKind::kSingle) {
      if (!backends.single) {
        throw std::runtime_error("backend factory returned no single backend");
      }
      debate::SingleResult res = debate::run_single(
          task.prompt, *backends.single, cfg.debate.templates, task.task_id);
      rec.answer = res.answer;
      rec.score = scorer(task, rec.answer);
    } else {
      if (!backends.summarizer) {
        throw std::runtime_error("backend factory returned no summarizer");
      }
      debate::DebateTranscript t =
          debate::run_debate(task.prompt, cfg.debate, backends.debaters,
                             *backends.summarizer, task.task_id);
      if (!cfg.transcripts_path.empty()) {
        unit.transcript_line = debate::to_json_line(t);
      }
      if (t.failed) {
        rec.failed = true;
        rec.error = t.error;
        rec.score = 0.0;
      } else {
        rec.answer = t.final_answer;
        rec.score = scorer(task, rec.answer);
      }
    }
  } catch (const std::exception& e) {
    rec.failed = true;
    rec.error = e.what();
    rec.score = 0.0;
    rec.answer.clear();
  }
}

}  // namespace

std::string to_string(SystemKind kind) {
  return kind == SystemKind::kSingle ? "single" : "multi";
}

std::string to_json_line(const ResultRecord& r) {
  ordered_json j;
  j["cell"] = r.cell_id;
  j["task"] = r.task_id;
  j["system"] = r.system;
  j["score"] = r.score;
  j["answer"] = r.answer;
  j["failed"] = r.failed;
  if (r.failed) j["error"] = r.error;
  return j.dump();
}

ResultRecord record_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  ResultRecord r;
  r.cell_id = j.at("cell").get<std::string>();
  r.task_id = j.at("task").get<std::string>();
  r.system = j.at("system").get<std::string>();
  r.score = j.at("score").get<double>();
  r.answer = j.at("answer").get<std::string>();
  r.failed = j.at("failed").get<bool>();
  if (r.failed) r.error = j.at("error").get<std::string>();
  return r;
}

CellwiseReport run_cellwise(const std::vector<TaskUnit>& tasks,
                            const CellwiseConfig& cfg,
                            const BackendFactory& factory,
                            const Scorer& scorer) {
  auto t0 = std::chrono::steady_clock::now();

  if (cfg.records_path.empty()) {
    throw std::invalid_argument("records_path is required");
  }
  if (cfg.systems.empty()) {
    throw std::invalid_argument("at least one system must be selected");
  }
  if (cfg.jobs < 1) {
    throw std::invalid_argument("jobs must be >= 1");
  }
  {
    std::set<std::string> uniq;
    for (const TaskUnit& t : tasks) {
      if (!uniq.insert(t.task_id).second) {
        throw std::invalid_argument("duplicate task id: " + t.task_id);
      }
    }
  }

  // Outputs are write-once: an existing records file is only touched when
  // the caller explicitly resumes into it.
  std::set<std::string> done;
  const bool exists = std::filesystem::exists(cfg.records_path);
  if (exists && !cfg.resume) {
    throw std::runtime_error("records file already exists (pass resume to continue): " +
                             cfg.records_path.string());
  }
  if (exists) done = scan_ledger(cfg.records_path);

  if (cfg.records_path.has_parent_path()) {
    std::filesystem::create_directories(cfg.records_path.parent_path());
  }
  if (!cfg.transcripts_path.empty() && cfg.transcripts_path.has_parent_path()) {
    std::filesystem::create_directories(cfg.transcripts_path.parent_path());
  }

  CellwiseReport report;
  const long n_tasks =
      (cfg.max_tasks >= 0)
          ? std::min<long>(cfg.max_tasks, static_cast<long>(tasks.size()))
          : static_cast<long>(tasks.size());
  report.n_tasks = n_tasks;

  // Build the pending unit list in dataset order: tasks outer, systems inner.
  std::vector<Unit> pending;
  for (long i = 0; i < n_tasks; ++i) {
    for (SystemKind kind : cfg.systems) {
      ++report.n_units;
      if (done.count(ledger_key(tasks[static_cast<std::size_t>(i)].task_id,
                                to_string(kind))) > 0) {
        ++report.n_skipped;
        continue;
      }
      Unit u;
      u.task = &tasks[static_cast<std::size_t>(i)];
      u.kind = kind;
      pending.push_back(std::move(u));
    }
  }

  std::ofstream records(cfg.records_path, std::ios::binary | std::ios::app);
  if (!records) {
    throw std::runtime_error("cannot write records file: " +
                             cfg.records_path.string());
  }
  std::ofstream transcripts;
  if (!cfg.transcripts_path.empty()) {
    transcripts.open(cfg.transcripts_path, std::ios::binary | std::ios::app);
    if (!transcripts) {
      throw std::runtime_error("cannot write transcripts file: " +
                               cfg.transcripts_path.string());
    }
  }

  // Batched execution: compute a batch in parallel, then commit it in
  // dataset order. Batch boundaries affect flush timing only, never
  // content or ordering, so output bytes are independent of jobs.
  const std::size_t batch_size =
      static_cast<std::size_t>(std::max(cfg.jobs, 1)) * 4;
  for (std::size_t base = 0; base < pending.size(); base += batch_size) {
    const std::size_t end = std::min(base + batch_size, pending.size());

    if (cfg.jobs <= 1) {
      for (std::size_t i = base; i < end; ++i) {
        execute_unit(pending[i], cfg, factory, scorer);
      }
    } else {
      std::atomic<std::size_t> next{base};
      auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < end; i = next.fetch_add(1)) {
          execute_unit(pending[i], cfg, factory, scorer);
        }
      };
      std::size_t threads = std::min<std::size_t>(
          static_cast<std::size_t>(cfg.jobs), end - base);
      std::vector<std::thread> pool;
      pool.reserve(threads);
      for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
      for (std::thread& t : pool) t.join();
    }

    for (std::size_t i = base; i < end; ++i) {
      records << to_json_line(pending[i].record) << '\n';
      if (transcripts.is_open() && !pending[i].transcript_line.empty()) {
        transcripts << pending[i].transcript_line << '\n';
      }
      ++report.n_completed;
      if (pending[i].record.failed) ++report.n_failed;
    }
    records.flush();
    if (transcripts.is_open()) transcripts.flush();
  }

  auto t1 = std::chrono::steady_clock::now();
  report.wall_seconds = std::chrono::duration<double>(t1 - t0).count();
  return report;
}

}  // namespace dwlab::runner
