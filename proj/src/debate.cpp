#include "dwlab/debate.hpp"

#include <json.hpp>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>
#include <utility>

namespace dwlab::debate {

namespace {

using nlohmann::ordered_json;

constexpr const char* kBuiltinVersion = "builtin-v1";

constexpr const char* kSingleTpl =
    "You are solving a task on your own. Decompose the problem into a "
    "sequence of clear, step-by-step reasoning steps before reaching the "
    "final answer. Finish with a line of the form 'ANSWER: <your answer>'."
    "\n\nTask:\n{question}";

constexpr const char* kDebateOpenTpl =
    "You are one of several agents debating a task. Work through the problem "
    "step by step and state your reasoning along with your answer. Finish "
    "with a line of the form 'ANSWER: <your answer>'.\n\nTask:\n{question}";

constexpr const char* kDebateReviseTpl =
    "You are one of several agents debating a task. Below are the latest "
    "responses from you and the other agents. Critique them, reconcile "
    "disagreements, and refine your own reasoning and answer. Finish with a "
    "line of the form 'ANSWER: <your answer>'.\n\nTask:\n{question}";

constexpr const char* kSummarizeTpl =
    "You are the summarizing agent of a debate. Read the final responses "
    "from all debaters, synthesize the information, and produce the single "
    "best final response. Finish with a line of the form "
    "'ANSWER: <the final answer>'.\n\nTask:\n{question}";

void require_placeholder(const std::string& tpl, const char* field) {
  if (tpl.find("{question}") == std::string::npos) {
    throw std::invalid_argument(std::string("prompt template '") + field +
                                "' lacks the {question} placeholder");
  }
}

void validate_templates(const PromptTemplates& t) {
  if (t.version.empty()) {
    throw std::invalid_argument("prompt templates need a version label");
  }
  require_placeholder(t.single, "single");
  require_placeholder(t.debate_open, "debate_open");
  require_placeholder(t.debate_revise, "debate_revise");
  require_placeholder(t.summarize, "summarize");
}

// Runs one turn's generations, optionally in parallel. Results land in
// slot order regardless of completion order; the reported failure is the
// one at the lowest agent index.
struct TurnOutcome {
  std::vector<std::string> outputs;   // valid where ok[i]
  std::vector<char> ok;
  int first_failed = -1;
  std::string error;
};

TurnOutcome run_generations(
    const std::vector<std::shared_ptr<AgentBackend>>& backends,
    const std::vector<GenerationRequest>& requests, int jobs) {
  const std::size_t n = requests.size();
  TurnOutcome out;
  out.outputs.resize(n);
  out.ok.assign(n, 0);
  std::vector<std::string> errors(n);

  auto work = [&](std::size_t i) {
    try {
      out.outputs[i] = backends[i]->generate(requests[i]);
      out.ok[i] = 1;
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  };

  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        work(i);
      }
    };
    std::size_t threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!out.ok[i]) {
      out.first_failed = static_cast<int>(i);
      out.error = errors[i];
      break;
    }
  }
  return out;
}

}  // namespace

PromptTemplates builtin_templates() {
  PromptTemplates t;
  t.version = kBuiltinVersion;
  t.single = kSingleTpl;
  t.debate_open = kDebateOpenTpl;
  t.debate_revise = kDebateReviseTpl;
  t.summarize = kSummarizeTpl;
  return t;
}

PromptTemplates load_templates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open prompt templates: " + path.string());
  }
  ordered_json j = ordered_json::parse(in);
  PromptTemplates t;
  t.version = j.at("version").get<std::string>();
  t.single = j.at("single").get<std::string>();
  t.debate_open = j.at("debate_open").get<std::string>();
  t.debate_revise = j.at("debate_revise").get<std::string>();
  t.summarize = j.at("summarize").get<std::string>();
  validate_templates(t);
  return t;
}

std::string render_template(const std::string& tpl, const std::string& question) {
  std::string out = tpl;
  const std::string key = "{question}";
  std::size_t pos = 0;
  while ((pos = out.find(key, pos)) != std::string::npos) {
    out.replace(pos, key.size(), question);
    pos += question.size();
  }
  return out;
}

void validate_parity(const DebateConfig& cfg) {
  int total = cfg.n_agents + 1;  // debaters plus the summarizer
  if (total < 4 || total > 6) {
    throw std::invalid_argument(
        "parity runs need 4..6 total agents including the summarizer; got " +
        std::to_string(total));
  }
}

SingleResult run_single(const std::string& task_prompt, AgentBackend& backend,
                        const PromptTemplates& templates,
                        const std::string& task_id,
                        const AnswerExtractor& extract) {
  validate_templates(templates);
  GenerationRequest req;
  req.task_id = task_id;
  req.turn = 1;
  req.agent_index = -1;
  req.role = "single";
  req.prompt = render_template(templates.single, task_prompt);

  SingleResult res;
  res.task_id = task_id;
  try {
    res.trace = backend.generate(req);
  } catch (const std::exception& e) {
    throw BackendError("task " + task_id + ": backend '" +
                       backend.identity() + "' failed: " + e.what());
  }
  res.answer = extract ? extract(res.trace) : res.trace;
  return res;
}

DebateTranscript run_debate(
    const std::string& task_prompt, const DebateConfig& cfg,
    const std::vector<std::shared_ptr<AgentBackend>>& debaters,
    AgentBackend& summarizer, const std::string& task_id,
    const AnswerExtractor& extract) {
  if (cfg.n_agents < 2) {
    throw std::invalid_argument("a debate needs at least 2 debaters");
  }
  if (cfg.turns < 1) {
    throw std::invalid_argument("a debate needs at least 1 turn");
  }
  if (static_cast<int>(debaters.size()) != cfg.n_agents) {
    throw std::invalid_argument(
        "backend count " + std::to_string(debaters.size()) +
        " does not match n_agents " + std::to_string(cfg.n_agents));
  }
  for (const auto& b : debaters) {
    if (!b) throw std::invalid_argument("null debater backend");
  }
  validate_templates(cfg.templates);

  DebateTranscript t;
  t.task_id = task_id;

  for (int turn = 1; turn <= cfg.turns; ++turn) {
    const std::string tpl =
        (turn == 1) ? cfg.templates.debate_open : cfg.templates.debate_revise;
    std::vector<GenerationRequest> requests(static_cast<std::size_t>(cfg.n_agents));
    for (int a = 0; a < cfg.n_agents; ++a) {
      GenerationRequest& req = requests[static_cast<std::size_t>(a)];
      req.task_id = task_id;
      req.turn = turn;
      req.agent_index = a;
      req.role = "debater";
      req.prompt = render_template(tpl, task_prompt);
      if (turn > 1) {
        const TurnRecord& prev = t.turns.back();
        req.context.reserve(prev.messages.size());
        for (int b = 0; b < cfg.n_agents; ++b) {
          Message m = prev.messages[static_cast<std::size_t>(b)];
          m.self = (b == a);
          req.context.push_back(std::move(m));
        }
      }
    }

    TurnOutcome outcome = run_generations(debaters, requests, cfg.jobs);
    TurnRecord record;
    if (outcome.first_failed < 0) {
      for (int a = 0; a < cfg.n_agents; ++a) {
        record.messages.push_back(
            {debaters[static_cast<std::size_t>(a)]->identity(),
             std::move(outcome.outputs[static_cast<std::size_t>(a)]), false});
      }
      t.turns.push_back(std::move(record));
      continue;
    }
    // Preserve the prefix before the first failure, in agent order.
    for (int a = 0; a < outcome.first_failed; ++a) {
      record.messages.push_back(
          {debaters[static_cast<std::size_t>(a)]->identity(),
           std::move(outcome.outputs[static_cast<std::size_t>(a)]), false});
    }
    t.turns.push_back(std::move(record));
    t.failed = true;
    t.failed_turn = turn;
    t.failed_agent = outcome.first_failed;
    t.failed_role = "debater";
    t.error = "backend '" +
              debaters[static_cast<std::size_t>(outcome.first_failed)]->identity() +
              "' failed: " + outcome.error;
    return t;
  }

  GenerationRequest req;
  req.task_id = task_id;
  req.turn = cfg.turns + 1;
  req.agent_index = -1;
  req.role = "summarizer";
  req.prompt = render_template(cfg.templates.summarize, task_prompt);
  req.context = t.turns.back().messages;  // all final-turn messages, none self

  try {
    t.summary = summarizer.generate(req);
  } catch (const std::exception& e) {
    t.failed = true;
    t.failed_turn = cfg.turns + 1;
    t.failed_agent = -1;
    t.failed_role = "summarizer";
    t.error = std::string("backend '") + summarizer.identity() +
              "' failed: " + e.what();
    return t;
  }
  t.final_answer = extract ? extract(t.summary) : t.summary;
  return t;
}

std::string to_json_line(const DebateTranscript& t) {
  ordered_json j;
  j["task_id"] = t.task_id;
  ordered_json turns = ordered_json::array();
  for (const TurnRecord& turn : t.turns) {
    ordered_json msgs = ordered_json::array();
    for (const Message& m : turn.messages) {
      msgs.push_back({{"agent", m.agent}, {"content", m.content}});
    }
    turns.push_back(std::move(msgs));
  }
  j["turns"] = std::move(turns);
  j["summary"] = t.summary;
  j["final_answer"] = t.final_answer;
  j["failed"] = t.failed;
  if (t.failed) {
    j["failed_turn"] = t.failed_turn;
    j["failed_agent"] = t.failed_agent;
    j["failed_role"] = t.failed_role;
    j["error"] = t.error;
  }
  return j.dump();
}

DebateTranscript transcript_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  DebateTranscript t;
  t.task_id = j.at("task_id").get<std::string>();
  for (const auto& turn : j.at("turns")) {
    TurnRecord record;
    for (const auto& m : turn) {
      record.messages.push_back({m.at("agent").get<std::string>(),
                                 m.at("content").get<std::string>(), false});
    }
    t.turns.push_back(std::move(record));
  }
  t.summary = j.at("summary").get<std::string>();
  t.final_answer = j.at("final_answer").get<std::string>();
  t.failed = j.at("failed").get<bool>();
  if (t.failed) {
    t.failed_turn = j.at("failed_turn").get<int>();
    t.failed_agent = j.at("failed_agent").get<int>();
    t.failed_role = j.at("failed_role").get<std::string>();
    t.error = j.at("error").get<std::string>();
  }
  return t;
}

}  // namespace dwlab::debate
