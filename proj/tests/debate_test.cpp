#include "dwlab/debate.hpp"

#include "dwlab/backends.hpp"
#include "dwlab/mathgen.hpp"
#include "dwlab/remote.hpp"
#include "dwlab/theory.hpp"

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

using namespace dwlab;
using namespace dwlab::debate;
using namespace dwlab::backends;

namespace {

constexpr std::uint64_t kSeed = 20250816;

// Captures every request it sees; emits a tagged line so tests can track
// which generation produced which message.
class RecordingBackend : public AgentBackend {
 public:
  explicit RecordingBackend(std::string identity,
                            std::shared_ptr<std::vector<GenerationRequest>> log)
      : identity_(std::move(identity)), log_(std::move(log)) {}
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& req) override {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      log_->push_back(req);
    }
    return identity_ + " says turn " + std::to_string(req.turn);
  }

 private:
  std::string identity_;
  std::shared_ptr<std::vector<GenerationRequest>> log_;
  std::mutex mutex_;
};

// Throws at one chosen (turn, agent_index) and behaves scripted elsewhere.
class FailingBackend : public AgentBackend {
 public:
  FailingBackend(std::string identity, int fail_turn, int fail_agent)
      : identity_(std::move(identity)),
        fail_turn_(fail_turn),
        fail_agent_(fail_agent) {}
  std::string identity() const override { return identity_; }
  bool deterministic() const override { return true; }
  std::string generate(const GenerationRequest& req) override {
    if (req.turn == fail_turn_ &&
        (fail_agent_ < 0 || req.agent_index == fail_agent_)) {
      throw std::runtime_error("synthetic outage");
    }
    return identity_ + " fine at turn " + std::to_string(req.turn);
  }

 private:
  std::string identity_;
  int fail_turn_;
  int fail_agent_;
};

std::vector<std::shared_ptr<AgentBackend>> oracle_panel(int n,
                                                        const std::string& ans) {
  std::vector<std::shared_ptr<AgentBackend>> out;
  for (int i = 0; i < n; ++i) {
    out.push_back(std::make_shared<OracleBackend>("oracle-" + std::to_string(i),
                                                  ans));
  }
  return out;
}

}  // namespace

// -------------------------------------------------------------- templates

TEST_CASE("builtin prompt templates are versioned and render the question") {
  PromptTemplates t = builtin_templates();
  CHECK(t.version == "builtin-v1");
  for (const std::string* tpl :
       {&t.single, &t.debate_open, &t.debate_revise, &t.summarize}) {
    CHECK(tpl->find("{question}") != std::string::npos);
    CHECK(tpl->find("ANSWER:") != std::string::npos);
  }
  std::string r = render_template(t.single, "What is 2 + 2?");
  CHECK(r.find("What is 2 + 2?") != std::string::npos);
  CHECK(r.find("{question}") == std::string::npos);

  CHECK(render_template("{question} and {question}", "x") == "x and x");
}

TEST_CASE("the shipped prompt data file matches the compiled-in templates") {
  PromptTemplates file = load_templates(std::filesystem::path(DWLAB_DATA_DIR) /
                                        "prompts.json");
  PromptTemplates built = builtin_templates();
  CHECK(file.version == built.version);
  CHECK(file.single == built.single);
  CHECK(file.debate_open == built.debate_open);
  CHECK(file.debate_revise == built.debate_revise);
  CHECK(file.summarize == built.summarize);
}

TEST_CASE("template loading and validation reject bad inputs") {
  CHECK_THROWS_AS(load_templates("/nonexistent/prompts.json"), std::runtime_error);

  DebateConfig cfg;
  cfg.templates.single = "no placeholder here";
  OracleBackend backend("o", "1");
  CHECK_THROWS_AS(
      run_single("q", backend, cfg.templates, "t-0"), std::invalid_argument);
}

TEST_CASE("parity guard enforces 4..6 agents including the summarizer") {
  DebateConfig cfg;
  for (int n : {3, 4, 5}) {
    cfg.n_agents = n;
    CHECK_NOTHROW(validate_parity(cfg));
  }
  cfg.n_agents = 2;
  CHECK_THROWS_AS(validate_parity(cfg), std::invalid_argument);
  cfg.n_agents = 6;
  CHECK_THROWS_AS(validate_parity(cfg), std::invalid_argument);
}

// ------------------------------------------------------------- run_single

TEST_CASE("single-agent run with an oracle yields a parsable correct answer") {
  OracleBackend backend("oracle", "42");
  SingleResult res = run_single("What is the value?", backend,
                                builtin_templates(), "task-1");
  CHECK(res.task_id == "task-1");
  CHECK(mathgen::grade(res.answer, Rational(42)).correct());
}

TEST_CASE("single-agent run with an adversarial backend grades unparseable") {
  AdversarialBackend backend("mud");
  SingleResult res = run_single("What is the value?", backend,
                                builtin_templates(), "task-2");
  CHECK(mathgen::grade(res.answer, Rational(42)).outcome ==
        mathgen::GradeOutcome::kUnparseable);
}

TEST_CASE("deterministic backends give identical traces across runs") {
  ScriptedBackend backend("s", {"first turn text"});
  SingleResult a = run_single("q", backend, builtin_templates(), "t");
  SingleResult b = run_single("q", backend, builtin_templates(), "t");
  CHECK(a.trace == b.trace);
  CHECK(a.answer == b.answer);
}

TEST_CASE("single-agent backend failure is surfaced with the task id") {
  FailingBackend backend("flaky", 1, -1);
  try {
    run_single("q", backend, builtin_templates(), "task-77");
    FAIL("expected BackendError");
  } catch (const BackendError& e) {
    std::string msg = e.what();
    CHECK(msg.find("task-77") != std::string::npos);
    CHECK(msg.find("flaky") != std::string::npos);
  }
}

TEST_CASE("answer extraction hook is applied when provided") {
  OracleBackend backend("oracle", "42");
  AnswerExtractor take_tail = [](const std::string& text) {
    return text.substr(text.rfind(' ') + 1);
  };
  SingleResult res =
      run_single("q", backend, builtin_templates(), "t", take_tail);
  CHECK(res.answer == "42");
  CHECK(res.trace != res.answer);
}

// ------------------------------------------------------------- run_debate

TEST_CASE("debate transcript has turns x agents shape and a correct summary") {
  DebateConfig cfg;
  cfg.n_agents = 3;
  cfg.turns = 2;
  auto panel = oracle_panel(3, "42");
  OracleBackend summarizer("summarizer", "42");
  DebateTranscript t =
      run_debate("What is the value?", cfg, panel, summarizer, "task-3");

  CHECK(t.task_id == "task-3");
  CHECK_FALSE(t.failed);
  REQUIRE(t.turns.size() == 2);
  for (const TurnRecord& turn : t.turns) {
    REQUIRE(turn.messages.size() == 3);
  }
  CHECK(t.turns[0].messages[1].agent == "oracle-1");
  CHECK(t.summary == t.final_answer);
  CHECK(mathgen::grade(t.final_answer, Rational(42)).correct());
}

TEST_CASE("summarizer rescues the single correct candidate from the debate") {
  DebateConfig cfg;
  cfg.n_agents = 3;
  cfg.turns = 2;
  std::vector<std::shared_ptr<AgentBackend>> panel{
      std::make_shared<OracleBackend>("truthful", "42"),
      std::make_shared<AdversarialBackend>("mud-1"),
      std::make_shared<AdversarialBackend>("mud-2"),
  };
  SelectingSummarizer summarizer("selector", "42");
  DebateTranscript t = run_debate("q", cfg, panel, summarizer, "task-4");
  CHECK(mathgen::grade(t.final_answer, Rational(42)).correct());

  // With no committed candidates at all the summarizer cannot answer.
  std::vector<std::shared_ptr<AgentBackend>> mud{
      std::make_shared<AdversarialBackend>("mud-1"),
      std::make_shared<AdversarialBackend>("mud-2"),
  };
  cfg.n_agents = 2;
  DebateTranscript none = run_debate("q", cfg, mud, summarizer, "task-5");
  CHECK(mathgen::grade(none.final_answer, Rational(42)).outcome ==
        mathgen::GradeOutcome::kUnparseable);
}

TEST_CASE("one-turn debate degenerates to independent answering plus summary") {
  auto log = std::make_shared<std::vector<GenerationRequest>>();
  DebateConfig cfg;
  cfg.n_agents = 2;
  cfg.turns = 1;
  std::vector<std::shared_ptr<AgentBackend>> panel{
      std::make_shared<RecordingBackend>("a", log),
      std::make_shared<RecordingBackend>("b", log),
  };
  RecordingBackend summarizer("sum", log);
  DebateTranscript t = run_debate("q", cfg, panel, summarizer, "t1");
  CHECK(t.turns.size() == 1);
  CHECK(t.turns[0].messages.size() == 2);
  CHECK_FALSE(t.summary.empty());

  // Every debater saw an empty context; the summarizer saw both messages.
  int debater_requests = 0;
  for (const GenerationRequest& req : *log) {
    if (req.role == "debater") {
      ++debater_requests;
      CHECK(req.context.empty());
    } else {
      REQUIRE(req.role == "summarizer");
      CHECK(req.context.size() == 2);
    }
  }
  CHECK(debater_requests == 2);
}

TEST_CASE("turn t context is exactly the prior turn with self marked") {
  auto log = std::make_shared<std::vector<GenerationRequest>>();
  DebateConfig cfg;
  cfg.n_agents = 3;
  cfg.turns = 3;
  std::vector<std::shared_ptr<AgentBackend>> panel;
  for (int i = 0; i < 3; ++i) {
    panel.push_back(std::make_shared<RecordingBackend>("agent-" + std::to_string(i),
                                                       log));
  }
  RecordingBackend summarizer("sum", log);
  DebateTranscript t = run_debate("the question", cfg, panel, summarizer, "ctx");
  REQUIRE_FALSE(t.failed);

  for (const GenerationRequest& req : *log) {
    CHECK(req.prompt.find("the question") != std::string::npos);
    if (req.role == "debater" && req.turn == 1) {
      CHECK(req.context.empty());
      continue;
    }
    REQUIRE(req.context.size() == 3);
    for (int b = 0; b < 3; ++b) {
      const Message& m = req.context[static_cast<std::size_t>(b)];
      CHECK(m.agent == "agent-" + std::to_string(b));
      // Context is the full prior turn (turns+1 marks the summarizer call).
      int prior = std::min(req.turn - 1, cfg.turns);
      CHECK(m.content == m.agent + " says turn " + std::to_string(prior));
      if (req.role == "debater") {
        CHECK(m.self == (b == req.agent_index));
      } else {
        CHECK_FALSE(m.self);
      }
    }
  }
}

TEST_CASE("in-turn parallelism leaves transcript content unchanged") {
  StochasticModel model;
  model.q = 0.8;
  model.depth = 3;
  model.width = 2;
  model.correct_answer = "7";
  model.wrong_answer = "8";
  model.seed = kSeed;

  DebateConfig sequential;
  sequential.n_agents = 4;
  sequential.turns = 2;
  sequential.jobs = 1;
  DebateConfig parallel = sequential;
  parallel.jobs = 4;

  std::vector<std::shared_ptr<AgentBackend>> panel;
  for (int i = 0; i < 4; ++i) {
    panel.push_back(std::make_shared<StochasticTaskBackend>(
        "debater-" + std::to_string(i), model));
  }
  StochasticSummarizer summarizer("agg", 0.95, model);

  for (int trial = 0; trial < 25; ++trial) {
    std::string id = "par-" + std::to_string(trial);
    DebateTranscript a = run_debate("q", sequential, panel, summarizer, id);
    DebateTranscript b = run_debate("q", parallel, panel, summarizer, id);
    CHECK(to_json_line(a) == to_json_line(b));
  }
}

TEST_CASE("debate validates its configuration") {
  DebateConfig cfg;
  cfg.n_agents = 1;
  auto one = oracle_panel(1, "1");
  OracleBackend s("s", "1");
  CHECK_THROWS_AS(run_debate("q", cfg, one, s, "t"), std::invalid_argument);

  cfg.n_agents = 2;
  cfg.turns = 0;
  auto two = oracle_panel(2, "1");
  CHECK_THROWS_AS(run_debate("q", cfg, two, s, "t"), std::invalid_argument);

  cfg.turns = 1;
  CHECK_THROWS_AS(run_debate("q", cfg, one, s, "t"), std::invalid_argument);
}

// ---------------------------------------------------------------- failure

TEST_CASE("debater failure marks the transcript at (turn, agent)") {
  DebateConfig cfg;
  cfg.n_agents = 3;
  cfg.turns = 3;
  std::vector<std::shared_ptr<AgentBackend>> panel{
      std::make_shared<ScriptedBackend>("a", std::vector<std::string>{"ok"}),
      std::make_shared<FailingBackend>("b", 2, 1),
      std::make_shared<ScriptedBackend>("c", std::vector<std::string>{"ok"}),
  };
  OracleBackend summarizer("sum", "1");
  DebateTranscript t = run_debate("q", cfg, panel, summarizer, "fail-1");

  CHECK(t.failed);
  CHECK(t.failed_turn == 2);
  CHECK(t.failed_agent == 1);
  CHECK(t.failed_role == "debater");
  CHECK(t.error.find("b") != std::string::npos);
  CHECK(t.error.find("synthetic outage") != std::string::npos);
  // Partial transcript: full turn 1, then the prefix of turn 2.
  REQUIRE(t.turns.size() == 2);
  CHECK(t.turns[0].messages.size() == 3);
  CHECK(t.turns[1].messages.size() == 1);
  CHECK(t.turns[1].messages[0].agent == "a");
  CHECK(t.summary.empty());
}

TEST_CASE("summarizer failure is recorded after the final turn") {
  DebateConfig cfg;
  cfg.n_agents = 2;
  cfg.turns = 2;
  auto panel = oracle_panel(2, "5");
  FailingBackend summarizer("sum", 3, -1);  // summarizer runs at turn 3
  DebateTranscript t = run_debate("q", cfg, panel, summarizer, "fail-2");

  CHECK(t.failed);
  CHECK(t.failed_turn == 3);
  CHECK(t.failed_agent == -1);
  CHECK(t.failed_role == "summarizer");
  REQUIRE(t.turns.size() == 2);
  CHECK(t.turns[1].messages.size() == 2);
  CHECK(t.summary.empty());
  CHECK(t.final_answer.empty());
}

// ------------------------------------------------------------ persistence

TEST_CASE("transcripts round-trip through JSON lines") {
  DebateConfig cfg;
  cfg.n_agents = 3;
  cfg.turns = 2;
  auto panel = oracle_panel(3, "11");
  OracleBackend summarizer("sum", "11");
  DebateTranscript t = run_debate("q", cfg, panel, summarizer, "rt-1");

  std::string line = to_json_line(t);
  DebateTranscript back = transcript_from_json(line);
  CHECK(to_json_line(back) == line);

  auto parsed = nlohmann::ordered_json::parse(line);
  CHECK_FALSE(parsed.contains("error"));

  // A failed transcript keeps its failure coordinates through the format.
  std::vector<std::shared_ptr<AgentBackend>> panel2{
      std::make_shared<FailingBackend>("x", 1, 0),
      std::make_shared<OracleBackend>("y", "11"),
  };
  cfg.n_agents = 2;
  DebateTranscript f = run_debate("q", cfg, panel2, summarizer, "rt-2");
  std::string fline = to_json_line(f);
  DebateTranscript fback = transcript_from_json(fline);
  CHECK(fback.failed);
  CHECK(fback.failed_turn == 1);
  CHECK(fback.failed_agent == 0);
  CHECK(to_json_line(fback) == fline);
}

// ------------------------------------------------------- stochastic model

TEST_CASE("steps_ok parsing tolerates formatting and missing markers") {
  std::vector<bool> ok = parse_steps_ok("blah\nsteps_ok: 1, 0 ,1\nANSWER: 3", 3);
  REQUIRE(ok.size() == 3);
  CHECK(ok[0]);
  CHECK_FALSE(ok[1]);
  CHECK(ok[2]);

  CHECK(parse_steps_ok("no marker here", 3).empty());
  CHECK(parse_steps_ok("steps_ok: 1,1,1,1,1", 2).size() == 2);
  CHECK(parse_steps_ok("steps_ok: 1", 3).size() == 1);
}

TEST_CASE("stochastic model parameters are validated") {
  StochasticModel m;
  m.correct_answer = "1";
  m.wrong_answer = "1";
  CHECK_THROWS_AS(StochasticTaskBackend("x", m), std::invalid_argument);
  m.wrong_answer = "2";
  m.q = 0.0;
  CHECK_THROWS_AS(StochasticTaskBackend("x", m), std::invalid_argument);
  m.q = 0.9;
  m.depth = 0;
  CHECK_THROWS_AS(StochasticTaskBackend("x", m), std::invalid_argument);
  m.depth = 1;
  CHECK_THROWS_AS(StochasticSummarizer("x", 1.5, m), std::invalid_argument);
  CHECK_NOTHROW(StochasticSummarizer("x", 0.95, m));
}

TEST_CASE("stochastic generations are deterministic per (task, turn, agent)") {
  StochasticModel model;
  model.q = 0.7;
  model.depth = 4;
  model.width = 2;
  model.correct_answer = "9";
  model.wrong_answer = "0";
  model.seed = kSeed;
  StochasticTaskBackend backend("d", model);

  GenerationRequest req;
  req.task_id = "det-1";
  req.turn = 2;
  req.agent_index = 1;
  req.role = "debater";
  std::string a = backend.generate(req);
  CHECK(backend.generate(req) == a);

  GenerationRequest other = req;
  other.agent_index = 2;
  GenerationRequest turn = req;
  turn.turn = 3;
  GenerationRequest task = req;
  task.task_id = "det-2";
  // Streams are keyed by all three coordinates; at least the distribution
  // over many ids must differ. Spot-check one coordinate at a time over a
  // small batch to avoid flaky single-sample equality checks.
  int diff_agent = 0, diff_turn = 0, diff_task = 0;
  for (int i = 0; i < 64; ++i) {
    std::string id = "det-batch-" + std::to_string(i);
    req.task_id = other.task_id = turn.task_id = id;
    task.task_id = id + "-alt";
    std::string base = backend.generate(req);
    if (backend.generate(other) != base) ++diff_agent;
    if (backend.generate(turn) != base) ++diff_turn;
    if (backend.generate(task) != base) ++diff_task;
  }
  CHECK(diff_agent > 0);
  CHECK(diff_turn > 0);
  CHECK(diff_task > 0);
}

TEST_CASE("summarizer coverage is the OR of per-step reports") {
  StochasticModel model;
  model.q = 0.9;
  model.depth = 2;
  model.width = 1;
  model.correct_answer = "7";
  model.wrong_answer = "8";
  model.seed = kSeed;

  DebateConfig cfg;
  cfg.n_agents = 2;
  cfg.turns = 1;

  auto debate_with = [&](const std::string& m1, const std::string& m2,
                         double r) {
    std::vector<std::shared_ptr<AgentBackend>> panel{
        std::make_shared<ScriptedBackend>("a", std::vector<std::string>{m1}),
        std::make_shared<ScriptedBackend>("b", std::vector<std::string>{m2}),
    };
    StochasticSummarizer summarizer("agg", r, model);
    return run_debate("q", cfg, panel, summarizer, "cov-1");
  };

  // Complementary coverage completes the task when aggregation always works.
  DebateTranscript t1 = debate_with("steps_ok: 1,0\nANSWER: 8",
                                    "steps_ok: 0,1\nANSWER: 8", 1.0);
  CHECK(t1.final_answer.find("ANSWER: 7") != std::string::npos);

  // A hole in coverage can never be aggregated away.
  DebateTranscript t2 = debate_with("steps_ok: 1,0\nANSWER: 8",
                                    "steps_ok: 1,0\nANSWER: 8", 1.0);
  CHECK(t2.final_answer.find("ANSWER: 8") != std::string::npos);

  // Unreliable aggregation fails even under full coverage.
  DebateTranscript t3 = debate_with("steps_ok: 1,1\nANSWER: 7",
                                    "steps_ok: 1,1\nANSWER: 7", 0.0);
  CHECK(t3.final_answer.find("ANSWER: 8") != std::string::npos);

  // Messages without the marker contribute nothing.
  DebateTranscript t4 = debate_with("I don't know.", "free text", 1.0);
  CHECK(t4.final_answer.find("ANSWER: 8") != std::string::npos);
}

TEST_CASE("orchestrated stochastic runs match the closed-form success rates") {
  const double q = 0.9;
  const int width = 2;
  const int depth = 2;
  const int n_agents = 3;
  const double r = 0.95;
  const int trials = 4000;

  theory::ModelParams params(q, width, depth, n_agents, r);
  const double p_single = theory::single_success(params);
  const double p_multi = theory::multi_success(params);

  StochasticModel model;
  model.q = q;
  model.depth = depth;
  model.width = width;
  model.correct_answer = "7";
  model.wrong_answer = "8";
  model.seed = kSeed;

  DebateConfig cfg;
  cfg.n_agents = n_agents;
  cfg.turns = 2;
  std::vector<std::shared_ptr<AgentBackend>> panel;
  for (int i = 0; i < n_agents; ++i) {
    panel.push_back(std::make_shared<StochasticTaskBackend>(
        "debater-" + std::to_string(i), model));
  }
  StochasticSummarizer summarizer("agg", r, model);
  StochasticTaskBackend solo("solo", model);

  int single_hits = 0;
  int multi_hits = 0;
  const Rational truth(7);
  for (int i = 0; i < trials; ++i) {
    std::string id = "dist-" + std::to_string(i);
    SingleResult s = run_single("q", solo, cfg.templates, id);
    if (mathgen::grade(s.answer, truth).correct()) ++single_hits;
    DebateTranscript t = run_debate("q", cfg, panel, summarizer, id);
    if (mathgen::grade(t.final_answer, truth).correct()) ++multi_hits;
  }

  double single_rate = static_cast<double>(single_hits) / trials;
  double multi_rate = static_cast<double>(multi_hits) / trials;
  double single_band = 3.0 * std::sqrt(p_single * (1 - p_single) / trials);
  double multi_band = 3.0 * std::sqrt(p_multi * (1 - p_multi) / trials);
  CAPTURE(single_rate);
  CAPTURE(multi_rate);
  CHECK(std::abs(single_rate - p_single) <= single_band);
  CHECK(std::abs(multi_rate - p_multi) <= multi_band);
}

// ----------------------------------------------------------------- remote

TEST_CASE("base URL splitting") {
  std::string origin, prefix;
  split_base_url("http://localhost:8080/v1", origin, prefix);
  CHECK(origin == "http://localhost:8080");
  CHECK(prefix == "/v1");

  split_base_url("https://api.example.com", origin, prefix);
  CHECK(origin == "https://api.example.com");
  CHECK(prefix.empty());

  split_base_url("http://h:1/a/b/", origin, prefix);
  CHECK(origin == "http://h:1");
  CHECK(prefix == "/a/b");

  CHECK_THROWS_AS(split_base_url("localhost:8080", origin, prefix),
                  std::runtime_error);
  CHECK_THROWS_AS(split_base_url("ftp://host", origin, prefix),
                  std::runtime_error);
  CHECK_THROWS_AS(split_base_url("http://", origin, prefix), std::runtime_error);
}

TEST_CASE("chat message serialization marks self as assistant") {
  GenerationRequest req;
  req.prompt = "rendered prompt";
  req.role = "debater";
  req.context = {
      {"other-1", "first reply", false},
      {"me", "my reply", true},
  };
  auto j = nlohmann::ordered_json::parse(chat_messages_json(req));
  REQUIRE(j.size() == 3);
  CHECK(j[0]["role"] == "user");
  CHECK(j[0]["content"] == "rendered prompt");
  CHECK(j[1]["role"] == "user");
  CHECK(std::string(j[1]["content"]).find("other-1") != std::string::npos);
  CHECK(j[2]["role"] == "assistant");
  CHECK(j[2]["content"] == "my reply");
}

TEST_CASE("remote backend requires its API key environment variable") {
  unsetenv("DWLAB_API_KEY");
  RemoteConfig cfg;
  cfg.base_url = "http://localhost:9";
  cfg.model = "test-model";
  CHECK_THROWS_AS(RemoteBackend("remote", cfg), std::runtime_error);
  setenv("DWLAB_API_KEY", "test-key-123", 1);
  CHECK_NOTHROW(RemoteBackend("remote", cfg));
}

TEST_CASE("remote backend speaks the chat-completions wire format") {
  setenv("DWLAB_API_KEY", "test-key-123", 1);

  std::mutex mu;
  std::vector<std::string> bodies;
  std::vector<std::string> auth_headers;
  std::atomic<int> hits{0};
  std::atomic<int> failures_to_serve{0};

  httplib::Server server;
  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                {
                  std::lock_guard<std::mutex> lock(mu);
                  bodies.push_back(req.body);
                  auth_headers.push_back(req.get_header_value("Authorization"));
                }
                hits.fetch_add(1);
                if (failures_to_serve.fetch_sub(1) > 0) {
                  res.status = 500;
                  res.set_content("{\"error\":\"transient\"}", "application/json");
                  return;
                }
                nlohmann::ordered_json reply;
                reply["choices"] = nlohmann::ordered_json::array();
                reply["choices"].push_back(
                    {{"message",
                      {{"role", "assistant"}, {"content", "ANSWER: 42"}}}});
                res.set_content(reply.dump(), "application/json");
              });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteConfig cfg;
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  cfg.model = "test-model";
  cfg.retry_backoff_ms = 1;
  cfg.max_attempts = 4;
  RemoteBackend backend("remote", cfg);

  GenerationRequest req;
  req.task_id = "wire-1";
  req.turn = 2;
  req.agent_index = 0;
  req.role = "debater";
  req.prompt = "solve it";
  req.context = {{"me", "earlier attempt", true}, {"peer", "their attempt", false}};

  SUBCASE("success path carries model, messages, temperature and auth") {
    std::string out = backend.generate(req);
    CHECK(out == "ANSWER: 42");
    REQUIRE(bodies.size() == 1);
    auto body = nlohmann::ordered_json::parse(bodies[0]);
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == doctest::Approx(0.7));
    REQUIRE(body["messages"].is_array());
    CHECK(body["messages"].size() == 3);
    CHECK(auth_headers[0] == "Bearer test-key-123");

    GenerationRequest sum = req;
    sum.role = "summarizer";
    backend.generate(sum);
    auto body2 = nlohmann::ordered_json::parse(bodies[1]);
    CHECK(body2["temperature"] == doctest::Approx(0.0));
  }

  SUBCASE("retries 5xx with backoff until success") {
    failures_to_serve.store(2);
    std::string out = backend.generate(req);
    CHECK(out == "ANSWER: 42");
    CHECK(hits.load() == 3);
  }

  SUBCASE("gives up after the attempt budget") {
    failures_to_serve.store(1000);
    CHECK_THROWS_AS(backend.generate(req), BackendError);
    CHECK(hits.load() == 4);
  }

  SUBCASE("non-retriable status fails immediately without retries") {
    RemoteConfig direct = cfg;
    direct.base_url = "http://127.0.0.1:" + std::to_string(port) + "/nowhere";
    RemoteBackend missing("remote404", direct);
    int before = hits.load();
    try {
      missing.generate(req);
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(std::string(e.what()).find("HTTP 404") != std::string::npos);
    }
    CHECK(hits.load() == before);  // wrong route: matched handler never ran
  }

  server.stop();
  server_thread.join();
}
