#include "dwlab/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dwlab/backends.hpp"
#include "dwlab/debate.hpp"
#include "dwlab/mathgen.hpp"
#include "dwlab/metrics.hpp"
#include "dwlab/rational.hpp"
#include "dwlab/remote.hpp"
#include "dwlab/rng.hpp"
#include "dwlab/runner.hpp"
#include "dwlab/simkit.hpp"
#include "dwlab/theory.hpp"
#include "dwlab/writegen.hpp"

namespace dwlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// ------------------------------------------------------------ error classes

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct PreflightError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ------------------------------------------------------------ small helpers

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::string item;
  std::istringstream ss(text);
  while (std::getline(ss, item, ',')) {
    try {
      size_t used = 0;
      int v = std::stoi(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + item +
                       "' is not an integer");
    }
  }
  if (out.empty()) {
    throw UsageError(std::string(what) + ": empty list");
  }
  return out;
}

void require_distinct(const std::vector<int>& v, const char* what) {
  std::vector<int> s = v;
  std::sort(s.begin(), s.end());
  if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
    throw UsageError(std::string(what) + ": duplicate levels");
  }
}

std::string format_double(double v) {
  return json(v).dump();  // shortest round-trip decimal form
}

std::string short_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void require_absent(const fs::path& p, const std::string& hint) {
  if (fs::exists(p)) {
    throw PreflightError("output file " + p.string() +
                         " already exists; outputs are write-once" +
                         (hint.empty() ? "" : " (" + hint + ")"));
  }
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw PreflightError("cannot open " + p.string() + " for writing");
  for (const auto& l : lines) out << l << '\n';
  out.flush();
  if (!out) throw PreflightError("failed writing " + p.string());
}

void write_text(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw PreflightError("cannot open " + p.string() + " for writing");
  out << body;
  out.flush();
  if (!out) throw PreflightError("failed writing " + p.string());
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw PreflightError("cannot read " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

// Everything after the last "ANSWER:" marker, trimmed; the whole text when
// the marker is absent.
std::string after_answer_marker(const std::string& text) {
  static const std::string kMarker = "ANSWER:";
  size_t pos = text.rfind(kMarker);
  std::string rest =
      pos == std::string::npos ? text : text.substr(pos + kMarker.size());
  size_t b = rest.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = rest.find_last_not_of(" \t\r\n");
  return rest.substr(b, e - b + 1);
}

// ------------------------------------------------------- config-file layer

// Settings resolve as flags > config file > built-in defaults: a flag that
// was actually passed wins; otherwise a config value applies when present.
class ConfigFile {
 public:
  ConfigFile() : root_(json::object()) {}
  explicit ConfigFile(json root) : root_(std::move(root)) {}

  static ConfigFile load(const std::string& path) {
    if (path.empty()) return ConfigFile();
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      throw PreflightError("cannot read config file " + path);
    }
    json parsed;
    try {
      in >> parsed;
    } catch (const std::exception& e) {
      throw PreflightError("config file " + path +
                           " is not valid JSON: " + e.what());
    }
    if (!parsed.is_object()) {
      throw PreflightError("config file " + path +
                           " must hold a JSON object");
    }
    return ConfigFile(std::move(parsed));
  }

  template <typename T>
  void apply(const CLI::Option* opt, const char* section, const char* key,
             T& target) const {
    if (opt != nullptr && opt->count() > 0) return;
    const json* node = find(section, key);
    if (node == nullptr) return;
    try {
      target = node->get<T>();
    } catch (const std::exception&) {
      throw PreflightError("config value " + location(section, key) +
                           " has the wrong type");
    }
  }

  void apply_levels(const CLI::Option* opt, const char* section,
                    const char* key, std::vector<int>& target) const {
    if (opt != nullptr && opt->count() > 0) return;
    const json* node = find(section, key);
    if (node == nullptr) return;
    if (!node->is_array()) {
      throw PreflightError("config value " + location(section, key) +
                           " must be an array of integers");
    }
    std::vector<int> out;
    for (const auto& e : *node) {
      if (!e.is_number_integer()) {
        throw PreflightError("config value " + location(section, key) +
                             " must be an array of integers");
      }
      out.push_back(e.get<int>());
    }
    target = std::move(out);
  }

 private:
  const json* find(const char* section, const char* key) const {
    const json* scope = &root_;
    if (section != nullptr) {
      auto it = root_.find(section);
      if (it == root_.end()) return nullptr;
      if (!it->is_object()) {
        throw PreflightError(std::string("config section \"") + section +
                             "\" must be a JSON object");
      }
      scope = &*it;
    }
    auto it = scope->find(key);
    return it == scope->end() ? nullptr : &*it;
  }

  static std::string location(const char* section, const char* key) {
    return section == nullptr ? std::string("\"") + key + "\""
                              : std::string("\"") + section + "." + key + "\"";
  }

  json root_;
};

// ------------------------------------------------------------ shared state

struct Globals {
  std::uint64_t seed = 20250816;
  int jobs = 1;
  std::string out = ".";
  std::string config_path;

  CLI::Option* o_seed = nullptr;
  CLI::Option* o_jobs = nullptr;
  CLI::Option* o_out = nullptr;

  fs::path out_dir() const { return fs::path(out); }

  void resolve(const ConfigFile& cfg) {
    cfg.apply(o_seed, nullptr, "seed", seed);
    cfg.apply(o_jobs, nullptr, "jobs", jobs);
    cfg.apply(o_out, nullptr, "out", out);
    if (jobs < 1) throw UsageError("--jobs must be >= 1");
  }

  void ensure_out_dir() const {
    std::error_code ec;
    fs::create_directories(out_dir(), ec);
    if (ec) {
      throw PreflightError("cannot create output directory " + out +
                           ": " + ec.message());
    }
  }
};

// ------------------------------------------------------------ gen-math

struct GenMathCmd {
  CLI::App* sub = nullptr;
  std::string depths_csv = "2,3,4";
  std::string widths_csv = "2,3,4";
  std::string cell_spec;
  int count = 100;
  std::string stem = "math";
  CLI::Option *o_depths = nullptr, *o_widths = nullptr, *o_cells = nullptr,
              *o_count = nullptr, *o_stem = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "gen-math", "Generate the arithmetic-DAG task dataset (JSONL)");
    sub->fallthrough();
    o_depths = sub->add_option("--depths", depths_csv,
                               "Comma-separated depth levels")
                   ->capture_default_str();
    o_widths = sub->add_option("--widths", widths_csv,
                               "Comma-separated width levels")
                   ->capture_default_str();
    o_cells = sub->add_option("--cells", cell_spec,
                              "Single cell shorthand DxW, e.g. 2x2");
    o_cells->excludes(o_depths)->excludes(o_widths);
    o_count = sub->add_option("--count", count, "Tasks per cell")
                  ->capture_default_str();
    o_stem = sub->add_option("--name", stem, "Output file stem")
                 ->capture_default_str();
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    std::vector<int> depths = parse_int_list(depths_csv, "--depths");
    std::vector<int> widths = parse_int_list(widths_csv, "--widths");
    cfg.apply_levels(o_depths, "gen_math", "depths", depths);
    cfg.apply_levels(o_widths, "gen_math", "widths", widths);
    cfg.apply(o_count, "gen_math", "count", count);
    cfg.apply(o_stem, "gen_math", "name", stem);
    if (o_cells->count() > 0) {
      size_t x = cell_spec.find('x');
      if (x == std::string::npos) {
        throw UsageError("--cells expects DxW, e.g. 2x3");
      }
      depths = parse_int_list(cell_spec.substr(0, x), "--cells depth");
      widths = parse_int_list(cell_spec.substr(x + 1), "--cells width");
    }
    require_distinct(depths, "--depths");
    require_distinct(widths, "--widths");
    for (int d : depths) {
      if (d < 2) throw UsageError("depth levels must be >= 2");
    }
    for (int w : widths) {
      if (w < 2) throw UsageError("width levels must be >= 2");
    }
    if (count < 1) throw UsageError("--count must be >= 1");

    g.ensure_out_dir();
    fs::path target = g.out_dir() / (stem + ".jsonl");
    require_absent(target, "pick another --name or --out");

    mathgen::MathDatasetSpec spec;
    spec.depths = depths;
    spec.widths = widths;
    spec.per_cell = count;
    std::vector<mathgen::DagProblem> problems =
        mathgen::generate_dataset(spec, g.seed);
    std::vector<std::string> lines;
    lines.reserve(problems.size());
    for (const auto& p : problems) {
      lines.push_back(mathgen::to_json_line(p, /*include_truth=*/true));
    }
    write_lines(target, lines);
    out << "gen-math: wrote " << problems.size() << " tasks across "
        << depths.size() * widths.size() << " cells to " << target.string()
        << "\n";
    return kExitSuccess;
  }
};

// ------------------------------------------------------------ gen-writing

struct GenWritingCmd {
  CLI::App* sub = nullptr;
  std::string ks_csv = "4,8,12,16,20";
  int count = 500;
  std::string lexicon_path = "data/lexicon.json";
  bool no_binning = false;
  std::string stem = "writing";
  CLI::Option *o_ks = nullptr, *o_count = nullptr, *o_lexicon = nullptr,
              *o_nobin = nullptr, *o_stem = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "gen-writing", "Generate the keyword-writing task dataset (JSONL)");
    sub->fallthrough();
    o_ks = sub->add_option("--K", ks_csv, "Comma-separated keyword counts")
               ->capture_default_str();
    o_count = sub->add_option("--count", count, "Keyword sets per K")
                  ->capture_default_str();
    o_lexicon =
        sub->add_option("--lexicon", lexicon_path, "Keyword lexicon JSON")
            ->capture_default_str();
    o_nobin = sub->add_flag("--no-binning", no_binning,
                            "Skip diversity-quintile annotation");
    o_stem = sub->add_option("--name", stem, "Output file stem")
                 ->capture_default_str();
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    std::vector<int> ks = parse_int_list(ks_csv, "--K");
    cfg.apply_levels(o_ks, "gen_writing", "k", ks);
    cfg.apply(o_count, "gen_writing", "count", count);
    cfg.apply(o_lexicon, "gen_writing", "lexicon", lexicon_path);
    cfg.apply(o_nobin, "gen_writing", "no_binning", no_binning);
    cfg.apply(o_stem, "gen_writing", "name", stem);
    require_distinct(ks, "--K");
    for (int k : ks) {
      if (k < 1) throw UsageError("K values must be >= 1");
    }
    if (count < 1) throw UsageError("--count must be >= 1");
    if (!no_binning && count % 5 != 0) {
      throw UsageError(
          "--count " + std::to_string(count) +
          " is not a multiple of 5, so diversity quintiles cannot be "
          "assigned; pass --no-binning to emit unbinned tasks");
    }

    if (!fs::exists(lexicon_path)) {
      throw PreflightError(
          "lexicon not found at " + lexicon_path +
          "; expected the 23-group keyword lexicon JSON (the source tree "
          "ships one at data/lexicon.json)");
    }
    writegen::Lexicon lexicon;
    try {
      lexicon = writegen::load_lexicon(lexicon_path);
    } catch (const std::exception& e) {
      throw PreflightError("lexicon " + lexicon_path + " is invalid: " +
                           e.what());
    }

    g.ensure_out_dir();
    fs::path target = g.out_dir() / (stem + ".jsonl");
    require_absent(target, "pick another --name or --out");

    std::vector<writegen::KeywordTask> tasks;
    if (no_binning) {
      for (int k : ks) {
        std::vector<writegen::KeywordTask> batch =
            writegen::sample_sets(k, count, g.seed, lexicon);
        for (auto& t : batch) tasks.push_back(std::move(t));
      }
    } else {
      writegen::WritingDatasetSpec spec;
      spec.ks = ks;
      spec.per_k = count;
      tasks = writegen::generate_dataset(spec, g.seed, lexicon);
    }
    std::vector<std::string> lines;
    lines.reserve(tasks.size());
    for (const auto& t : tasks) lines.push_back(writegen::to_json_line(t));
    write_lines(target, lines);
    out << "gen-writing: wrote " << tasks.size() << " tasks ("
        << ks.size() << " K levels x " << count << " sets) to "
        << target.string();
    if (no_binning) out << " [quintile annotation skipped]";
    out << "\n";
    return kExitSuccess;
  }
};

// ------------------------------------------------------------ verify

struct VerifyCmd {
  CLI::App* sub = nullptr;
  std::uint64_t trials = 100000;
  CLI::Option* o_trials = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "verify",
        "Run the closed-form verifiers and the simulation agreement suite");
    sub->fallthrough();
    o_trials = sub->add_option("--trials", trials,
                               "Monte-Carlo trials per grid cell")
                   ->capture_default_str();
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    cfg.apply(o_trials, "verify", "trials", trials);
    if (trials < 100) throw UsageError("--trials must be >= 100");

    bool all_ok = true;
    auto report = [&](bool ok, const std::string& text) {
      out << (ok ? "[ok]   " : "[FAIL] ") << text << "\n";
      all_ok = all_ok && ok;
    };

    // 1. Strict gain growth in both directions on the canonical grid.
    {
      theory::ModelParams base(0.9, 1, 1, 3, 0.95);
      theory::MonotonicityReport rep =
          theory::verify_monotonicity(base, {1, 6}, {1, 6});
      report(rep.passed(),
             "gain monotonicity: " + std::to_string(rep.points.size()) +
                 " grid points, " + std::to_string(rep.comparisons) +
                 " comparisons, " + std::to_string(rep.violations.size()) +
                 " violations, " +
                 std::to_string(rep.assumption_violated.size()) +
                 " excluded by the benefit screen");
    }

    // 2. Width saturation toward the aggregation ceiling.
    {
      theory::ModelParams base(0.9, 1, 2, 3, 1.0);
      theory::SaturationReport rep =
          theory::verify_width_saturation(base, 500, 1e-6);
      report(rep.converged && std::abs(rep.limit - 8.0) < 1e-9,
             "width saturation: |gain - " + short_num(rep.limit) + "| = " +
                 short_num(rep.final_abs_err) + " by width " +
                 std::to_string(rep.first_width_within_tol) +
                 " (tolerance 1e-06)");
    }

    // 3. Unbounded growth in depth.
    {
      theory::ModelParams base(0.9, 2, 1, 4, 0.99);
      int depth = theory::verify_depth_divergence(base, 1e6);
      report(depth > 0, "depth divergence: gain exceeds 1e+06 at depth " +
                            std::to_string(depth));
    }

    // 4. Benefit screen: a panel that cannot help is flagged, not failed.
    {
      theory::ModelParams weak(0.9, 1, 2, 2, 0.5);
      theory::GainAssessment a = theory::performance_gain(weak);
      double f = theory::improvement_factor(a.per_step, weak.n_agents, weak.r);
      out << "[flag] benefit assumption does not hold at (q=0.9, w=1, N=2, "
             "r=0.5): improvement factor "
          << short_num(f) << " <= 1 (gain " << short_num(a.gain)
          << "); such cells are excluded from monotonicity, never counted "
             "as failures\n";
      report(!a.assumption_ok,
             "benefit screen detects a non-improving panel at the injected "
             "point");
    }

    // 5. Monte-Carlo agreement with the closed forms across the full grid.
    {
      const double qs[] = {0.5, 0.7, 0.9};
      const int ws[] = {1, 2, 3};
      const int ds[] = {1, 2, 4};
      const int ns[] = {2, 3, 5};
      const double rs[] = {0.8, 1.0};
      int cells = 0, pass = 0;
      std::uint64_t idx = 0;
      for (double q : qs)
        for (int w : ws)
          for (int d : ds)
            for (int n : ns)
              for (double r : rs) {
                simkit::TrialConfig tc{theory::ModelParams(q, w, d, n, r),
                                       trials,
                                       rng::derive_seed(g.seed, "verify-cell",
                                                        idx++)};
                simkit::ComparisonReport rep = simkit::compare_to_closed_form(
                    tc, g.jobs, /*exact_ci=*/true);
                // The 3-sigma normal band degenerates to a point when every
                // trial succeeds; the exact binomial interval at the same
                // confidence stays valid there, so either one counts.
                bool single_ok =
                    rep.single_within_ci ||
                    (rep.single_exact_ci &&
                     rep.single_closed >= rep.single_exact_ci->lo &&
                     rep.single_closed <= rep.single_exact_ci->hi);
                bool multi_ok =
                    rep.multi_within_ci ||
                    (rep.multi_exact_ci &&
                     rep.multi_closed >= rep.multi_exact_ci->lo &&
                     rep.multi_closed <= rep.multi_exact_ci->hi);
                ++cells;
                if (single_ok && multi_ok) ++pass;
              }
      double frac = static_cast<double>(pass) / cells;
      report(frac >= 0.99,
             "simulation agreement: " + std::to_string(pass) + "/" +
                 std::to_string(cells) +
                 " cells within the 3-sigma band (need >= 99%) [trials=" +
                 std::to_string(trials) + "]");
    }

    if (!all_ok) {
      throw CheckFailure("verification failed; see the [FAIL] lines above");
    }
    out << "verify: PASS\n";
    return kExitSuccess;
  }
};

// ------------------------------------------------------------ simulate

struct SimulateCmd {
  CLI::App* sub = nullptr;
  double q = 0.9;
  int width = 1;
  int depth = 1;
  int n_agents = 3;
  double r = 1.0;
  std::uint64_t trials = 100000;
  bool exact_ci = false;
  CLI::Option *o_q = nullptr, *o_w = nullptr, *o_d = nullptr, *o_n = nullptr,
              *o_r = nullptr, *o_trials = nullptr, *o_exact = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "simulate",
        "Monte-Carlo one parameter point and compare with the closed forms");
    sub->fallthrough();
    o_q = sub->add_option("--q", q, "Per-subskill success probability")
             ->capture_default_str();
    o_w = sub->add_option("--width", width, "Subskills per step")
             ->capture_default_str();
    o_d = sub->add_option("--depth", depth, "Steps per task")
             ->capture_default_str();
    o_n = sub->add_option("--n-agents", n_agents, "Panel size")
             ->capture_default_str();
    o_r = sub->add_option("--r", r, "Aggregator reliability")
             ->capture_default_str();
    o_trials =
        sub->add_option("--trials", trials, "Monte-Carlo trials")
            ->capture_default_str();
    o_exact = sub->add_flag("--exact-ci", exact_ci,
                            "Also report exact binomial intervals");
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    cfg.apply(o_q, "simulate", "q", q);
    cfg.apply(o_w, "simulate", "width", width);
    cfg.apply(o_d, "simulate", "depth", depth);
    cfg.apply(o_n, "simulate", "n_agents", n_agents);
    cfg.apply(o_r, "simulate", "r", r);
    cfg.apply(o_trials, "simulate", "trials", trials);
    cfg.apply(o_exact, "simulate", "exact_ci", exact_ci);
    if (trials < 1) throw UsageError("--trials must be >= 1");

    std::optional<theory::ModelParams> params;
    try {
      params.emplace(q, width, depth, n_agents, r);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    simkit::TrialConfig tc{*params, trials,
                           rng::derive_seed(g.seed, "simulate")};
    simkit::ComparisonReport rep =
        simkit::compare_to_closed_form(tc, g.jobs, exact_ci);
    out << simkit::to_json(rep) << "\n";
    return kExitSuccess;
  }
};

// ------------------------------------------------------------ run

struct RunCmd {
  CLI::App* sub = nullptr;
  std::string dataset;
  std::string system = "both";
  std::string backend = "synthetic";
  double q = 0.9;
  double agg_r = 0.95;
  int n_agents = 3;
  int turns = 2;
  long max_tasks = -1;
  bool resume = false;
  std::string prompts;
  std::string remote_url;
  std::string remote_model;
  double temp_debater = 0.7;
  double temp_summarizer = 0.0;
  int timeout_seconds = 120;
  CLI::Option *o_dataset = nullptr, *o_system = nullptr, *o_backend = nullptr,
              *o_q = nullptr, *o_r = nullptr, *o_n = nullptr, *o_turns = nullptr,
              *o_max = nullptr, *o_resume = nullptr, *o_prompts = nullptr,
              *o_rurl = nullptr, *o_rmodel = nullptr, *o_td = nullptr,
              *o_ts = nullptr, *o_timeout = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "run", "Execute the single/multi systems over a dataset");
    sub->fallthrough();
    o_dataset = sub->add_option("--dataset", dataset, "Task dataset (JSONL)");
    o_system = sub->add_option("--system", system, "single | multi | both")
                   ->capture_default_str();
    o_backend =
        sub->add_option("--backend", backend, "synthetic | remote")
            ->capture_default_str();
    o_q = sub->add_option("--q", q, "Synthetic per-subskill success rate")
             ->capture_default_str();
    o_r = sub->add_option("--agg-r", agg_r, "Synthetic aggregator reliability")
             ->capture_default_str();
    o_n = sub->add_option("--n-agents", n_agents, "Debaters (excl. summarizer)")
             ->capture_default_str();
    o_turns = sub->add_option("--turns", turns, "Debate turns")
                  ->capture_default_str();
    o_max = sub->add_option("--max-tasks", max_tasks,
                            "Only run the first N tasks (<0: all)")
                ->capture_default_str();
    o_resume = sub->add_flag("--resume", resume,
                             "Continue an interrupted run in place");
    o_prompts = sub->add_option("--prompts", prompts,
                                "Prompt template JSON (default: built-in)");
    o_rurl = sub->add_option("--remote-url", remote_url,
                             "Chat-completions base URL (remote backend)");
    o_rmodel = sub->add_option("--remote-model", remote_model,
                               "Model name (remote backend)");
    o_td = sub->add_option("--temp-debater", temp_debater,
                           "Sampling temperature for debaters (remote)")
               ->capture_default_str();
    o_ts = sub->add_option("--temp-summarizer", temp_summarizer,
                           "Sampling temperature for the summarizer (remote)")
               ->capture_default_str();
    o_timeout = sub->add_option("--timeout", timeout_seconds,
                                "Per-request timeout in seconds (remote)")
                    ->capture_default_str();
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    cfg.apply(o_dataset, "run", "dataset", dataset);
    cfg.apply(o_system, "run", "system", system);
    cfg.apply(o_backend, "run", "backend", backend);
    cfg.apply(o_q, "run", "q", q);
    cfg.apply(o_r, "run", "aggregator_r", agg_r);
    cfg.apply(o_n, "run", "n_agents", n_agents);
    cfg.apply(o_turns, "run", "turns", turns);
    cfg.apply(o_max, "run", "max_tasks", max_tasks);
    cfg.apply(o_resume, "run", "resume", resume);
    cfg.apply(o_prompts, "run", "prompts", prompts);
    cfg.apply(o_rurl, "run", "remote_url", remote_url);
    cfg.apply(o_rmodel, "run", "remote_model", remote_model);
    cfg.apply(o_td, "run", "temperature_debater", temp_debater);
    cfg.apply(o_ts, "run", "temperature_summarizer", temp_summarizer);
    cfg.apply(o_timeout, "run", "timeout_seconds", timeout_seconds);

    if (dataset.empty()) {
      throw UsageError("run needs --dataset (or run.dataset in the config)");
    }
    std::vector<runner::SystemKind> systems;
    if (system == "single") {
      systems = {runner::SystemKind::kSingle};
    } else if (system == "multi") {
      systems = {runner::SystemKind::kMulti};
    } else if (system == "both") {
      systems = {runner::SystemKind::kSingle, runner::SystemKind::kMulti};
    } else {
      throw UsageError("--system must be single, multi, or both");
    }
    if (backend != "synthetic" && backend != "remote") {
      throw UsageError("--backend must be synthetic or remote");
    }
    if (q <= 0.0 || q > 1.0) throw UsageError("--q must lie in (0,1]");
    if (agg_r <= 0.0 || agg_r > 1.0)
      throw UsageError("--agg-r must lie in (0,1]");

    debate::DebateConfig dcfg;
    dcfg.n_agents = n_agents;
    dcfg.turns = turns;
    dcfg.jobs = 1;  // parallelism lives at the task level
    if (!prompts.empty()) {
      if (!fs::exists(prompts)) {
        throw PreflightError("prompt template file not found: " + prompts);
      }
      try {
        dcfg.templates = debate::load_templates(prompts);
      } catch (const std::exception& e) {
        throw PreflightError("prompt template file " + prompts +
                             " is invalid: " + e.what());
      }
    }
    if (turns < 1) throw UsageError("--turns must be >= 1");
    try {
      debate::validate_parity(dcfg);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }

    if (!fs::exists(dataset)) {
      throw PreflightError("dataset not found: " + dataset);
    }
    std::vector<std::string> lines = read_lines(dataset);
    if (lines.empty()) {
      throw PreflightError("dataset " + dataset + " is empty");
    }

    // Family detection by line shape.
    json probe;
    try {
      probe = json::parse(lines.front());
    } catch (const std::exception& e) {
      throw PreflightError("dataset line 1 is not valid JSON: " +
                           std::string(e.what()));
    }
    const bool is_math = probe.contains("nodes");
    const bool is_writing = probe.contains("keywords");
    if (is_math == is_writing) {
      throw PreflightError(
          "cannot tell the task family of " + dataset +
          " (expected arithmetic-DAG or keyword-writing JSONL lines)");
    }
    std::string family = is_math ? "math" : "writing";

    std::vector<runner::TaskUnit> units;
    std::unordered_map<std::string, backends::StochasticModel> models;
    runner::Scorer scorer;
    const std::uint64_t backend_seed = rng::derive_seed(g.seed, "backend");

    if (is_math) {
      auto truths = std::make_shared<std::unordered_map<std::string, Rational>>();
      for (size_t i = 0; i < lines.size(); ++i) {
        mathgen::DagProblem p;
        try {
          p = mathgen::problem_from_json(lines[i]);
        } catch (const std::exception& e) {
          throw PreflightError("dataset line " + std::to_string(i + 1) +
                               " is not a valid task: " + e.what());
        }
        std::string cell =
            "d" + std::to_string(p.depth) + "w" + std::to_string(p.width);
        units.push_back({cell, p.id,
                         p.rendered.empty() ? mathgen::render(p) : p.rendered});
        (*truths)[p.id] = p.ground_truth;
        if (backend == "synthetic") {
          backends::StochasticModel m;
          m.q = q;
          m.depth = p.depth;
          m.width = p.width;
          m.correct_answer = to_fraction_string(p.ground_truth);
          m.wrong_answer = to_fraction_string(p.ground_truth + 1);
          m.seed = backend_seed;
          models.emplace(p.id, std::move(m));
        }
      }
      scorer = [truths](const runner::TaskUnit& u, const std::string& answer) {
        return mathgen::grade(answer, truths->at(u.task_id)).correct() ? 1.0
                                                                       : 0.0;
      };
    } else {
      auto tasks =
          std::make_shared<std::unordered_map<std::string, writegen::KeywordTask>>();
      auto judge = std::make_shared<writegen::HeuristicJudge>();
      for (size_t i = 0; i < lines.size(); ++i) {
        writegen::KeywordTask t;
        try {
          t = writegen::task_from_json(lines[i]);
        } catch (const std::exception& e) {
          throw PreflightError("dataset line " + std::to_string(i + 1) +
                               " is not a valid task: " + e.what());
        }
        if (t.quintile < 1 || t.quintile > 5) {
          throw PreflightError(
              "task " + t.id +
              " has no diversity quintile; regenerate the dataset without "
              "--no-binning to run it");
        }
        std::string cell =
            "k" + std::to_string(t.k) + "q" + std::to_string(t.quintile);
        units.push_back({cell, t.id, writegen::render_prompt(t)});
        if (backend == "synthetic") {
          backends::StochasticModel m;
          m.q = q;
          m.depth = std::max(1, t.k / 4);
          m.width = t.quintile;
          m.correct_answer = ideal_essay(t);
          m.wrong_answer = degraded_essay(t);
          m.seed = backend_seed;
          models.emplace(t.id, std::move(m));
        }
        (*tasks)[t.id] = std::move(t);
      }
      scorer = [tasks, judge](const runner::TaskUnit& u,
                              const std::string& answer) {
        std::string essay = after_answer_marker(answer);
        return writegen::score_essay(essay, tasks->at(u.task_id), *judge)
            .composite;
      };
    }

    runner::BackendFactory factory;
    if (backend == "synthetic") {
      auto shared_models = std::make_shared<
          std::unordered_map<std::string, backends::StochasticModel>>(
          std::move(models));
      int n = n_agents;
      double rr = agg_r;
      factory = [shared_models, n, rr](const runner::TaskUnit& u) {
        const backends::StochasticModel& m = shared_models->at(u.task_id);
        runner::TaskBackends tb;
        tb.single = std::make_shared<backends::StochasticTaskBackend>("solo", m);
        for (int i = 0; i < n; ++i) {
          tb.debaters.push_back(
              std::make_shared<backends::StochasticTaskBackend>(
                  "debater-" + std::to_string(i + 1), m));
        }
        tb.summarizer =
            std::make_shared<backends::StochasticSummarizer>("aggregator", rr, m);
        return tb;
      };
    } else {
      if (remote_url.empty() || remote_model.empty()) {
        throw UsageError(
            "remote backend needs --remote-url and --remote-model");
      }
      backends::RemoteConfig rc;
      rc.base_url = remote_url;
      rc.model = remote_model;
      rc.temperature_debater = temp_debater;
      rc.temperature_summarizer = temp_summarizer;
      rc.timeout_seconds = timeout_seconds;
      std::shared_ptr<debate::AgentBackend> rb;
      try {
        rb = std::make_shared<backends::RemoteBackend>("remote", rc);
      } catch (const std::exception& e) {
        throw PreflightError(e.what());
      }
      int n = n_agents;
      factory = [rb, n](const runner::TaskUnit&) {
        runner::TaskBackends tb;
        tb.single = rb;
        tb.debaters.assign(static_cast<size_t>(n), rb);
        tb.summarizer = rb;
        return tb;
      };
    }

    g.ensure_out_dir();
    runner::CellwiseConfig rcfg;
    rcfg.systems = systems;
    rcfg.debate = dcfg;
    rcfg.jobs = g.jobs;
    rcfg.max_tasks = max_tasks;
    rcfg.records_path = g.out_dir() / "records.jsonl";
    rcfg.transcripts_path = g.out_dir() / "transcripts.jsonl";
    rcfg.resume = resume;
    if (!resume && fs::exists(rcfg.records_path)) {
      throw PreflightError("records file " + rcfg.records_path.string() +
                           " already exists; outputs are write-once (pass "
                           "--resume to continue an interrupted run)");
    }

    runner::CellwiseReport rep;
    try {
      rep = runner::run_cellwise(units, rcfg, factory, scorer);
    } catch (const std::invalid_argument& e) {
      throw PreflightError(e.what());
    } catch (const std::runtime_error& e) {
      throw PreflightError(e.what());
    }

    // Effective configuration fingerprint + run metadata. Wall time lives
    // here and only here: the records file stays byte-reproducible.
    ordered_json cfg_doc;
    cfg_doc["command"] = "run";
    cfg_doc["family"] = family;
    cfg_doc["dataset"] = dataset;
    cfg_doc["system"] = system;
    cfg_doc["backend"] = backend;
    cfg_doc["q"] = q;
    cfg_doc["aggregator_r"] = agg_r;
    cfg_doc["n_agents"] = n_agents;
    cfg_doc["turns"] = turns;
    cfg_doc["seed"] = g.seed;
    cfg_doc["jobs"] = g.jobs;
    cfg_doc["max_tasks"] = max_tasks;
    cfg_doc["prompts"] = prompts.empty() ? "builtin" : prompts;
    if (backend == "remote") {
      cfg_doc["remote_url"] = remote_url;
      cfg_doc["remote_model"] = remote_model;
      cfg_doc["temperature_debater"] = temp_debater;
      cfg_doc["temperature_summarizer"] = temp_summarizer;
    }
    ordered_json meta;
    meta["tool_version"] = kToolVersion;
    meta["config_hash"] = fnv1a64_hex(cfg_doc.dump());
    meta["config"] = cfg_doc;
    meta["records"] = rcfg.records_path.string();
    meta["transcripts"] = rcfg.transcripts_path.string();
    meta["counts"] = {{"tasks", rep.n_tasks},
                      {"units", rep.n_units},
                      {"completed", rep.n_completed},
                      {"skipped", rep.n_skipped},
                      {"failed", rep.n_failed}};
    meta["wall_seconds"] = rep.wall_seconds;
    write_text(g.out_dir() / "run_meta.json", meta.dump(2) + "\n");

    out << "run: " << rep.n_units << " units over " << rep.n_tasks
        << " tasks; " << rep.n_completed << " completed, " << rep.n_skipped
        << " already done, " << rep.n_failed << " failed; records at "
        << rcfg.records_path.string() << "\n";
    if (rep.n_failed > 0) {
      out << "run: " << rep.n_failed
          << " unit(s) recorded a failure; see the records file\n";
      return kExitTaskFailure;
    }
    return kExitSuccess;
  }

  static std::string ideal_essay(const writegen::KeywordTask& t) {
    std::string out;
    for (size_t i = 0; i < t.keywords.size(); ++i) {
      if (i > 0) out += " ";
      out += "This passage features " + t.keywords[i].text + " prominently.";
    }
    return out;
  }

  static std::string degraded_essay(const writegen::KeywordTask& t) {
    const size_t keep = t.keywords.size() / 2;
    std::string out;
    for (size_t i = 0; i < t.keywords.size(); ++i) {
      if (i > 0) out += " ";
      if (i < keep) {
        out += "This passage features " + t.keywords[i].text + " prominently.";
      } else {
        out += "The attempt wandered off before covering another required "
               "item here.";
      }
    }
    return out;
  }
};

// ----------------------------------------------------- record-file loading

struct LoadedRecords {
  std::vector<metrics::ScoreRecord> scores;
  long failed_excluded = 0;
};

LoadedRecords load_records(const std::string& path) {
  if (!fs::exists(path)) {
    throw PreflightError("records file not found: " + path);
  }
  LoadedRecords out;
  std::vector<std::string> lines = read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    runner::ResultRecord rec;
    try {
      rec = runner::record_from_json(lines[i]);
    } catch (const std::exception& e) {
      throw PreflightError("records line " + std::to_string(i + 1) +
                           " is corrupt: " + e.what());
    }
    if (rec.failed) {
      ++out.failed_excluded;
      continue;
    }
    out.scores.push_back({rec.cell_id, rec.task_id, rec.system, rec.score});
  }
  return out;
}

std::vector<metrics::CellMetrics> aggregate_or_preflight(
    const std::vector<metrics::ScoreRecord>& scores) {
  try {
    return metrics::aggregate_cells(scores);
  } catch (const std::invalid_argument& e) {
    throw PreflightError(e.what());
  }
}

// ------------------------------------------------------------ score

struct ScoreCmd {
  CLI::App* sub = nullptr;
  std::string records;
  CLI::Option* o_records = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "score", "Aggregate run records into per-cell mean scores and gains");
    sub->fallthrough();
    o_records = sub->add_option("--records", records, "Run records (JSONL)");
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    cfg.apply(o_records, "score", "records", records);
    if (records.empty()) {
      throw UsageError("score needs --records (or score.records in the config)");
    }
    LoadedRecords loaded = load_records(records);
    std::vector<metrics::CellMetrics> cells =
        aggregate_or_preflight(loaded.scores);

    g.ensure_out_dir();
    std::string csv =
        "cell,depth,width,n_single,n_multi,single_mean,multi_mean,gain\n";
    for (const auto& c : cells) {
      csv += c.cell_id + "," + std::to_string(c.depth) + "," +
             std::to_string(c.width) + "," + std::to_string(c.n_single) +
             "," + std::to_string(c.n_multi) + ",";
      csv += c.n_single > 0 ? format_double(c.single_score) : std::string("NA");
      csv += ",";
      csv += c.n_multi > 0 ? format_double(c.multi_score) : std::string("NA");
      csv += ",";
      csv += c.gain_defined ? format_double(c.gain) : std::string("NA");
      csv += "\n";
    }
    fs::path target = g.out_dir() / "cells.csv";
    write_text(target, csv);

    long defined = 0;
    for (const auto& c : cells) defined += c.gain_defined ? 1 : 0;
    out << "score: " << cells.size() << " cells (" << defined
        << " with defined gain) from " << loaded.scores.size()
        << " records";
    if (loaded.failed_excluded > 0) {
      out << " (" << loaded.failed_excluded << " failed records excluded)";
    }
    out << " -> " << target.string() << "\n";
    return kExitSuccess;
  }
};

// ------------------------------------------------------------ analyze

struct AnalyzeCmd {
  CLI::App* sub = nullptr;
  std::string records;
  CLI::Option* o_records = nullptr;

  void setup(CLI::App& app) {
    sub = app.add_subcommand(
        "analyze",
        "Heatmaps and the depth/width attribution from run records");
    sub->fallthrough();
    o_records = sub->add_option("--records", records, "Run records (JSONL)");
  }

  int run(Globals& g, const ConfigFile& cfg, std::ostream& out) {
    cfg.apply(o_records, "analyze", "records", records);
    if (records.empty()) {
      throw UsageError(
          "analyze needs --records (or analyze.records in the config)");
    }
    LoadedRecords loaded = load_records(records);
    std::vector<metrics::CellMetrics> cells =
        aggregate_or_preflight(loaded.scores);

    g.ensure_out_dir();
    metrics::ShapleyResult shap;
    try {
      shap = metrics::shapley_scores(cells);
    } catch (const std::invalid_argument& e) {
      throw PreflightError(e.what());
    }
    // Attribution shares must recompose into the full-model fit; a drift
    // here means the arithmetic is broken, not that the data is bad.
    if (std::abs(shap.s_depth + shap.s_width - shap.r2_full) > 1e-9) {
      throw CheckFailure(
          "attribution identity violated: s_depth + s_width != r2_full");
    }

    try {
      metrics::emit_heatmap(cells, g.out_dir() / "gain");
      metrics::emit_score_heatmaps(cells, g.out_dir() / "scores.svg");
    } catch (const std::exception& e) {
      throw PreflightError(e.what());
    }
    write_text(g.out_dir() / "shapley.json", metrics::shapley_to_json(shap));

    out << "analyze: " << cells.size() << " cells (" << shap.cells_used
        << " used, " << shap.cells_excluded << " without defined gain)";
    if (loaded.failed_excluded > 0) {
      out << "; " << loaded.failed_excluded << " failed records excluded";
    }
    out << "\n";
    out << "analyze: s_depth = " << format_double(shap.s_depth)
        << ", s_width = " << format_double(shap.s_width)
        << ", dominant factor: " << shap.dominant << "\n";
    out << "analyze: artifacts: gain.csv gain.svg scores.svg shapley.json in "
        << g.out_dir().string() << "\n";
    return kExitSuccess;
  }
};

}  // namespace

// ---------------------------------------------------------------- exports

std::string fnv1a64_hex(std::string_view data) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Depth/width collaboration benchmark toolkit"};
  app.name("dwlab");
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  Globals g;
  g.o_seed = app.add_option("--seed", g.seed,
                            "Top-level seed; every random draw derives "
                            "from it by labeled streams")
                 ->capture_default_str();
  app.add_option("--config", g.config_path,
                 "JSON config file; precedence: flags > file > defaults");
  g.o_out = app.add_option("--out", g.out, "Output directory")
                ->capture_default_str();
  g.o_jobs = app.add_option("--jobs", g.jobs, "Worker threads")
                 ->capture_default_str();

  GenMathCmd gen_math;
  GenWritingCmd gen_writing;
  VerifyCmd verify;
  SimulateCmd simulate;
  RunCmd run_cmd;
  ScoreCmd score;
  AnalyzeCmd analyze;
  gen_math.setup(app);
  gen_writing.setup(app);
  verify.setup(app);
  simulate.setup(app);
  run_cmd.setup(app);
  score.setup(app);
  analyze.setup(app);

  std::vector<const char*> argv;
  argv.push_back("dwlab");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()),
              const_cast<char**>(argv.data()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitSuccess;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitSuccess;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return kExitSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run 'dwlab --help' for usage\n";
    return kExitUsage;
  }

  try {
    ConfigFile cfg = ConfigFile::load(g.config_path);
    g.resolve(cfg);
    if (gen_math.sub->parsed()) return gen_math.run(g, cfg, out);
    if (gen_writing.sub->parsed()) return gen_writing.run(g, cfg, out);
    if (verify.sub->parsed()) return verify.run(g, cfg, out);
    if (simulate.sub->parsed()) return simulate.run(g, cfg, out);
    if (run_cmd.sub->parsed()) return run_cmd.run(g, cfg, out);
    if (score.sub->parsed()) return score.run(g, cfg, out);
    if (analyze.sub->parsed()) return analyze.run(g, cfg, out);
    err << "error: no command selected\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const PreflightError& e) {
    err << "error: " << e.what() << "\n";
    return kExitPreflight;
  } catch (const CheckFailure& e) {
    err << "error: " << e.what() << "\n";
    return kExitCheckFailure;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace dwlab::cli
