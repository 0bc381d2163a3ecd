#include "dwlab/writegen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "dwlab/rng.hpp"

namespace dwlab::writegen {

namespace {

using nlohmann::ordered_json;

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Token before a '.' with its internal dots removed ("e.g." -> "eg"),
// used to suppress sentence boundaries after common abbreviations.
const std::set<std::string>& abbreviation_stoplist() {
  static const std::set<std::string> kStoplist = {
      "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr",
      "vs", "etc", "eg", "ie", "no", "fig", "al"};
  return kStoplist;
}

bool ends_with_abbreviation(const std::string& text, std::size_t dot_pos) {
  std::string token;
  for (std::size_t i = dot_pos; i-- > 0;) {
    char c = text[i];
    if (is_word_char(c)) {
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (c == '.') {
      continue;  // internal dots of "e.g.", "i.e."
    } else {
      break;
    }
  }
  std::reverse(token.begin(), token.end());
  return !token.empty() && abbreviation_stoplist().count(token) != 0u;
}

std::string trim_copy(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string task_id(int k, int index) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "write-k%d-%04d", k, index);
  return buf;
}

std::vector<std::string> words_of(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (is_word_char(c)) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::size_t Lexicon::total_keywords() const {
  std::size_t n = 0;
  for (const LexiconGroup& g : groups) n += g.keywords.size();
  return n;
}

void validate(const Lexicon& lexicon) {
  if (lexicon.groups.size() != 23) {
    throw std::invalid_argument("lexicon must have exactly 23 groups");
  }
  std::set<std::string> seen;
  for (std::size_t i = 0; i < lexicon.groups.size(); ++i) {
    const LexiconGroup& g = lexicon.groups[i];
    if (g.id != static_cast<int>(i) + 1) {
      throw std::invalid_argument("group ids must be 1..23 in order");
    }
    if (g.name.empty()) throw std::invalid_argument("group name must be non-empty");
    if (g.keywords.size() < 20) {
      throw std::invalid_argument("group '" + g.name + "' has fewer than 20 keywords");
    }
    for (const std::string& kw : g.keywords) {
      if (kw.empty()) throw std::invalid_argument("empty keyword in group '" + g.name + "'");
      if (kw != lower(kw)) {
        throw std::invalid_argument("keyword not lowercase: '" + kw + "'");
      }
      if (!seen.insert(kw).second) {
        throw std::invalid_argument("duplicate keyword across lexicon: '" + kw + "'");
      }
    }
  }
}

Lexicon lexicon_from_json(const std::string& text) {
  ordered_json j = ordered_json::parse(text);
  Lexicon lex;
  lex.version = j.value("version", 1);
  for (const auto& gj : j.at("groups")) {
    LexiconGroup g;
    g.id = gj.at("id").get<int>();
    g.name = gj.at("name").get<std::string>();
    g.keywords = gj.at("keywords").get<std::vector<std::string>>();
    lex.groups.push_back(std::move(g));
  }
  validate(lex);
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open lexicon file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return lexicon_from_json(buf.str());
}

std::string to_json(const Lexicon& lexicon) {
  ordered_json j;
  j["version"] = lexicon.version;
  j["groups"] = ordered_json::array();
  for (const LexiconGroup& g : lexicon.groups) {
    ordered_json gj;
    gj["id"] = g.id;
    gj["name"] = g.name;
    gj["keywords"] = g.keywords;
    j["groups"].push_back(std::move(gj));
  }
  return j.dump(1);
}

double normalized_entropy(std::span<const int> group_ids, EntropyIndexing indexing) {
  const std::size_t k = group_ids.size();
  if (k <= 1) return 0.0;
  std::map<int, int> counts;
  for (int g : group_ids) ++counts[g];
  const double kd = static_cast<double>(k);
  double h = 0.0;
  for (const auto& [group, m] : counts) {
    const double p = static_cast<double>(m) / kd;
    const double term = -p * std::log2(p);
    // kCategory counts each category once; kSlot repeats the term for every
    // slot occupied by that category (the literal slot-indexed sum).
    h += indexing == EntropyIndexing::kCategory ? term : static_cast<double>(m) * term;
  }
  return h / std::log2(kd);
}

std::vector<KeywordTask> sample_sets(int k, int n, std::uint64_t seed,
                                     const Lexicon& lexicon) {
  validate(lexicon);
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  if (n < 1) throw std::invalid_argument("n must be >= 1");

  std::vector<KeywordRef> pool;
  pool.reserve(lexicon.total_keywords());
  for (const LexiconGroup& g : lexicon.groups) {
    for (const std::string& kw : g.keywords) pool.push_back({kw, g.id});
  }
  if (static_cast<std::size_t>(k) > pool.size()) {
    throw std::invalid_argument("k exceeds the pooled keyword count");
  }

  std::vector<KeywordTask> tasks;
  tasks.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::uint64_t stream = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k)) << 32) |
                           static_cast<std::uint32_t>(i);
    KeywordTask t;
    t.id = task_id(k, i);
    t.k = k;
    t.seed = rng::derive_seed(seed, "writegen", stream);

    // Partial Fisher-Yates over pool indices: the first k slots end up as a
    // uniform without-replacement sample.
    rng::SequenceRng gen(t.seed, 0);
    std::vector<std::uint32_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0u);
    std::vector<int> gids;
    gids.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) {
      std::int64_t pick = gen.next_int(j, static_cast<std::int64_t>(pool.size()) - 1);
      std::swap(idx[static_cast<std::size_t>(j)], idx[static_cast<std::size_t>(pick)]);
      const KeywordRef& kw = pool[idx[static_cast<std::size_t>(j)]];
      t.keywords.push_back(kw);
      gids.push_back(kw.group);
    }
    t.entropy_norm = normalized_entropy(gids);
    tasks.push_back(std::move(t));
  }
  return tasks;
}

void bin_quintiles(std::vector<KeywordTask>& tasks) {
  if (tasks.empty() || tasks.size() % 5 != 0) {
    throw std::invalid_argument("quintile binning needs a positive multiple of 5 tasks");
  }
  std::vector<std::size_t> order(tasks.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (tasks[a].entropy_norm != tasks[b].entropy_norm) {
      return tasks[a].entropy_norm < tasks[b].entropy_norm;
    }
    return tasks[a].id < tasks[b].id;
  });
  const std::size_t per_bin = tasks.size() / 5;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    tasks[order[rank]].quintile = static_cast<int>(rank / per_bin) + 1;
  }
}

std::string render_prompt(const KeywordTask& task) {
  std::string out = "Write a short passage of about " + std::to_string(task.k) +
                    " sentences that naturally uses every one of these required terms: ";
  for (std::size_t i = 0; i < task.keywords.size(); ++i) {
    if (i > 0) out += ", ";
    out += task.keywords[i].text;
  }
  out += ". Use each term at least once.";
  return out;
}

std::vector<std::string> split_sentences(const std::string& text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    if (c == '.' && ends_with_abbreviation(text, i)) continue;

    // Boundary iff followed by end of text (modulo trailing space) or by
    // whitespace and then an uppercase letter.
    std::size_t j = i + 1;
    while (j < n && (text[j] == '.' || text[j] == '!' || text[j] == '?')) ++j;
    std::size_t after_punct = j;
    while (j < n && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    bool at_end = j >= n;
    bool new_sentence = j > after_punct && j < n &&
                        std::isupper(static_cast<unsigned char>(text[j])) != 0;
    if (at_end || new_sentence) {
      std::string sentence = trim_copy(
          std::string_view(text).substr(start, after_punct - start));
      if (!sentence.empty()) out.push_back(std::move(sentence));
      start = j;
      i = after_punct - 1;
    }
  }
  if (start < n) {
    std::string tail = trim_copy(std::string_view(text).substr(start));
    if (!tail.empty()) out.push_back(std::move(tail));
  }
  return out;
}

bool keyword_present(const std::string& text, const std::string& keyword) {
  if (keyword.empty()) return false;
  std::string hay = lower(text);
  std::string needle = lower(keyword);
  std::size_t pos = 0;
  while ((pos = hay.find(needle, pos)) != std::string::npos) {
    bool left_ok = pos == 0 || !is_word_char(hay[pos - 1]);
    std::size_t end = pos + needle.size();
    bool right_ok = end >= hay.size() || !is_word_char(hay[end]);
    if (left_ok && right_ok) return true;
    ++pos;
  }
  return false;
}

WritingScore standard_score(const std::string& essay, int k,
                            const std::vector<KeywordRef>& keywords) {
  if (k < 1) throw std::invalid_argument("k must be >= 1");
  WritingScore score;
  score.diagnostics.sentence_count = static_cast<int>(split_sentences(essay).size());

  int matched = 0;
  for (const KeywordRef& kw : keywords) {
    if (keyword_present(essay, kw.text)) {
      ++matched;
    } else {
      score.diagnostics.missing_keywords.push_back(kw.text);
    }
  }
  score.diagnostics.coverage = static_cast<double>(matched) / static_cast<double>(k);

  const double sentence_gap =
      std::abs(static_cast<double>(score.diagnostics.sentence_count - k)) /
      static_cast<double>(k);
  const double sentence_subscore = std::max(0.0, 1.0 - sentence_gap);
  score.standard = 0.5 * sentence_subscore + 0.5 * score.diagnostics.coverage;
  return score;
}

double composite_score(double standard, double quality) {
  if (!(standard >= 0.0 && standard <= 1.0)) {
    throw std::invalid_argument("standard score must be in [0,1]");
  }
  if (!(quality >= 0.0 && quality <= 10.0)) {
    throw std::invalid_argument("quality score must be in [0,10]");
  }
  return standard * quality;
}

double HeuristicJudge::score(const std::string& essay, const KeywordTask& task) {
  std::vector<std::string> sentences = split_sentences(essay);
  if (sentences.empty()) return 0.0;

  // Sentence-length variation: reward a coefficient of variation near 0.35.
  double s_var = 0.0;
  if (sentences.size() >= 2) {
    std::vector<double> lens;
    lens.reserve(sentences.size());
    for (const std::string& s : sentences) {
      lens.push_back(static_cast<double>(words_of(s).size()));
    }
    double mean = std::accumulate(lens.begin(), lens.end(), 0.0) /
                  static_cast<double>(lens.size());
    if (mean > 0.0) {
      double var = 0.0;
      for (double l : lens) var += (l - mean) * (l - mean);
      var /= static_cast<double>(lens.size());
      double cv = std::sqrt(var) / mean;
      s_var = 10.0 * std::clamp(1.0 - std::abs(cv - 0.35) / 0.35, 0.0, 1.0);
    }
  }

  // Vocabulary richness: type-token ratio against a 0.6 target.
  std::vector<std::string> all_words = words_of(essay);
  double s_ttr = 0.0;
  if (!all_words.empty()) {
    std::set<std::string> distinct(all_words.begin(), all_words.end());
    double ttr = static_cast<double>(distinct.size()) /
                 static_cast<double>(all_words.size());
    s_ttr = 10.0 * std::min(1.0, ttr / 0.6);
  }

  // Keyword dispersion: fraction of sentences touching a required term.
  int hit = 0;
  for (const std::string& s : sentences) {
    for (const KeywordRef& kw : task.keywords) {
      if (keyword_present(s, kw.text)) {
        ++hit;
        break;
      }
    }
  }
  double s_disp = 10.0 * static_cast<double>(hit) / static_cast<double>(sentences.size());

  return (s_var + s_ttr + s_disp) / 3.0;
}

WritingScore score_essay(const std::string& essay, const KeywordTask& task,
                         JudgeBackend& judge) {
  WritingScore score = standard_score(essay, task.k, task.keywords);
  double quality = judge.score(essay, task);
  if (!(quality >= 0.0 && quality <= 10.0)) {
    throw std::runtime_error("judge '" + judge.name() + "' returned a score outside [0,10]");
  }
  score.quality = quality;
  score.composite = composite_score(score.standard, score.quality);
  return score;
}

std::vector<KeywordTask> generate_dataset(const WritingDatasetSpec& spec,
                                          std::uint64_t seed,
                                          const Lexicon& lexicon) {
  if (spec.ks.empty()) throw std::invalid_argument("dataset needs at least one K");
  if (spec.per_k < 5 || spec.per_k % 5 != 0) {
    throw std::invalid_argument("per_k must be a positive multiple of 5");
  }
  std::vector<KeywordTask> out;
  out.reserve(spec.ks.size() * static_cast<std::size_t>(spec.per_k));
  for (int k : spec.ks) {
    std::vector<KeywordTask> batch = sample_sets(k, spec.per_k, seed, lexicon);
    bin_quintiles(batch);
    for (KeywordTask& t : batch) out.push_back(std::move(t));
  }
  return out;
}

std::string to_json_line(const KeywordTask& task) {
  ordered_json j;
  j["id"] = task.id;
  j["K"] = task.k;
  j["keywords"] = ordered_json::array();
  for (const KeywordRef& kw : task.keywords) {
    ordered_json kj;
    kj["text"] = kw.text;
    kj["group"] = kw.group;
    j["keywords"].push_back(std::move(kj));
  }
  j["entropy_norm"] = task.entropy_norm;
  j["quintile"] = task.quintile;
  j["seed"] = task.seed;
  return j.dump();
}

KeywordTask task_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  KeywordTask t;
  t.id = j.at("id").get<std::string>();
  t.k = j.at("K").get<int>();
  for (const auto& kj : j.at("keywords")) {
    t.keywords.push_back({kj.at("text").get<std::string>(), kj.at("group").get<int>()});
  }
  t.entropy_norm = j.at("entropy_norm").get<double>();
  t.quintile = j.at("quintile").get<int>();
  t.seed = j.at("seed").get<std::uint64_t>();

  std::vector<int> gids;
  gids.reserve(t.keywords.size());
  for (const KeywordRef& kw : t.keywords) gids.push_back(kw.group);
  double recomputed = normalized_entropy(gids);
  if (std::abs(recomputed - t.entropy_norm) > 1e-12) {
    throw std::invalid_argument("stored entropy_norm disagrees with keyword groups");
  }
  return t;
}

}  // namespace dwlab::writegen
