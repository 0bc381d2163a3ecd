#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dwlab::writegen {

// Constrained-writing benchmark: K-keyword sets drawn from a 23-group
// occupation lexicon. K is the depth knob (one sentence expected per
// keyword); the width knob is the diversity of the set, measured as
// normalized Shannon entropy of the keyword groups and discretized into
// quintiles.

struct LexiconGroup {
  int id = 0;
  std::string name;
  std::vector<std::string> keywords;
};

struct Lexicon {
  int version = 1;
  std::vector<LexiconGroup> groups;  // ids 1..23 in order

  std::size_t total_keywords() const;
};

// Throws std::invalid_argument unless: exactly 23 groups with ids 1..23 in
// order, every group named and holding >= 20 keywords, all keywords
// lowercase, non-empty and unique across the whole lexicon.
void validate(const Lexicon& lexicon);

Lexicon lexicon_from_json(const std::string& text);
Lexicon load_lexicon(const std::filesystem::path& path);
std::string to_json(const Lexicon& lexicon);

enum class EntropyIndexing { kCategory, kSlot };

// Normalized Shannon entropy of a category multiset: H / log2(K) where
// H = -sum_c (m_c/K) log2 (m_c/K) over distinct categories c (kCategory).
// kSlot is a compatibility reading that sums the same term once per slot
// (so repeats are double-counted; it can exceed 1 and is not the default).
// K <= 1 has no normalization (log2 K = 0) and returns 0 by convention.
double normalized_entropy(std::span<const int> group_ids,
                          EntropyIndexing indexing = EntropyIndexing::kCategory);

struct KeywordRef {
  std::string text;
  int group = 0;
};

struct KeywordTask {
  std::string id;
  int k = 0;  // depth: required keyword count == target sentence count
  std::vector<KeywordRef> keywords;
  double entropy_norm = 0.0;
  int quintile = 0;  // width level 1..5; 0 until binned
  std::uint64_t seed = 0;
};

// n sets of k distinct keywords, uniform without replacement from the pooled
// lexicon; deterministic in (k, n, seed). Task i gets id "write-k{k}-{i}" and
// its own derived seed, so any task is reproducible standalone.
std::vector<KeywordTask> sample_sets(int k, int n, std::uint64_t seed,
                                     const Lexicon& lexicon);

// Annotates quintile 1..5 in place: stable sort by (entropy_norm, id)
// ascending, first fifth -> 1, ..., last fifth -> 5. The assignment depends
// only on the task multiset, not on input order. Size must be a positive
// multiple of 5.
void bin_quintiles(std::vector<KeywordTask>& tasks);

// The writing instruction shown to an agent; derived from the task fields.
std::string render_prompt(const KeywordTask& task);

struct ScoreDiagnostics {
  int sentence_count = 0;
  double coverage = 0.0;  // fraction of keywords matched
  std::vector<std::string> missing_keywords;
};

struct WritingScore {
  double standard = 0.0;   // [0,1] constraint satisfaction
  double quality = 0.0;    // [0,10] judged quality
  double composite = 0.0;  // standard * quality, [0,10]
  ScoreDiagnostics diagnostics;
};

// Sentence segmentation: split on {. ! ?} followed by whitespace plus an
// uppercase letter, or end of text; a fixed abbreviation stoplist (mr, dr,
// e.g., etc, ...) suppresses false boundaries after '.'.
std::vector<std::string> split_sentences(const std::string& text);

// Case-insensitive, word-boundary, exact-token match; multiword keywords
// match as contiguous phrases. No stemming.
bool keyword_present(const std::string& text, const std::string& keyword);

// standard = 0.5 * max(0, 1 - |n_sentences - k|/k) + 0.5 * coverage.
// Fills standard + diagnostics; quality and composite stay 0.
WritingScore standard_score(const std::string& essay, int k,
                            const std::vector<KeywordRef>& keywords);

// Validates standard in [0,1] and quality in [0,10]; returns the product.
double composite_score(double standard, double quality);

class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string name() const = 0;
  // Quality in [0,10]. Implementations must be deterministic per input or
  // clearly documented otherwise.
  virtual double score(const std::string& essay, const KeywordTask& task) = 0;
};

// Offline deterministic stand-in for an LLM quality judge. Averages three
// measurable proxies, each mapped to [0,10]:
//   - sentence-length variation: 10 * clamp(1 - |cv - 0.35| / 0.35, 0, 1)
//     where cv is the coefficient of variation of sentence word counts
//     (0 when fewer than two sentences);
//   - vocabulary richness: 10 * min(1, type_token_ratio / 0.6);
//   - keyword dispersion: 10 * (sentences containing a keyword) / sentences.
// Not a claim of equivalence to an LLM judge.
class HeuristicJudge : public JudgeBackend {
 public:
  std::string name() const override { return "heuristic-v1"; }
  double score(const std::string& essay, const KeywordTask& task) override;
};

// standard_score + judge -> composite. Throws if the judge leaves [0,10].
WritingScore score_essay(const std::string& essay, const KeywordTask& task,
                         JudgeBackend& judge);

struct WritingDatasetSpec {
  std::vector<int> ks{4, 8, 12, 16, 20};
  int per_k = 500;  // must be a positive multiple of 5
};

// sample_sets + bin_quintiles per K, concatenated in K order.
std::vector<KeywordTask> generate_dataset(const WritingDatasetSpec& spec,
                                          std::uint64_t seed,
                                          const Lexicon& lexicon);

std::string to_json_line(const KeywordTask& task);
KeywordTask task_from_json(const std::string& line);

}  // namespace dwlab::writegen
