#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dwlab/rational.hpp"

namespace dwlab::mathgen {

// Synthetic arithmetic problems over a DAG of named quantities. Exactly one
// leaf is an unknown; every node on the path from that leaf to the root uses
// only ADD/SUB/MUL, which keeps the root value affine in the unknown
// (root(x) = a*x + b) so the unique solution is recoverable exactly. SQUARE
// and SQRT appear only off that path, and SQRT operands are constructed to be
// perfect squares so all values stay rational.

enum class DagOp { kLeaf, kAdd, kSub, kMul, kSquare, kSqrt };

std::string_view op_name(DagOp op);
DagOp op_from_name(std::string_view name);

struct DagNode {
  int id = 0;  // 1-based; children always carry smaller ids than the parent
  DagOp op = DagOp::kLeaf;
  std::vector<int> children;
  std::optional<Rational> value;  // constant leaves only
  bool unknown = false;           // exactly one leaf per problem
};

struct DagProblem {
  std::string id;
  int depth = 0;  // levels, leaves count as level 1
  int width = 0;  // fan-in of every ADD/SUB/MUL node
  std::uint64_t seed = 0;
  std::vector<DagNode> nodes;  // topologically ordered: nodes[i].id == i+1
  int root = 0;
  int unknown_leaf = 0;
  Rational ground_truth;  // value of the unknown leaf
  Rational root_value;    // value of the root under ground_truth
  std::string rendered;
};

struct GenConfig {
  int leaf_min = -9;
  int leaf_max = 9;
  double unary_share = 0.25;  // chance an off-path internal node is SQUARE/SQRT
  int max_attempts = 64;      // rebuild budget for degenerate draws
};

struct GenerationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateProblemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic in (depth, width, seed, cfg). depth >= 2, width >= 2.
DagProblem generate_problem(int depth, int width, std::uint64_t seed,
                            const GenConfig& cfg = {});

// Evaluates the DAG with the unknown leaf bound to x. Throws EvaluationError
// on malformed node tables, negative or non-square SQRT operands.
Rational evaluate(const DagProblem& p, const Rational& x);

// Affine coefficients of the root in the unknown: root(x) = a*x + b,
// recovered from two evaluations (b = root(0), a = root(1) - b).
struct AffineForm {
  Rational a;
  Rational b;
};
AffineForm affine_form(const DagProblem& p);

// Recovers the unknown from the stored root value. Throws
// DegenerateProblemError when the root does not depend on the unknown (a==0).
Rational solve_unknown(const DagProblem& p);

// One sentence per node in id order, then the root-value statement, then the
// question: nodes.size() + 2 sentences in total.
std::string render(const DagProblem& p);

enum class GradeOutcome { kCorrect, kWrong, kUnparseable };

struct GradeResult {
  GradeOutcome outcome = GradeOutcome::kUnparseable;
  std::optional<Rational> parsed;  // last value extracted from the answer text
  bool correct() const { return outcome == GradeOutcome::kCorrect; }
};

// Extracts the answer value from free-form text and compares it with `truth`
// in exact arithmetic, accepting |parsed - truth| <= tol. An "ANSWER:" marker
// (case-insensitive) takes precedence: the first number after its last
// occurrence wins; otherwise the last number anywhere in the text is used.
// Fractions "p/q" and decimals (optional exponent) both parse exactly.
GradeResult grade(const std::string& answer_text, const Rational& truth,
                  double tol = 1e-6);

// One-line JSON for dataset files. include_truth=false omits ground_truth
// (exam mode); the paired answer-key line carries {"id", "ground_truth"}.
std::string to_json_line(const DagProblem& p, bool include_truth = true);
std::string answer_key_line(const DagProblem& p);
DagProblem problem_from_json(const std::string& line);

struct MathDatasetSpec {
  std::vector<int> depths{2, 3, 4};
  std::vector<int> widths{2, 3, 4};
  int per_cell = 100;
};

// Problem i of cell (d, w) is generated from a seed derived from
// (seed, "mathgen", d, w, i), so any subset of cells reproduces identically.
std::vector<DagProblem> generate_dataset(const MathDatasetSpec& spec,
                                         std::uint64_t seed,
                                         const GenConfig& cfg = {});

}  // namespace dwlab::mathgen
