#include "dwlab/mathgen.hpp"

#include <cstdio>
#include <regex>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "dwlab/rng.hpp"

namespace dwlab::mathgen {

namespace {

using nlohmann::ordered_json;

std::string node_name(int id) { return "n" + std::to_string(id); }

// "n1 and n2" / "n1, n2 and n3"
std::string list_names(const std::vector<int>& ids, std::size_t from) {
  std::string out;
  for (std::size_t i = from; i < ids.size(); ++i) {
    if (i > from) out += (i + 1 == ids.size()) ? " and " : ", ";
    out += node_name(ids[i]);
  }
  return out;
}

Rational exact_sqrt(const Rational& v) {
  if (v < 0) throw EvaluationError("square root of a negative value");
  BigInt num = numerator(v);
  BigInt den = denominator(v);
  BigInt rn = sqrt(num);
  BigInt rd = sqrt(den);
  if (rn * rn != num || rd * rd != den) {
    throw EvaluationError("square root operand is not a perfect square");
  }
  return Rational(rn, rd);
}

void validate_structure(const DagProblem& p) {
  const int n = static_cast<int>(p.nodes.size());
  if (n == 0) throw EvaluationError("empty node table");
  if (p.root < 1 || p.root > n) throw EvaluationError("root id out of range");
  int unknown_count = 0;
  for (int i = 0; i < n; ++i) {
    const DagNode& node = p.nodes[static_cast<std::size_t>(i)];
    if (node.id != i + 1) throw EvaluationError("node ids must be 1..n in order");
    for (int c : node.children) {
      if (c < 1 || c >= node.id) {
        throw EvaluationError("child ids must precede their parent");
      }
    }
    switch (node.op) {
      case DagOp::kLeaf:
        if (!node.children.empty()) throw EvaluationError("leaf with children");
        if (node.unknown == node.value.has_value()) {
          throw EvaluationError("leaf must be either unknown or a constant");
        }
        if (node.unknown) ++unknown_count;
        break;
      case DagOp::kAdd:
      case DagOp::kSub:
      case DagOp::kMul:
        if (node.children.size() < 2) throw EvaluationError("n-ary node needs >= 2 children");
        if (node.value || node.unknown) throw EvaluationError("internal node with leaf fields");
        break;
      case DagOp::kSquare:
      case DagOp::kSqrt:
        if (node.children.size() != 1) throw EvaluationError("unary node needs exactly 1 child");
        if (node.value || node.unknown) throw EvaluationError("internal node with leaf fields");
        break;
    }
  }
  if (unknown_count != 1) throw EvaluationError("problem must have exactly one unknown leaf");
  if (p.unknown_leaf < 1 || p.unknown_leaf > n ||
      !p.nodes[static_cast<std::size_t>(p.unknown_leaf - 1)].unknown) {
    throw EvaluationError("unknown_leaf does not point at the unknown");
  }
}

std::vector<Rational> eval_all(const DagProblem& p, const Rational& x) {
  std::vector<Rational> v(p.nodes.size());
  for (const DagNode& node : p.nodes) {
    Rational& out = v[static_cast<std::size_t>(node.id - 1)];
    auto child = [&](std::size_t i) -> const Rational& {
      return v[static_cast<std::size_t>(node.children[i] - 1)];
    };
    switch (node.op) {
      case DagOp::kLeaf:
        out = node.unknown ? x : *node.value;
        break;
      case DagOp::kAdd: {
        Rational s = 0;
        for (std::size_t i = 0; i < node.children.size(); ++i) s += child(i);
        out = s;
        break;
      }
      case DagOp::kSub: {
        Rational s = child(0);
        for (std::size_t i = 1; i < node.children.size(); ++i) s -= child(i);
        out = s;
        break;
      }
      case DagOp::kMul: {
        Rational s = 1;
        for (std::size_t i = 0; i < node.children.size(); ++i) s *= child(i);
        out = s;
        break;
      }
      case DagOp::kSquare:
        out = child(0) * child(0);
        break;
      case DagOp::kSqrt:
        out = exact_sqrt(child(0));
        break;
    }
  }
  return v;
}

struct Builder {
  rng::SequenceRng& gen;
  const GenConfig& cfg;
  int width;
  std::vector<DagNode> nodes;
  int unknown_id = 0;

  int push(DagNode n) {
    n.id = static_cast<int>(nodes.size()) + 1;
    nodes.push_back(std::move(n));
    return nodes.back().id;
  }

  Rational sample_leaf(bool nonzero) {
    for (;;) {
      std::int64_t v = gen.next_int(cfg.leaf_min, cfg.leaf_max);
      if (!nonzero || v != 0) return Rational(v);
    }
  }

  DagOp pick_nary() {
    switch (gen.next_int(0, 2)) {
      case 0: return DagOp::kAdd;
      case 1: return DagOp::kSub;
      default: return DagOp::kMul;
    }
  }

  // Builds the subtree rooted at `level` (leaves are level 1) and returns its
  // node id. `on_path` marks the unknown-to-root chain, which is restricted
  // to ADD/SUB/MUL so the root stays affine in the unknown. `mul_operand`
  // means the node is a direct child of a MUL: constant leaves there skip 0
  // at the source (composite children are handled by the rebuild loop).
  int build(int level, bool on_path, bool mul_operand) {
    if (level <= 1) {
      DagNode leaf;
      leaf.op = DagOp::kLeaf;
      if (on_path) {
        leaf.unknown = true;
        int id = push(std::move(leaf));
        unknown_id = id;
        return id;
      }
      leaf.value = sample_leaf(mul_operand);
      return push(std::move(leaf));
    }

    DagOp op;
    if (on_path) {
      op = pick_nary();
    } else if (gen.next_u01() < cfg.unary_share) {
      op = gen.next_int(0, 1) == 0 ? DagOp::kSquare : DagOp::kSqrt;
    } else {
      op = pick_nary();
    }

    if (op == DagOp::kSquare) {
      int c = build(level - 1, false, false);
      DagNode n;
      n.op = op;
      n.children = {c};
      return push(std::move(n));
    }
    if (op == DagOp::kSqrt) {
      // The operand is a perfect square by construction: either the square
      // of a sampled integer (level 2) or an explicit SQUARE node.
      int c;
      if (level == 2) {
        std::int64_t m = gen.next_int(0, 9);
        DagNode leaf;
        leaf.op = DagOp::kLeaf;
        leaf.value = Rational(m * m);
        c = push(std::move(leaf));
      } else {
        int grand = build(level - 2, false, false);
        DagNode sq;
        sq.op = DagOp::kSquare;
        sq.children = {grand};
        c = push(std::move(sq));
      }
      DagNode n;
      n.op = DagOp::kSqrt;
      n.children = {c};
      return push(std::move(n));
    }

    int u_idx = -1;
    if (on_path) u_idx = static_cast<int>(gen.next_int(0, width - 1));
    DagNode n;
    n.op = op;
    n.children.reserve(static_cast<std::size_t>(width));
    for (int i = 0; i < width; ++i) {
      n.children.push_back(build(level - 1, on_path && i == u_idx, op == DagOp::kMul));
    }
    return push(std::move(n));
  }
};

// True when every constant operand of a MUL on the unknown's path is nonzero
// (guarantees the root's coefficient in the unknown is nonzero).
bool mul_constraints_ok(const DagProblem& p) {
  std::vector<char> depends(p.nodes.size(), 0);
  for (const DagNode& node : p.nodes) {
    char d = node.unknown ? 1 : 0;
    for (int c : node.children) d |= depends[static_cast<std::size_t>(c - 1)];
    depends[static_cast<std::size_t>(node.id - 1)] = d;
  }
  std::vector<Rational> at_zero = eval_all(p, Rational(0));
  for (const DagNode& node : p.nodes) {
    if (node.op != DagOp::kMul || !depends[static_cast<std::size_t>(node.id - 1)]) continue;
    for (int c : node.children) {
      if (!depends[static_cast<std::size_t>(c - 1)] &&
          at_zero[static_cast<std::size_t>(c - 1)] == 0) {
        return false;
      }
    }
  }
  return true;
}

std::string cell_id(int depth, int width, int index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "math-d%dw%d-%04d", depth, width, index);
  return buf;
}

ordered_json node_to_json(const DagNode& n) {
  ordered_json j;
  j["id"] = n.id;
  j["op"] = std::string(op_name(n.op));
  if (!n.children.empty()) j["children"] = n.children;
  if (n.value) j["value"] = to_fraction_string(*n.value);
  if (n.unknown) j["unknown"] = true;
  return j;
}

DagNode node_from_json(const ordered_json& j) {
  DagNode n;
  n.id = j.at("id").get<int>();
  n.op = op_from_name(j.at("op").get<std::string>());
  if (j.contains("children")) n.children = j.at("children").get<std::vector<int>>();
  if (j.contains("value")) n.value = rational_from_fraction(j.at("value").get<std::string>());
  n.unknown = j.value("unknown", false);
  return n;
}

}  // namespace

std::string_view op_name(DagOp op) {
  switch (op) {
    case DagOp::kLeaf: return "leaf";
    case DagOp::kAdd: return "add";
    case DagOp::kSub: return "sub";
    case DagOp::kMul: return "mul";
    case DagOp::kSquare: return "square";
    case DagOp::kSqrt: return "sqrt";
  }
  throw std::invalid_argument("unknown op");
}

DagOp op_from_name(std::string_view name) {
  if (name == "leaf") return DagOp::kLeaf;
  if (name == "add") return DagOp::kAdd;
  if (name == "sub") return DagOp::kSub;
  if (name == "mul") return DagOp::kMul;
  if (name == "square") return DagOp::kSquare;
  if (name == "sqrt") return DagOp::kSqrt;
  throw std::invalid_argument("unknown op name: " + std::string(name));
}

DagProblem generate_problem(int depth, int width, std::uint64_t seed,
                            const GenConfig& cfg) {
  if (depth < 2) throw std::invalid_argument("depth must be >= 2");
  if (width < 2) throw std::invalid_argument("width must be >= 2");
  if (cfg.leaf_min > cfg.leaf_max) throw std::invalid_argument("empty leaf range");
  if (cfg.leaf_min == 0 && cfg.leaf_max == 0) {
    throw std::invalid_argument("leaf range must contain a nonzero value");
  }
  if (!(cfg.unary_share >= 0.0 && cfg.unary_share <= 1.0)) {
    throw std::invalid_argument("unary_share must be in [0, 1]");
  }
  if (cfg.max_attempts < 1) throw std::invalid_argument("max_attempts must be >= 1");

  // One sequential stream per (depth, width, seed); rebuild attempts keep
  // drawing from it, so the whole procedure stays a pure function of the
  // arguments.
  std::uint64_t stream = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(depth)) << 32) |
                         static_cast<std::uint32_t>(width);
  rng::SequenceRng gen(seed, stream);

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    Builder b{gen, cfg, width, {}, 0};
    int root = b.build(depth, true, false);

    DagProblem p;
    p.depth = depth;
    p.width = width;
    p.seed = seed;
    p.nodes = std::move(b.nodes);
    p.root = root;
    p.unknown_leaf = b.unknown_id;
    if (!mul_constraints_ok(p)) continue;

    p.ground_truth = Rational(gen.next_int(cfg.leaf_min, cfg.leaf_max));
    p.root_value = eval_all(p, p.ground_truth)[static_cast<std::size_t>(p.root - 1)];
    p.id = cell_id(depth, width, 0);
    p.rendered = render(p);
    return p;
  }
  throw GenerationError("exceeded rebuild budget while sampling a well-posed problem");
}

Rational evaluate(const DagProblem& p, const Rational& x) {
  validate_structure(p);
  return eval_all(p, x)[static_cast<std::size_t>(p.root - 1)];
}

AffineForm affine_form(const DagProblem& p) {
  Rational b = evaluate(p, Rational(0));
  Rational a = evaluate(p, Rational(1)) - b;
  return {a, b};
}

Rational solve_unknown(const DagProblem& p) {
  AffineForm f = affine_form(p);
  // The generator keeps the unknown's path inside ADD/SUB/MUL, so the root is
  // affine in the unknown; verify that before trusting the two-point fit.
  if (evaluate(p, Rational(2)) != f.a * 2 + f.b) {
    throw DegenerateProblemError("root is not affine in the unknown");
  }
  if (f.a == 0) {
    throw DegenerateProblemError("root value does not depend on the unknown");
  }
  return (p.root_value - f.b) / f.a;
}

std::string render(const DagProblem& p) {
  validate_structure(p);
  std::string out;
  for (const DagNode& node : p.nodes) {
    std::string name = node_name(node.id);
    switch (node.op) {
      case DagOp::kLeaf:
        if (node.unknown) {
          out += "The value of " + name + " is unknown.";
        } else {
          out += "The value of " + name + " is " + to_fraction_string(*node.value) + ".";
        }
        break;
      case DagOp::kAdd:
        out += "The value of " + name + " is the sum of " + list_names(node.children, 0) + ".";
        break;
      case DagOp::kSub:
        out += "The value of " + name + " is the result of subtracting " +
               list_names(node.children, 1) + " from " + node_name(node.children[0]) + ".";
        break;
      case DagOp::kMul:
        out += "The value of " + name + " is the product of " + list_names(node.children, 0) + ".";
        break;
      case DagOp::kSquare:
        out += "The value of " + name + " is the square of " + node_name(node.children[0]) + ".";
        break;
      case DagOp::kSqrt:
        out += "The value of " + name + " is the square root of " +
               node_name(node.children[0]) + ".";
        break;
    }
    out += " ";
  }
  out += "The value of " + node_name(p.root) + " is given to be " +
         to_fraction_string(p.root_value) + ". ";
  out += "What is the value of " + node_name(p.unknown_leaf) + "?";
  return out;
}

GradeResult grade(const std::string& answer_text, const Rational& truth, double tol) {
  if (!(tol >= 0.0)) throw std::invalid_argument("tol must be >= 0");

  // Signed fraction or decimal. The sign binds only when adjacent, so prose
  // like "x - 4" reads as 4, while "-4" keeps its sign.
  static const std::regex kNumber(
      R"([+-]?(?:\d+[ \t]*/[ \t]*\d+|\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?))");
  static const std::regex kMarker(R"([Aa][Nn][Ss][Ww][Ee][Rr][ \t]*:)");

  struct Hit {
    std::size_t pos;
    std::string text;
  };
  std::vector<Hit> hits;
  for (auto it = std::sregex_iterator(answer_text.begin(), answer_text.end(), kNumber);
       it != std::sregex_iterator(); ++it) {
    std::size_t pos = static_cast<std::size_t>(it->position());
    if (pos > 0) {
      // A digit run glued to an identifier ("n13"), a dotted tail ("v1.2"),
      // or a bare denominator is not a standalone answer.
      char prev = answer_text[pos - 1];
      if (std::isalnum(static_cast<unsigned char>(prev)) || prev == '_' || prev == '.' ||
          prev == '/') {
        continue;
      }
    }
    hits.push_back({pos, it->str()});
  }
  if (hits.empty()) return {};

  std::size_t marker_end = std::string::npos;
  for (auto it = std::sregex_iterator(answer_text.begin(), answer_text.end(), kMarker);
       it != std::sregex_iterator(); ++it) {
    marker_end = static_cast<std::size_t>(it->position() + it->length());
  }

  const std::string* chosen = nullptr;
  if (marker_end != std::string::npos) {
    for (const Hit& h : hits) {
      if (h.pos >= marker_end) {
        chosen = &h.text;
        break;
      }
    }
  }
  if (chosen == nullptr) chosen = &hits.back().text;

  GradeResult result;
  try {
    Rational parsed = chosen->find('/') != std::string::npos
                          ? rational_from_fraction(*chosen)
                          : rational_from_decimal(*chosen);
    result.parsed = parsed;
    Rational diff = parsed - truth;
    if (diff < 0) diff = -diff;
    result.outcome =
        diff <= Rational(tol) ? GradeOutcome::kCorrect : GradeOutcome::kWrong;
  } catch (const std::invalid_argument&) {
    result.outcome = GradeOutcome::kUnparseable;
  }
  return result;
}

std::string to_json_line(const DagProblem& p, bool include_truth) {
  ordered_json j;
  j["id"] = p.id;
  j["depth"] = p.depth;
  j["width"] = p.width;
  j["seed"] = p.seed;
  j["root"] = p.root;
  j["unknown"] = p.unknown_leaf;
  if (include_truth) j["ground_truth"] = to_fraction_string(p.ground_truth);
  j["root_value"] = to_fraction_string(p.root_value);
  j["nodes"] = ordered_json::array();
  for (const DagNode& n : p.nodes) j["nodes"].push_back(node_to_json(n));
  j["rendered"] = p.rendered;
  return j.dump();
}

std::string answer_key_line(const DagProblem& p) {
  ordered_json j;
  j["id"] = p.id;
  j["ground_truth"] = to_fraction_string(p.ground_truth);
  return j.dump();
}

DagProblem problem_from_json(const std::string& line) {
  ordered_json j = ordered_json::parse(line);
  DagProblem p;
  p.id = j.at("id").get<std::string>();
  p.depth = j.at("depth").get<int>();
  p.width = j.at("width").get<int>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.root = j.at("root").get<int>();
  p.unknown_leaf = j.at("unknown").get<int>();
  p.root_value = rational_from_fraction(j.at("root_value").get<std::string>());
  for (const auto& nj : j.at("nodes")) p.nodes.push_back(node_from_json(nj));
  p.rendered = j.at("rendered").get<std::string>();
  validate_structure(p);
  if (j.contains("ground_truth")) {
    p.ground_truth = rational_from_fraction(j.at("ground_truth").get<std::string>());
  } else {
    // Exam-mode lines omit the truth; it is recoverable from root_value.
    p.ground_truth = solve_unknown(p);
  }
  return p;
}

std::vector<DagProblem> generate_dataset(const MathDatasetSpec& spec,
                                         std::uint64_t seed, const GenConfig& cfg) {
  if (spec.depths.empty() || spec.widths.empty()) {
    throw std::invalid_argument("dataset needs at least one depth and width");
  }
  if (spec.per_cell < 0) throw std::invalid_argument("per_cell must be >= 0");

  std::vector<DagProblem> out;
  out.reserve(spec.depths.size() * spec.widths.size() *
              static_cast<std::size_t>(spec.per_cell));
  for (int d : spec.depths) {
    for (int w : spec.widths) {
      for (int i = 0; i < spec.per_cell; ++i) {
        std::uint64_t idx = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(d)) << 40) |
                            (static_cast<std::uint64_t>(static_cast<std::uint32_t>(w)) << 32) |
                            static_cast<std::uint32_t>(i);
        std::uint64_t pseed = rng::derive_seed(seed, "mathgen", idx);
        DagProblem p = generate_problem(d, w, pseed, cfg);
        p.id = cell_id(d, w, i);
        out.push_back(std::move(p));
      }
    }
  }
  return out;
}

}  // namespace dwlab::mathgen
