#include "dwlab/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dwlab::metrics {

namespace {

// Parses a strictly positive decimal integer spanning [pos, end) of `s`.
// Returns std::nullopt on empty, non-digit, or leading-zero input.
std::optional<int> parse_level(const std::string& s, size_t pos, size_t end) {
  if (pos >= end || end > s.size()) return std::nullopt;
  if (s[pos] == '0') return std::nullopt;
  long value = 0;
  for (size_t i = pos; i < end; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
    value = value * 10 + (s[i] - '0');
    if (value > 1000000) return std::nullopt;
  }
  return static_cast<int>(value);
}

std::optional<CellKey> try_parse_cell_id(const std::string& id) {
  if (id.size() < 4) return std::nullopt;
  char lead = id[0];
  char mid = 0;
  char family = 0;
  if (lead == 'd') {
    mid = 'w';
    family = 'm';
  } else if (lead == 'k') {
    mid = 'q';
    family = 'w';
  } else {
    return std::nullopt;
  }
  size_t split = id.find(mid, 1);
  if (split == std::string::npos) return std::nullopt;
  auto first = parse_level(id, 1, split);
  auto second = parse_level(id, split + 1, id.size());
  if (!first || !second) return std::nullopt;
  if (family == 'w' && (*second < 1 || *second > 5)) return std::nullopt;
  return CellKey{*first, *second, family};
}

std::string format_value(double v) {
  // Shortest round-trip decimal form, identical across runs.
  return nlohmann::json(v).dump();
}

struct GridLayout {
  std::vector<int> depths;  // sorted ascending
  std::vector<int> widths;  // sorted ascending
  std::map<std::pair<int, int>, size_t> index;  // (depth,width) -> cells idx
};

GridLayout layout_of(const std::vector<CellMetrics>& cells) {
  if (cells.empty()) {
    throw std::invalid_argument("heatmap emission requires at least one cell");
  }
  GridLayout g;
  std::set<int> ds, ws;
  for (size_t i = 0; i < cells.size(); ++i) {
    ds.insert(cells[i].depth);
    ws.insert(cells[i].width);
    auto key = std::make_pair(cells[i].depth, cells[i].width);
    if (!g.index.emplace(key, i).second) {
      throw std::invalid_argument("duplicate cell coordinates d=" +
                                  std::to_string(cells[i].depth) +
                                  " w=" + std::to_string(cells[i].width));
    }
  }
  g.depths.assign(ds.begin(), ds.end());
  g.widths.assign(ws.begin(), ws.end());
  return g;
}

std::string rgb_hex(double t, double r0, double g0, double b0, double r1,
                    double g1, double b1) {
  t = std::min(1.0, std::max(0.0, t));
  int r = static_cast<int>(std::lround(r0 + (r1 - r0) * t));
  int g = static_cast<int>(std::lround(g0 + (g1 - g0) * t));
  int b = static_cast<int>(std::lround(b0 + (b1 - b0) * t));
  char buf[8];
  std::snprintf(buf, sizeof(buf), "#%02x%02x%02x", r, g, b);
  return buf;
}

std::string short_number(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// Appends one annotated matrix panel to `out`. `value(i)` yields the value
// for the cell at index i or nullopt for NA; `ox, oy` give the panel's
// top-left corner.
void paint_panel(std::string& out, const GridLayout& g,
                 const std::function<std::optional<double>(size_t)>& value,
                 const std::string& title, double lo, double hi, int ox,
                 int oy, int cell_w, int cell_h) {
  out += "<text x=\"" + std::to_string(ox) + "\" y=\"" +
         std::to_string(oy - 34) +
         "\" font-size=\"15\" font-weight=\"bold\" fill=\"#111827\">" + title +
         "</text>\n";
  out += "<text x=\"" + std::to_string(ox) + "\" y=\"" +
         std::to_string(oy - 14) +
         "\" font-size=\"12\" fill=\"#374151\">columns: width, rows: depth"
         "</text>\n";
  for (size_t c = 0; c < g.widths.size(); ++c) {
    int x = ox + static_cast<int>(c) * cell_w + cell_w / 2;
    out += "<text x=\"" + std::to_string(x) + "\" y=\"" +
           std::to_string(oy - 2) +
           "\" font-size=\"12\" text-anchor=\"middle\" fill=\"#374151\">" +
           std::to_string(g.widths[c]) + "</text>\n";
  }
  for (size_t r = 0; r < g.depths.size(); ++r) {
    int y = oy + static_cast<int>(r) * cell_h + cell_h / 2 + 4;
    out += "<text x=\"" + std::to_string(ox - 8) + "\" y=\"" +
           std::to_string(y) +
           "\" font-size=\"12\" text-anchor=\"end\" fill=\"#374151\">" +
           std::to_string(g.depths[r]) + "</text>\n";
    for (size_t c = 0; c < g.widths.size(); ++c) {
      int x = ox + static_cast<int>(c) * cell_w;
      int ytop = oy + static_cast<int>(r) * cell_h;
      auto it = g.index.find({g.depths[r], g.widths[c]});
      std::optional<double> v;
      if (it != g.index.end()) v = value(it->second);
      std::string fill = "#d1d5db";
      std::string label = "NA";
      std::string text_fill = "#374151";
      if (v.has_value()) {
        double t = (hi > lo) ? (*v - lo) / (hi - lo) : 0.5;
        fill = rgb_hex(t, 0xef, 0xf6, 0xff, 0x1d, 0x4e, 0xd8);
        label = short_number(*v);
        text_fill = (t > 0.55) ? "#ffffff" : "#1f2937";
      }
      out += "<rect x=\"" + std::to_string(x) + "\" y=\"" +
             std::to_string(ytop) + "\" width=\"" + std::to_string(cell_w) +
             "\" height=\"" + std::to_string(cell_h) + "\" fill=\"" + fill +
             "\" stroke=\"#ffffff\" stroke-width=\"1\"/>\n";
      out += "<text x=\"" + std::to_string(x + cell_w / 2) + "\" y=\"" +
             std::to_string(ytop + cell_h / 2 + 4) +
             "\" font-size=\"12\" text-anchor=\"middle\" fill=\"" + text_fill +
             "\">" + label + "</text>\n";
    }
  }
  int legend_y = oy + static_cast<int>(g.depths.size()) * cell_h + 18;
  out += "<text x=\"" + std::to_string(ox) + "\" y=\"" +
         std::to_string(legend_y) +
         "\" font-size=\"11\" fill=\"#374151\">scale: " + short_number(lo) +
         " to " + short_number(hi) + "</text>\n";
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& body) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  out << body;
  out.flush();
  if (!out) {
    throw std::runtime_error("failed writing " + path.string());
  }
}

std::string svg_document(const std::string& body, int width, int height) {
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(width) + "\" height=\"" + std::to_string(height) +
         "\" viewBox=\"0 0 " + std::to_string(width) + " " +
         std::to_string(height) +
         "\" font-family=\"Helvetica, Arial, sans-serif\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"" + std::to_string(width) +
         "\" height=\"" + std::to_string(height) + "\" fill=\"#ffffff\"/>\n";
  out += body;
  out += "</svg>\n";
  return out;
}

}  // namespace

CellKey parse_cell_id(const std::string& cell_id) {
  auto key = try_parse_cell_id(cell_id);
  if (!key) {
    throw std::invalid_argument(
        "unrecognized cell id '" + cell_id +
        "' (expected d<depth>w<width> or k<K>q<quintile>)");
  }
  return *key;
}

std::vector<CellMetrics> aggregate_cells(
    const std::vector<ScoreRecord>& records) {
  struct Bucket {
    CellKey key;
    std::vector<std::pair<std::string, double>> single;
    std::vector<std::pair<std::string, double>> multi;
  };
  std::map<std::string, Bucket> buckets;
  std::set<std::string> bad_ids;
  char family = 0;
  bool mixed = false;
  for (const auto& rec : records) {
    auto key = try_parse_cell_id(rec.cell_id);
    if (!key) {
      bad_ids.insert(rec.cell_id);
      continue;
    }
    if (family == 0) {
      family = key->family;
    } else if (key->family != family) {
      mixed = true;
    }
    if (rec.system != "single" && rec.system != "multi") {
      throw std::invalid_argument("unknown system label '" + rec.system +
                                  "' in record for task " + rec.task_id);
    }
    auto& bucket = buckets[rec.cell_id];
    bucket.key = *key;
    auto& side = (rec.system == "single") ? bucket.single : bucket.multi;
    side.emplace_back(rec.task_id, rec.score);
  }
  if (!bad_ids.empty()) {
    std::string msg = "records reference unknown cell ids:";
    for (const auto& id : bad_ids) msg += " '" + id + "'";
    throw std::invalid_argument(msg);
  }
  if (mixed) {
    throw std::invalid_argument(
        "records mix task families (both d*w* and k*q* cell ids present)");
  }

  std::vector<CellMetrics> cells;
  cells.reserve(buckets.size());
  for (auto& [id, bucket] : buckets) {
    CellMetrics cm;
    cm.cell_id = id;
    cm.depth = bucket.key.depth;
    cm.width = bucket.key.width;
    auto mean_of = [](std::vector<std::pair<std::string, double>>& v) {
      // Canonical summation order makes the mean independent of the order
      // in which records arrived.
      std::sort(v.begin(), v.end());
      double sum = 0.0;
      for (const auto& [_, s] : v) sum += s;
      return v.empty() ? 0.0 : sum / static_cast<double>(v.size());
    };
    cm.n_single = static_cast<long>(bucket.single.size());
    cm.n_multi = static_cast<long>(bucket.multi.size());
    cm.single_score = mean_of(bucket.single);
    cm.multi_score = mean_of(bucket.multi);
    cm.gain_defined =
        cm.n_single > 0 && cm.n_multi > 0 && cm.single_score > 0.0;
    cm.gain = cm.gain_defined
                  ? (cm.multi_score - cm.single_score) / cm.single_score
                  : 0.0;
    cells.push_back(std::move(cm));
  }
  std::sort(cells.begin(), cells.end(),
            [](const CellMetrics& a, const CellMetrics& b) {
              if (a.depth != b.depth) return a.depth < b.depth;
              if (a.width != b.width) return a.width < b.width;
              return a.cell_id < b.cell_id;
            });
  return cells;
}

OlsFit ols_fit(const std::vector<std::vector<double>>& X,
               const std::vector<double>& y) {
  const size_t n = y.size();
  if (X.size() != n) {
    throw std::invalid_argument("predictor rows and responses differ in count");
  }
  const size_t p = n == 0 ? 0 : X[0].size();
  for (const auto& row : X) {
    if (row.size() != p) {
      throw std::invalid_argument("ragged predictor rows");
    }
  }
  if (n < p + 1) {
    throw std::invalid_argument(
        "need at least " + std::to_string(p + 1) + " rows to fit " +
        std::to_string(p) + " predictor(s) plus an intercept; got " +
        std::to_string(n));
  }
  for (size_t j = 0; j < p; ++j) {
    double lo = X[0][j], hi = X[0][j];
    for (size_t i = 1; i < n; ++i) {
      lo = std::min(lo, X[i][j]);
      hi = std::max(hi, X[i][j]);
    }
    if (lo == hi) {
      throw std::invalid_argument(
          "predictor column " + std::to_string(j) +
          " is constant; only the intercept may be constant");
    }
  }

  OlsFit fit;
  const size_t m = p + 1;  // intercept plus slopes
  // Normal equations A beta = b with the intercept as column 0.
  std::vector<std::vector<double>> a(m, std::vector<double>(m, 0.0));
  std::vector<double> b(m, 0.0);
  auto x_at = [&](size_t i, size_t j) -> double {
    return j == 0 ? 1.0 : X[i][j - 1];
  };
  for (size_t i = 0; i < n; ++i) {
    for (size_t r = 0; r < m; ++r) {
      for (size_t c = 0; c < m; ++c) a[r][c] += x_at(i, r) * x_at(i, c);
      b[r] += x_at(i, r) * y[i];
    }
  }
  // Gaussian elimination with partial pivoting.
  for (size_t col = 0; col < m; ++col) {
    size_t pivot = col;
    for (size_t r = col + 1; r < m; ++r) {
      if (std::fabs(a[r][col]) > std::fabs(a[pivot][col])) pivot = r;
    }
    if (a[pivot][col] == 0.0) {
      throw std::runtime_error("singular normal equations in least squares");
    }
    if (pivot != col) {
      std::swap(a[pivot], a[col]);
      std::swap(b[pivot], b[col]);
    }
    for (size_t r = col + 1; r < m; ++r) {
      double f = a[r][col] / a[col][col];
      if (f == 0.0) continue;
      for (size_t c = col; c < m; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  fit.coef.assign(m, 0.0);
  for (size_t ri = m; ri-- > 0;) {
    double acc = b[ri];
    for (size_t c = ri + 1; c < m; ++c) acc -= a[ri][c] * fit.coef[c];
    fit.coef[ri] = acc / a[ri][ri];
  }

  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double ssr = 0.0, sst = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double pred = fit.coef[0];
    for (size_t j = 0; j < p; ++j) pred += fit.coef[j + 1] * X[i][j];
    double r = y[i] - pred;
    double d = y[i] - mean;
    ssr += r * r;
    sst += d * d;
  }
  if (sst == 0.0) {
    fit.sst_zero = true;
    fit.r2 = 0.0;
  } else if (p == 0) {
    fit.r2 = 0.0;  // intercept-only model explains nothing by convention
  } else {
    fit.r2 = 1.0 - ssr / sst;
    fit.r2 = std::min(1.0, std::max(0.0, fit.r2));
  }
  return fit;
}

double ols_r2(const std::vector<std::vector<double>>& X,
              const std::vector<double>& y) {
  return ols_fit(X, y).r2;
}

ShapleyResult shapley_scores(const std::vector<CellMetrics>& cells) {
  constexpr long kMinCells = 4;
  std::vector<std::vector<double>> x_full, x_depth, x_width;
  std::vector<double> y;
  long excluded = 0;
  for (const auto& c : cells) {
    if (!c.gain_defined) {
      ++excluded;
      continue;
    }
    x_full.push_back({static_cast<double>(c.depth),
                      static_cast<double>(c.width)});
    x_depth.push_back({static_cast<double>(c.depth)});
    x_width.push_back({static_cast<double>(c.width)});
    y.push_back(c.gain);
  }
  if (static_cast<long>(y.size()) < kMinCells) {
    throw std::invalid_argument(
        "attribution requires at least " + std::to_string(kMinCells) +
        " cells with defined gain; got " + std::to_string(y.size()));
  }
  ShapleyResult r;
  r.cells_used = static_cast<long>(y.size());
  r.cells_excluded = excluded;
  r.r2_empty = 0.0;
  r.r2_depth = ols_r2(x_depth, y);
  r.r2_width = ols_r2(x_width, y);
  r.r2_full = ols_r2(x_full, y);
  r.s_depth = 0.5 * (r.r2_depth - r.r2_empty) + 0.5 * (r.r2_full - r.r2_width);
  r.s_width = 0.5 * (r.r2_width - r.r2_empty) + 0.5 * (r.r2_full - r.r2_depth);
  if (r.s_depth > r.s_width) {
    r.dominant = "depth";
  } else if (r.s_width > r.s_depth) {
    r.dominant = "width";
  } else {
    r.dominant = "tie";
  }
  return r;
}

std::string shapley_to_json(const ShapleyResult& r) {
  nlohmann::ordered_json j;
  j["r2_empty"] = r.r2_empty;
  j["r2_depth"] = r.r2_depth;
  j["r2_width"] = r.r2_width;
  j["r2_full"] = r.r2_full;
  j["s_depth"] = r.s_depth;
  j["s_width"] = r.s_width;
  j["dominant"] = r.dominant;
  j["cells_used"] = r.cells_used;
  j["cells_excluded"] = r.cells_excluded;
  return j.dump(2) + "\n";
}

void emit_heatmap(const std::vector<CellMetrics>& cells,
                  const std::filesystem::path& stem) {
  GridLayout g = layout_of(cells);

  std::string csv = "depth\\width";
  for (int w : g.widths) csv += "," + std::to_string(w);
  csv += "\n";
  for (int d : g.depths) {
    csv += std::to_string(d);
    for (int w : g.widths) {
      auto it = g.index.find({d, w});
      if (it == g.index.end() || !cells[it->second].gain_defined) {
        csv += ",NA";
      } else {
        csv += "," + format_value(cells[it->second].gain);
      }
    }
    csv += "\n";
  }
  std::filesystem::path csv_path = stem;
  csv_path += ".csv";
  write_text_file(csv_path, csv);

  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& c : cells) {
    if (!c.gain_defined) continue;
    lo = any ? std::min(lo, c.gain) : c.gain;
    hi = any ? std::max(hi, c.gain) : c.gain;
    any = true;
  }
  const int cell_w = 72, cell_h = 46, ox = 84, oy = 64;
  int width = ox + cell_w * static_cast<int>(g.widths.size()) + 24;
  int height = oy + cell_h * static_cast<int>(g.depths.size()) + 40;
  std::string body;
  paint_panel(
      body, g,
      [&](size_t i) -> std::optional<double> {
        if (!cells[i].gain_defined) return std::nullopt;
        return cells[i].gain;
      },
      "relative gain: multi-agent vs single-agent", lo, hi, ox, oy, cell_w,
      cell_h);
  std::filesystem::path svg_path = stem;
  svg_path += ".svg";
  write_text_file(svg_path, svg_document(body, std::max(width, 420), height));
}

void emit_score_heatmaps(const std::vector<CellMetrics>& cells,
                         const std::filesystem::path& svg_path) {
  GridLayout g = layout_of(cells);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  auto fold = [&](double v) {
    lo = any ? std::min(lo, v) : v;
    hi = any ? std::max(hi, v) : v;
    any = true;
  };
  for (const auto& c : cells) {
    if (c.n_single > 0) fold(c.single_score);
    if (c.n_multi > 0) fold(c.multi_score);
  }
  const int cell_w = 72, cell_h = 46, ox = 84, oy = 64;
  int panel_w = cell_w * static_cast<int>(g.widths.size());
  int panel_gap = 72;
  int width = ox + panel_w + panel_gap + ox + panel_w + 24;
  int height = oy + cell_h * static_cast<int>(g.depths.size()) + 40;
  std::string body;
  paint_panel(
      body, g,
      [&](size_t i) -> std::optional<double> {
        if (cells[i].n_single == 0) return std::nullopt;
        return cells[i].single_score;
      },
      "single-agent mean score", lo, hi, ox, oy, cell_w, cell_h);
  paint_panel(
      body, g,
      [&](size_t i) -> std::optional<double> {
        if (cells[i].n_multi == 0) return std::nullopt;
        return cells[i].multi_score;
      },
      "multi-agent mean score", lo, hi, ox + panel_w + panel_gap + ox, oy,
      cell_w, cell_h);
  write_text_file(svg_path, svg_document(body, std::max(width, 420), height));
}

}  // namespace dwlab::metrics
