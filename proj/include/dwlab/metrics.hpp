#pragma once

// Per-cell aggregation, gain computation, OLS R-squared, Shapley
// decomposition of the gain surface, and heatmap/table emission.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dwlab::metrics {

// Minimal view of one result record, decoupled from file formats.
struct ScoreRecord {
  std::string cell_id;  // "d<depth>w<width>" or "k<K>q<quintile>"
  std::string task_id;
  std::string system;   // "single" | "multi"
  double score = 0.0;
};

// Parsed cell coordinates. For writing-family cells depth carries K and
// width carries the quintile index (1..5).
struct CellKey {
  int depth = 0;
  int width = 0;
  char family = 0;  // 'm' for d*w* ids, 'w' for k*q* ids
};

// Throws std::invalid_argument on ids matching neither convention.
CellKey parse_cell_id(const std::string& cell_id);

struct CellMetrics {
  std::string cell_id;
  int depth = 0;
  int width = 0;
  long n_single = 0;
  long n_multi = 0;
  double single_score = 0.0;  // mean over single-system records
  double multi_score = 0.0;   // mean over multi-system records
  bool gain_defined = false;  // needs both systems and single_score > 0
  double gain = 0.0;          // (multi - single) / single when defined
};

// Groups records by cell, averages per system, and computes the relative
// gain. Cells whose single-system mean is zero (or that miss a system) are
// flagged undefined rather than dropped. Records are canonically ordered
// before summation, so the result is permutation-invariant bit for bit.
// Throws std::invalid_argument on unknown cell ids (all offenders listed),
// unknown system labels, or a mix of task families.
std::vector<CellMetrics> aggregate_cells(const std::vector<ScoreRecord>& records);

// ------------------------------------------------------------------- OLS

struct OlsFit {
  std::vector<double> coef;  // intercept first, then one slope per column
  double r2 = 0.0;           // clamped to [0,1]; 0 when sst_zero
  bool sst_zero = false;     // response was constant
};

// Least squares with an implicit intercept; X holds rows of predictor
// values (no intercept column; zero columns means the intercept-only model,
// whose R^2 is 0 by convention). Requires rows >= columns + 1, forbids
// constant predictor columns, and throws std::runtime_error on a singular
// normal system.
OlsFit ols_fit(const std::vector<std::vector<double>>& X,
               const std::vector<double>& y);

double ols_r2(const std::vector<std::vector<double>>& X,
              const std::vector<double>& y);

// --------------------------------------------------------------- Shapley

struct ShapleyResult {
  double r2_empty = 0.0;  // intercept-only model, 0 by convention
  double r2_depth = 0.0;
  double r2_width = 0.0;
  double r2_full = 0.0;
  double s_depth = 0.0;   // (r2_depth - r2_empty)/2 + (r2_full - r2_width)/2
  double s_width = 0.0;   // (r2_width - r2_empty)/2 + (r2_full - r2_depth)/2
  std::string dominant;   // "depth" | "width" | "tie"
  long cells_used = 0;
  long cells_excluded = 0;  // undefined-gain cells dropped listwise
};

// Regresses per-cell gain on raw depth and width levels. Needs at least 4
// cells with defined gain; throws std::invalid_argument otherwise, naming
// the minimum.
ShapleyResult shapley_scores(const std::vector<CellMetrics>& cells);

std::string shapley_to_json(const ShapleyResult& r);

// --------------------------------------------------------------- artifacts

// Writes the gain surface as <stem>.csv (rows = depth, cols = width,
// undefined cells as "NA") plus a self-contained annotated SVG heatmap at
// <stem>.svg. Output bytes are a pure function of the input cells.
// Throws std::invalid_argument on empty input, std::runtime_error on I/O.
void emit_heatmap(const std::vector<CellMetrics>& cells,
                  const std::filesystem::path& stem);

// One SVG with two annotated panels: per-cell single and multi mean scores
// on a shared color scale. Same determinism contract as emit_heatmap.
void emit_score_heatmaps(const std::vector<CellMetrics>& cells,
                         const std::filesystem::path& svg_path);

}  // namespace dwlab::metrics
