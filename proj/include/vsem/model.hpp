#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vsem {

enum class MatrixKind { Lambda, Beta, Psi, Mean };

const char* to_string(MatrixKind kind);

/// One cell of a pattern matrix: either a fixed value or a reference into the parameter table.
struct Cell {
  int param = -1;
  double value = 0.0;
  bool set = false;  // explicitly specified or auto-added (as opposed to structural zero)

  bool is_free() const { return param >= 0; }
};

/// Dense row-major pattern matrix.
class Pattern {
 public:
  Pattern() = default;
  Pattern(int rows, int cols) : rows_(rows), cols_(cols), cells_(static_cast<size_t>(rows) * cols) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Cell& operator()(int r, int c) { return cells_[static_cast<size_t>(r) * cols_ + c]; }
  const Cell& operator()(int r, int c) const { return cells_[static_cast<size_t>(r) * cols_ + c]; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<Cell> cells_;
};

struct ParamEntry {
  int id = 0;
  MatrixKind matrix = MatrixKind::Beta;
  // Indices into the pattern of `matrix`. For Psi, row >= col. For Mean, col == 0.
  int row = 0;
  int col = 0;
  // NaN means "derive from data at fit time" (manifest variances and intercepts).
  double start = 0.0;
  double lower = -std::numeric_limits<double>::infinity();
  std::string label;

  bool is_variance() const { return matrix == MatrixKind::Psi && row == col; }
};

/// Symbolic SEM in the all-variables (RAM-like) layout.
///
/// Variables are indexed manifests first (0..p-1) then latents (p..p+m-1).
/// `lambda` is p x m; its cells are folded into the manifest-on-latent block of
/// `beta` when moments are computed. `beta(i, j)` is the path j -> i.
struct ModelSpec {
  std::vector<std::string> manifest_names;
  std::vector<std::string> latent_names;
  Pattern lambda;
  Pattern beta;
  Pattern psi;       // symmetric; only the lower triangle (row >= col) is authoritative
  Pattern nu_alpha;  // (p + m) x 1
  std::vector<ParamEntry> params;
  bool meanstructure = false;

  int p() const { return static_cast<int>(manifest_names.size()); }
  int m() const { return static_cast<int>(latent_names.size()); }
  int n_vars() const { return p() + m(); }
  int k() const { return static_cast<int>(params.size()); }

  const std::string& var_name(int idx) const {
    return idx < p() ? manifest_names[idx] : latent_names[idx - p()];
  }
  std::vector<double> start_values() const;
};

struct ParseOptions {
  bool meanstructure = false;
  // When set, every identifier that is not a latent must be one of these names.
  std::optional<std::vector<std::string>> known_manifests;
};

/// Parses the model language (`=~`, `~`, `~~`, `~ 1`, `#` comments, `;` or newline separated).
/// Throws ParseError on syntax errors, unknown variables, duplicate parameters and
/// a singular (I - B) at start values.
ModelSpec parse_model(std::string_view text, const ParseOptions& opts = {});

/// Emits model text that parses back to an identical parameter table.
std::string print_model(const ModelSpec& spec);

inline int param_count(const ModelSpec& spec) { return spec.k(); }

}  // namespace vsem
