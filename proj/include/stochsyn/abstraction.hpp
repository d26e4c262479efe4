#pragma once

#include "stochsyn/common.hpp"
#include "stochsyn/estimation.hpp"
#include "stochsyn/model.hpp"
#include "stochsyn/simrel.hpp"

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

namespace stochsyn {

/// Uniform rectangular grid. Cell indices are linear with dimension 0 fastest.
class Grid {
 public:
  Grid(Vector lo, Vector hi, std::vector<std::size_t> counts);

  std::size_t dim() const { return counts_.size(); }
  std::size_t size() const { return size_; }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  const Vector& widths() const { return widths_; }
  const std::vector<std::size_t>& counts() const { return counts_; }
  std::size_t stride(std::size_t d) const { return strides_[d]; }

  std::vector<std::size_t> multi_index(std::size_t cell) const;
  std::size_t linear_index(const std::vector<std::size_t>& idx) const;
  Vector center(std::size_t cell) const;
  Box cell_box(std::size_t cell) const;
  /// Cell containing (or nearest to) the point; `clamped` reports points
  /// outside the grid.
  std::size_t cell_of(const Vector& point, bool* clamped = nullptr) const;
  bool contains(const Vector& point) const;

 private:
  Vector lo_;
  Vector hi_;
  Vector widths_;
  std::vector<std::size_t> counts_;
  std::vector<std::size_t> strides_;
  std::size_t size_ = 0;
};

Grid build_grid(const Box& bounds, const std::vector<std::size_t>& counts);

/// Uniform gridding of an input box: `per_dim` points per dimension including
/// both ends (the midpoint for per_dim == 1).
std::vector<Vector> grid_inputs(const Box& input_box, std::size_t per_dim);

/// Probabilities of one dimension of a product-form row over the consecutive
/// cells first, first + 1, ...
struct RowFactor {
  std::size_t first = 0;
  std::vector<double> probs;
};

/// Transition row of a Gaussian with diagonal covariance over a product grid,
/// kept as per-dimension factors. Factor entries below `threshold` are
/// dropped, so their mass ends up in the sink.
struct ProductRow {
  std::vector<RowFactor> factors;
  double threshold = 0.0;
  double retained = 0.0;

  double sink() const { return std::max(0.0, 1.0 - retained); }
};

/// Explicit sparse row.
struct SparseRow {
  std::vector<std::uint64_t> index;
  std::vector<double> prob;
  double sink = 0.0;
};

/// Sum over kept entries of prob(j) * values[j].
double row_expectation(const ProductRow& row, const Grid& grid, const double* values);
SparseRow expand_row(const ProductRow& row, const Grid& grid);

/// Gaussian N(mean, diag(stddev^2)) integrated over the grid cells.
ProductRow gaussian_row(const Grid& grid, const Vector& mean, const Vector& stddev, double threshold);

/// Row for (cell, input) of the nominal model theta_hat^T f(center, u) + w.
ProductRow transition_row(const Matrix& theta_hat, const FeatureLibrary& lib, const Matrix& sigma,
                          const Grid& grid, std::size_t cell, const Vector& input,
                          double prune_threshold = 1e-12);

/// Throws UnsupportedCovarianceError unless sigma is diagonal.
Vector diagonal_stddev(const Matrix& sigma);

struct DiscretizationErrors {
  double eps2 = 0.0;
  DeltaTable delta2;
  /// True when the inner maximisation was sampled (nonlinear features).
  bool sampled = false;
};

/// Points of a cell used for inner maximisation: `per_dim` evenly spaced
/// coordinates per dimension (corners included) plus the centre.
std::vector<Vector> cell_sample_points(const Grid& grid, std::size_t cell, std::size_t per_dim);

DiscretizationErrors discretization_errors(const Matrix& theta_hat, const FeatureLibrary& lib,
                                           const Matrix& sigma, const Matrix& output_map,
                                           const Grid& grid, const std::vector<Vector>& inputs,
                                           std::size_t corner_samples);

/// Parametric deviation per (cell, input): the largest delta over the cell's
/// sample points, so it covers every concrete state mapped to the cell.
DeltaTable parametric_deltas(const Posterior& post, const Matrix& sigma, const FeatureLibrary& lib,
                             const Grid& grid, const std::vector<Vector>& inputs,
                             std::size_t corner_samples, DeltaMode mode);

/// Finite abstraction: cells plus sink, finite inputs, transition rows stored
/// input-major (row index = input * K + cell).
class AbstractMdp {
 public:
  AbstractMdp(Grid grid, std::vector<Vector> inputs, Matrix outputs, std::vector<ProductRow> rows);
  AbstractMdp(Grid grid, std::vector<Vector> inputs, Matrix outputs, std::vector<SparseRow> rows);

  const Grid& grid() const { return grid_; }
  std::size_t num_cells() const { return grid_.size(); }
  std::size_t num_inputs() const { return inputs_.size(); }
  const std::vector<Vector>& inputs() const { return inputs_; }
  /// Row c is the output of cell c's centre.
  const Matrix& outputs() const { return outputs_; }
  bool is_product_form() const { return std::holds_alternative<std::vector<ProductRow>>(rows_); }

  double expectation(std::size_t input, std::size_t cell, const double* values) const;
  double retained(std::size_t input, std::size_t cell) const;
  double sink(std::size_t input, std::size_t cell) const { return 1.0 - retained(input, cell); }
  SparseRow row(std::size_t input, std::size_t cell) const;
  /// Product-form rows; throws StateError for explicit abstractions.
  const std::vector<ProductRow>& product_rows() const;

  double eps2 = 0.0;
  DeltaTable delta2;
  bool delta2_sampled = false;

 private:
  Grid grid_;
  std::vector<Vector> inputs_;
  Matrix outputs_;
  std::variant<std::vector<ProductRow>, std::vector<SparseRow>> rows_;
  std::vector<double> retained_;
};

struct AbstractionOptions {
  double prune_threshold = 1e-12;
  std::size_t corner_samples = 3;
};

AbstractMdp build_abstraction(const Matrix& theta_hat, const FeatureLibrary& lib, const Matrix& sigma,
                              const Matrix& output_map, const Grid& grid, std::vector<Vector> inputs,
                              const AbstractionOptions& options = {});

/// Row-stochasticity and non-negativity of every stored row within tol.
bool rows_stochastic(const AbstractMdp& mdp, double tol = 1e-9);

/// Hash of (theta_hat, sigma, grid, inputs, threshold) used to key the cache.
std::uint64_t abstraction_key(const Matrix& theta_hat, const Matrix& sigma, const Grid& grid,
                              const std::vector<Vector>& inputs, double prune_threshold);

/// Binary transition cache of a product-form abstraction: "SMDP1", key,
/// dimension, per-dimension counts, input count, then for every row and
/// dimension the factor length followed by (cell index, probability) pairs.
/// All integers are little-endian 64-bit, probabilities 64-bit floats.
void save_transition_cache(const AbstractMdp& mdp, std::uint64_t key, const std::filesystem::path& path);
/// Returns the cached rows, or an empty vector when the file is missing or
/// was written for a different key or shape.
std::vector<ProductRow> load_transition_cache(const std::filesystem::path& path, std::uint64_t key,
                                              const Grid& grid, std::size_t inputs);

}  // namespace stochsyn
