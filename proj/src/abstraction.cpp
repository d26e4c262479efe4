#include "stochsyn/abstraction.hpp"

#include "stochsyn/parallel.hpp"
#include "stochsyn/stats.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace stochsyn {

Grid::Grid(Vector lo, Vector hi, std::vector<std::size_t> counts)
    : lo_(std::move(lo)), hi_(std::move(hi)), counts_(std::move(counts)) {
  if (counts_.empty()) throw ArgumentError("grid: need at least one dimension");
  if (lo_.size() != static_cast<Eigen::Index>(counts_.size()) || hi_.size() != lo_.size()) {
    throw ArgumentError("grid: bounds and counts have different dimensions");
  }
  widths_.resize(lo_.size());
  strides_.resize(counts_.size());
  size_ = 1;
  for (std::size_t d = 0; d < counts_.size(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    if (counts_[d] == 0) throw ArgumentError("grid: cell count must be >= 1 in dimension " + std::to_string(d));
    if (!(lo_[i] < hi_[i])) throw ArgumentError("grid: need lo < hi in dimension " + std::to_string(d));
    widths_[i] = (hi_[i] - lo_[i]) / static_cast<double>(counts_[d]);
    strides_[d] = size_;
    size_ *= counts_[d];
  }
}

std::vector<std::size_t> Grid::multi_index(std::size_t cell) const {
  std::vector<std::size_t> idx(counts_.size());
  for (std::size_t d = 0; d < counts_.size(); ++d) {
    idx[d] = cell % counts_[d];
    cell /= counts_[d];
  }
  return idx;
}

std::size_t Grid::linear_index(const std::vector<std::size_t>& idx) const {
  std::size_t cell = 0;
  for (std::size_t d = 0; d < counts_.size(); ++d) cell += idx[d] * strides_[d];
  return cell;
}

Vector Grid::center(std::size_t cell) const {
  Vector c(lo_.size());
  for (std::size_t d = 0; d < counts_.size(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    c[i] = lo_[i] + (static_cast<double>(cell % counts_[d]) + 0.5) * widths_[i];
    cell /= counts_[d];
  }
  return c;
}

Box Grid::cell_box(std::size_t cell) const {
  Box b{Vector(lo_.size()), Vector(lo_.size())};
  for (std::size_t d = 0; d < counts_.size(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    const auto k = static_cast<double>(cell % counts_[d]);
    b.lo[i] = lo_[i] + k * widths_[i];
    b.hi[i] = lo_[i] + (k + 1.0) * widths_[i];
    cell /= counts_[d];
  }
  return b;
}

std::size_t Grid::cell_of(const Vector& point, bool* clamped) const {
  if (point.size() != lo_.size()) throw ArgumentError("grid: point has the wrong dimension");
  bool outside = false;
  std::size_t cell = 0;
  for (std::size_t d = 0; d < counts_.size(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    const double t = std::floor((point[i] - lo_[i]) / widths_[i]);
    long k = std::isfinite(t) ? static_cast<long>(std::clamp(t, -1.0, static_cast<double>(counts_[d]))) : 0;
    if (point[i] < lo_[i] || point[i] > hi_[i] || !std::isfinite(point[i])) outside = true;
    k = std::clamp<long>(k, 0, static_cast<long>(counts_[d]) - 1);
    cell += static_cast<std::size_t>(k) * strides_[d];
  }
  if (clamped) *clamped = outside;
  return cell;
}

bool Grid::contains(const Vector& point) const {
  return ((point.array() >= lo_.array()) && (point.array() <= hi_.array())).all();
}

Grid build_grid(const Box& bounds, const std::vector<std::size_t>& counts) {
  return Grid(bounds.lo, bounds.hi, counts);
}

std::vector<Vector> grid_inputs(const Box& input_box, std::size_t per_dim) {
  if (per_dim == 0) throw ArgumentError("input count must be >= 1");
  const Eigen::Index p = input_box.dim();
  std::size_t total = 1;
  for (Eigen::Index d = 0; d < p; ++d) total *= per_dim;
  std::vector<Vector> out;
  out.reserve(total);
  for (std::size_t k = 0; k < total; ++k) {
    Vector u(p);
    std::size_t rest = k;
    for (Eigen::Index d = 0; d < p; ++d) {
      const auto j = static_cast<double>(rest % per_dim);
      rest /= per_dim;
      const double t = per_dim == 1 ? 0.5 : j / static_cast<double>(per_dim - 1);
      u[d] = input_box.lo[d] + t * (input_box.hi[d] - input_box.lo[d]);
    }
    out.push_back(std::move(u));
  }
  return out;
}

namespace {

double expectation_rec(const ProductRow& row, const Grid& grid, const double* values, std::size_t d,
                       std::size_t base) {
  const RowFactor& f = row.factors[d];
  double acc = 0.0;
  if (d == 0) {
    const double* v = values + base + f.first;
    for (std::size_t i = 0; i < f.probs.size(); ++i) acc += f.probs[i] * v[i];
    return acc;
  }
  const std::size_t stride = grid.stride(d);
  for (std::size_t i = 0; i < f.probs.size(); ++i) {
    acc += f.probs[i] * expectation_rec(row, grid, values, d - 1, base + (f.first + i) * stride);
  }
  return acc;
}

void expand_rec(const ProductRow& row, const Grid& grid, std::size_t d, std::size_t base, double prob,
                SparseRow& out) {
  const RowFactor& f = row.factors[d];
  for (std::size_t i = 0; i < f.probs.size(); ++i) {
    const std::size_t idx = base + (f.first + i) * grid.stride(d);
    if (d == 0) {
      out.index.push_back(idx);
      out.prob.push_back(prob * f.probs[i]);
    } else {
      expand_rec(row, grid, d - 1, idx, prob * f.probs[i], out);
    }
  }
}

double factor_product(const ProductRow& row) {
  double retained = 1.0;
  for (const auto& f : row.factors) {
    double s = 0.0;
    for (double p : f.probs) s += p;
    retained *= s;
  }
  return std::clamp(retained, 0.0, 1.0);
}

}  // namespace

double row_expectation(const ProductRow& row, const Grid& grid, const double* values) {
  for (const auto& f : row.factors) {
    if (f.probs.empty()) return 0.0;
  }
  return expectation_rec(row, grid, values, grid.dim() - 1, 0);
}

SparseRow expand_row(const ProductRow& row, const Grid& grid) {
  SparseRow out;
  bool empty = false;
  for (const auto& f : row.factors) empty = empty || f.probs.empty();
  if (!empty) expand_rec(row, grid, grid.dim() - 1, 0, 1.0, out);
  out.sink = row.sink();
  return out;
}

ProductRow gaussian_row(const Grid& grid, const Vector& mean, const Vector& stddev, double threshold) {
  if (mean.size() != static_cast<Eigen::Index>(grid.dim()) || stddev.size() != mean.size()) {
    throw ArgumentError("gaussian_row: dimension mismatch");
  }
  ProductRow row;
  row.threshold = threshold;
  row.factors.resize(grid.dim());
  // Beyond k standard deviations a cell holds less than the threshold.
  const double k = threshold > 0.0 ? std::sqrt(2.0 * std::log(1.0 / threshold)) + 2.0
                                   : std::numeric_limits<double>::infinity();
  for (std::size_t d = 0; d < grid.dim(); ++d) {
    const auto i = static_cast<Eigen::Index>(d);
    const double mu = mean[i];
    const double s = stddev[i];
    const double lo = grid.lo()[i];
    const double w = grid.widths()[i];
    const auto count = static_cast<long>(grid.counts()[d]);
    RowFactor& f = row.factors[d];
    if (!std::isfinite(mu)) continue;
    long first = 0;
    long last = count - 1;
    if (std::isfinite(k)) {
      first = std::max<long>(0, static_cast<long>(std::floor((mu - k * s - lo) / w)));
      last = std::min<long>(count - 1, static_cast<long>(std::floor((mu + k * s - lo) / w)));
    }
    std::vector<double> probs;
    for (long c = first; c <= last; ++c) {
      const double a = lo + static_cast<double>(c) * w;
      const double b = lo + static_cast<double>(c + 1) * w;
      probs.push_back(normal_interval((a - mu) / s, (b - mu) / s));
    }
    std::size_t begin = 0;
    std::size_t end = probs.size();
    while (begin < end && probs[begin] < threshold) ++begin;
    while (end > begin && probs[end - 1] < threshold) --end;
    f.first = static_cast<std::size_t>(first) + begin;
    f.probs.assign(probs.begin() + static_cast<std::ptrdiff_t>(begin),
                   probs.begin() + static_cast<std::ptrdiff_t>(end));
  }
  row.retained = factor_product(row);
  return row;
}

Vector diagonal_stddev(const Matrix& sigma) {
  if (sigma.rows() != sigma.cols()) throw ArgumentError("noise covariance must be square");
  const double scale = sigma.diagonal().cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
    for (Eigen::Index j = 0; j < sigma.cols(); ++j) {
      if (i != j && std::abs(sigma(i, j)) > 1e-14 * scale) {
        throw UnsupportedCovarianceError(
            "abstraction needs a diagonal noise covariance; whiten the coordinates first");
      }
    }
    if (!(sigma(i, i) > 0.0)) throw ArgumentError("noise covariance must have a positive diagonal");
  }
  return sigma.diagonal().cwiseSqrt();
}

ProductRow transition_row(const Matrix& theta_hat, const FeatureLibrary& lib, const Matrix& sigma,
                          const Grid& grid, std::size_t cell, const Vector& input, double prune_threshold) {
  const Vector stddev = diagonal_stddev(sigma);
  const Vector mean = theta_hat.transpose() * evaluate(lib, grid.center(cell), input);
  return gaussian_row(grid, mean, stddev, prune_threshold);
}

std::vector<Vector> cell_sample_points(const Grid& grid, std::size_t cell, std::size_t per_dim) {
  per_dim = std::max<std::size_t>(per_dim, 2);
  const Box box = grid.cell_box(cell);
  const std::size_t dim = grid.dim();
  std::size_t total = 1;
  for (std::size_t d = 0; d < dim; ++d) total *= per_dim;
  std::vector<Vector> pts;
  pts.reserve(total + 1);
  for (std::size_t k = 0; k < total; ++k) {
    Vector s(static_cast<Eigen::Index>(dim));
    std::size_t rest = k;
    for (std::size_t d = 0; d < dim; ++d) {
      const auto i = static_cast<Eigen::Index>(d);
      const double t = static_cast<double>(rest % per_dim) / static_cast<double>(per_dim - 1);
      rest /= per_dim;
      s[i] = box.lo[i] + t * (box.hi[i] - box.lo[i]);
    }
    pts.push_back(std::move(s));
  }
  pts.push_back(grid.center(cell));
  return pts;
}

namespace {

bool affine_in_state(const FeatureLibrary& lib) {
  return lib.preset == "linear" || lib.preset == "affine";
}

double half_diagonal_image(const Matrix& output_map, const Vector& widths) {
  const auto dim = static_cast<std::size_t>(widths.size());
  double best = 0.0;
  for (std::size_t signs = 0; signs < (std::size_t{1} << dim); ++signs) {
    Vector v(widths.size());
    for (std::size_t d = 0; d < dim; ++d) {
      v[static_cast<Eigen::Index>(d)] = 0.5 * widths[static_cast<Eigen::Index>(d)] * ((signs >> d) & 1 ? 1.0 : -1.0);
    }
    best = std::max(best, (output_map * v).norm());
  }
  return best;
}

}  // namespace

DiscretizationErrors discretization_errors(const Matrix& theta_hat, const FeatureLibrary& lib,
                                           const Matrix& sigma, const Matrix& output_map,
                                           const Grid& grid, const std::vector<Vector>& inputs,
                                           std::size_t corner_samples) {
  if (output_map.cols() != static_cast<Eigen::Index>(grid.dim())) {
    throw ArgumentError("output map does not match the grid dimension");
  }
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw LinAlgError("noise covariance is not positive definite");
  const Matrix whiten = llt.matrixL().solve(theta_hat.transpose());

  DiscretizationErrors out;
  out.eps2 = half_diagonal_image(output_map, grid.widths());
  out.sampled = !affine_in_state(lib);
  // Affine features attain the maximum at a vertex, so two points per
  // dimension suffice.
  const std::size_t per_dim = out.sampled ? corner_samples : 2;
  const auto cells = static_cast<Eigen::Index>(grid.size());
  const auto n_inputs = static_cast<Eigen::Index>(inputs.size());
  out.delta2 = DeltaTable::Zero(cells, n_inputs);
  parallel_for(grid.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto pts = cell_sample_points(grid, c, per_dim);
      const Vector center = grid.center(c);
      for (Eigen::Index u = 0; u < n_inputs; ++u) {
        const Vector fc = evaluate(lib, center, inputs[static_cast<std::size_t>(u)]);
        double g = 0.0;
        for (const auto& s : pts) {
          g = std::max(g, (whiten * (evaluate(lib, s, inputs[static_cast<std::size_t>(u)]) - fc)).norm());
        }
        out.delta2(static_cast<Eigen::Index>(c), u) = uncoupled_mass(g);
      }
    }
  });
  return out;
}

DeltaTable parametric_deltas(const Posterior& post, const Matrix& sigma, const FeatureLibrary& lib,
                             const Grid& grid, const std::vector<Vector>& inputs,
                             std::size_t corner_samples, DeltaMode mode) {
  const std::size_t per_dim = affine_in_state(lib) ? 2 : corner_samples;
  const double sqrt_r = std::sqrt(deviation_radius(post, sigma));
  const auto n_inputs = static_cast<Eigen::Index>(inputs.size());
  DeltaTable table = DeltaTable::Zero(static_cast<Eigen::Index>(grid.size()), n_inputs);
  parallel_for(grid.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto pts = cell_sample_points(grid, c, per_dim);
      for (Eigen::Index u = 0; u < n_inputs; ++u) {
        double worst = 0.0;
        for (const auto& s : pts) {
          const Vector f = evaluate(lib, s, inputs[static_cast<std::size_t>(u)]);
          const double d = mode == DeltaMode::bound ? uncoupled_mass(sqrt_r * f.norm())
                                                    : uncoupled_mass(std::sqrt(zeta_exact(post, sigma, f)));
          worst = std::max(worst, d);
        }
        table(static_cast<Eigen::Index>(c), u) = worst;
      }
    }
  });
  return table;
}

AbstractMdp::AbstractMdp(Grid grid, std::vector<Vector> inputs, Matrix outputs, std::vector<ProductRow> rows)
    : grid_(std::move(grid)), inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
  if (rows.size() != grid_.size() * inputs_.size()) throw ArgumentError("abstraction: wrong number of rows");
  if (outputs_.rows() != static_cast<Eigen::Index>(grid_.size())) {
    throw ArgumentError("abstraction: one output per cell required");
  }
  retained_.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.factors.size() != grid_.dim()) throw ArgumentError("abstraction: row has the wrong dimension");
    retained_.push_back(r.retained);
  }
  rows_ = std::move(rows);
}

AbstractMdp::AbstractMdp(Grid grid, std::vector<Vector> inputs, Matrix outputs, std::vector<SparseRow> rows)
    : grid_(std::move(grid)), inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
  if (rows.size() != grid_.size() * inputs_.size()) throw ArgumentError("abstraction: wrong number of rows");
  if (outputs_.rows() != static_cast<Eigen::Index>(grid_.size())) {
    throw ArgumentError("abstraction: one output per cell required");
  }
  retained_.reserve(rows.size());
  for (auto& r : rows) {
    if (r.index.size() != r.prob.size()) throw ArgumentError("abstraction: row index/prob sizes differ");
    double s = 0.0;
    for (std::size_t k = 0; k < r.index.size(); ++k) {
      if (r.index[k] >= grid_.size()) throw ArgumentError("abstraction: row refers to an unknown cell");
      if (r.prob[k] < 0.0) throw ArgumentError("abstraction: negative transition probability");
      s += r.prob[k];
    }
    if (s > 1.0 + 1e-9) throw ArgumentError("abstraction: row mass exceeds 1");
    r.sink = std::max(0.0, 1.0 - s);
    retained_.push_back(s);
  }
  rows_ = std::move(rows);
}

double AbstractMdp::expectation(std::size_t input, std::size_t cell, const double* values) const {
  const std::size_t r = input * grid_.size() + cell;
  if (const auto* prod = std::get_if<std::vector<ProductRow>>(&rows_)) {
    return row_expectation((*prod)[r], grid_, values);
  }
  const SparseRow& row = std::get<std::vector<SparseRow>>(rows_)[r];
  double acc = 0.0;
  for (std::size_t k = 0; k < row.index.size(); ++k) acc += row.prob[k] * values[row.index[k]];
  return acc;
}

double AbstractMdp::retained(std::size_t input, std::size_t cell) const {
  return retained_[input * grid_.size() + cell];
}

SparseRow AbstractMdp::row(std::size_t input, std::size_t cell) const {
  const std::size_t r = input * grid_.size() + cell;
  if (const auto* prod = std::get_if<std::vector<ProductRow>>(&rows_)) return expand_row((*prod)[r], grid_);
  return std::get<std::vector<SparseRow>>(rows_)[r];
}

const std::vector<ProductRow>& AbstractMdp::product_rows() const {
  const auto* prod = std::get_if<std::vector<ProductRow>>(&rows_);
  if (!prod) throw StateError("abstraction has explicit rows, not product-form rows");
  return *prod;
}

AbstractMdp build_abstraction(const Matrix& theta_hat, const FeatureLibrary& lib, const Matrix& sigma,
                              const Matrix& output_map, const Grid& grid, std::vector<Vector> inputs,
                              const AbstractionOptions& options) {
  if (inputs.empty()) throw ArgumentError("abstraction needs at least one input");
  const Vector stddev = diagonal_stddev(sigma);
  const std::size_t cells = grid.size();
  std::vector<ProductRow> rows(cells * inputs.size());
  parallel_for(rows.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      const std::size_t u = r / cells;
      const std::size_t c = r % cells;
      const Vector mean = theta_hat.transpose() * evaluate(lib, grid.center(c), inputs[u]);
      rows[r] = gaussian_row(grid, mean, stddev, options.prune_threshold);
    }
  });
  Matrix outputs(static_cast<Eigen::Index>(cells), output_map.rows());
  for (std::size_t c = 0; c < cells; ++c) {
    outputs.row(static_cast<Eigen::Index>(c)) = (output_map * grid.center(c)).transpose();
  }
  auto errors = discretization_errors(theta_hat, lib, sigma, output_map, grid, inputs, options.corner_samples);
  AbstractMdp mdp(grid, std::move(inputs), std::move(outputs), std::move(rows));
  mdp.eps2 = errors.eps2;
  mdp.delta2 = std::move(errors.delta2);
  mdp.delta2_sampled = errors.sampled;
  return mdp;
}

bool rows_stochastic(const AbstractMdp& mdp, double tol) {
  for (std::size_t u = 0; u < mdp.num_inputs(); ++u) {
    for (std::size_t c = 0; c < mdp.num_cells(); ++c) {
      const SparseRow row = mdp.row(u, c);
      double s = row.sink;
      for (double p : row.prob) {
        if (p < 0.0) return false;
        s += p;
      }
      if (row.sink < 0.0 || std::abs(s - 1.0) > tol) return false;
    }
  }
  return true;
}

namespace {

class Fnv1a {
 public:
  void bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
      hash_ ^= p[i];
      hash_ *= 1099511628211ULL;
    }
  }
  void u64(std::uint64_t v) { bytes(&v, sizeof v); }
  void f64(double v) { bytes(&v, sizeof v); }
  void matrix(const Matrix& a) {
    u64(static_cast<std::uint64_t>(a.rows()));
    u64(static_cast<std::uint64_t>(a.cols()));
    bytes(a.data(), sizeof(double) * static_cast<std::size_t>(a.size()));
  }
  std::uint64_t value() const { return hash_; }

 private:
  std::uint64_t hash_ = 14695981039346656037ULL;
};

static_assert(std::endian::native == std::endian::little, "cache format assumes a little-endian host");

void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }
void put_f64(std::ostream& out, double v) { out.write(reinterpret_cast<const char*>(&v), sizeof v); }

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError("transition cache is truncated");
  return v;
}

double get_f64(std::istream& in) {
  double v = 0.0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw ParseError("transition cache is truncated");
  return v;
}

constexpr char kMagic[5] = {'S', 'M', 'D', 'P', '1'};

}  // namespace

std::uint64_t abstraction_key(const Matrix& theta_hat, const Matrix& sigma, const Grid& grid,
                              const std::vector<Vector>& inputs, double prune_threshold) {
  Fnv1a h;
  h.matrix(theta_hat);
  h.matrix(sigma);
  h.matrix(grid.lo());
  h.matrix(grid.hi());
  for (auto c : grid.counts()) h.u64(c);
  h.u64(inputs.size());
  for (const auto& u : inputs) h.matrix(u);
  h.f64(prune_threshold);
  return h.value();
}

void save_transition_cache(const AbstractMdp& mdp, std::uint64_t key, const std::filesystem::path& path) {
  const auto& rows = mdp.product_rows();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof kMagic);
  put_u64(out, key);
  put_u64(out, mdp.grid().dim());
  for (auto c : mdp.grid().counts()) put_u64(out, c);
  put_u64(out, mdp.num_inputs());
  for (const auto& row : rows) {
    for (const auto& f : row.factors) {
      put_u64(out, f.probs.size());
      for (std::size_t i = 0; i < f.probs.size(); ++i) {
        put_u64(out, f.first + i);
        put_f64(out, f.probs[i]);
      }
    }
  }
  if (!out) throw Error("failed writing transition cache '" + path.string() + "'");
}

std::vector<ProductRow> load_transition_cache(const std::filesystem::path& path, std::uint64_t key,
                                              const Grid& grid, std::size_t inputs) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return {};
  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ParseError("'" + path.string() + "' is not a transition cache");
  }
  if (get_u64(in) != key) return {};
  if (get_u64(in) != grid.dim()) return {};
  for (auto c : grid.counts()) {
    if (get_u64(in) != c) return {};
  }
  if (get_u64(in) != inputs) return {};
  std::vector<ProductRow> rows(grid.size() * inputs);
  for (auto& row : rows) {
    row.factors.resize(grid.dim());
    for (std::size_t d = 0; d < grid.dim(); ++d) {
      const std::uint64_t len = get_u64(in);
      if (len > grid.counts()[d]) throw ParseError("transition cache: factor longer than the grid");
      RowFactor& f = row.factors[d];
      f.probs.resize(len);
      for (std::uint64_t i = 0; i < len; ++i) {
        const std::uint64_t idx = get_u64(in);
        if (i == 0) f.first = idx;
        if (idx != f.first + i || idx >= grid.counts()[d]) throw ParseError("transition cache: bad cell index");
        f.probs[i] = get_f64(in);
      }
    }
    row.retained = factor_product(row);
  }
  return rows;
}

}  // namespace stochsyn
