#include "stochsyn/simrel.hpp"

#include "stochsyn/stats.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

namespace stochsyn {

namespace {

double clamp_unit(double v) { return std::clamp(v, 0.0, 1.0); }

double mahalanobis_sq(const Vector& v, const Matrix& sigma) {
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw LinAlgError("noise covariance is not positive definite");
  return llt.matrixL().solve(v).squaredNorm();
}

Vector symmetric_eigenvalues(const Matrix& a, const char* what) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw LinAlgError(std::string(what) + ": eigendecomposition failed");
  return es.eigenvalues();
}

}  // namespace

SimRelation compose_relations(const SimRelation& first, const SimRelation& second) {
  SimRelation out;
  out.eps = first.eps + second.eps;
  out.kind = RelationKind::composed;
  const auto* c1 = std::get_if<double>(&first.delta);
  const auto* c2 = std::get_if<double>(&second.delta);
  if (c1 && c2) {
    out.delta = std::min(1.0, *c1 + *c2);
  } else if (c1 || c2) {
    const double c = c1 ? *c1 : *c2;
    const DeltaTable& t = c1 ? std::get<DeltaTable>(second.delta) : std::get<DeltaTable>(first.delta);
    out.delta = DeltaTable((t.array() + c).min(1.0));
  } else {
    const auto& t1 = std::get<DeltaTable>(first.delta);
    const auto& t2 = std::get<DeltaTable>(second.delta);
    if (t1.rows() != t2.rows() || t1.cols() != t2.cols()) {
      throw ArgumentError("compose_relations: delta tables have different shapes");
    }
    out.delta = DeltaTable((t1 + t2).array().min(1.0));
  }
  return out;
}

Vector gamma(const Matrix& theta, const Matrix& theta_hat, const Vector& x, const Vector& u,
             const FeatureLibrary& lib) {
  if (theta.rows() != theta_hat.rows() || theta.cols() != theta_hat.cols()) {
    throw ArgumentError("gamma: parameter shapes differ");
  }
  return (theta - theta_hat).transpose() * evaluate(lib, x, u);
}

double coupling_mass(const Vector& gamma_vec, const Matrix& sigma) {
  const double d = std::sqrt(mahalanobis_sq(gamma_vec, sigma));
  return clamp_unit(2.0 * normal_cdf(-0.5 * d));
}

double deviation_radius(const Posterior& post, const Matrix& sigma) {
  const double inv_sigma_norm = 1.0 / symmetric_eigenvalues(sigma, "sigma").minCoeff();
  const double sigma_n_norm = symmetric_eigenvalues(post.sigma_n, "sigma_N").maxCoeff();
  return inv_sigma_norm * sigma_n_norm * post.credible_radius;
}

double delta_bound(const Posterior& post, const Matrix& sigma, const Vector& x_hat,
                   const Vector& u_hat, const FeatureLibrary& lib) {
  const double r = deviation_radius(post, sigma);
  return uncoupled_mass(std::sqrt(r) * evaluate(lib, x_hat, u_hat).norm());
}

double zeta_exact(const Posterior& post, const Matrix& sigma, const Vector& f) {
  const Eigen::Index m = post.m();
  const Eigen::Index n = post.n();
  if (f.size() != m || sigma.rows() != n) throw ArgumentError("zeta_exact: dimension mismatch");
  // B = G sigma_N G^T with B(i, j) = f^T [sigma_N]_{ij} f.
  Matrix b(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      b(i, j) = f.dot(post.sigma_n.block(i * m, j * m, m, m) * f);
    }
  }
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw LinAlgError("noise covariance is not positive definite");
  const Matrix l_inv = llt.matrixL().solve(Matrix::Identity(n, n));
  Matrix whitened = l_inv * b * l_inv.transpose();
  whitened = 0.5 * (whitened + whitened.transpose());
  const double lambda = std::max(0.0, symmetric_eigenvalues(whitened, "zeta").maxCoeff());
  return post.credible_radius * lambda;
}

double delta_exact(const Posterior& post, const Matrix& sigma, const Vector& x_hat,
                   const Vector& u_hat, const FeatureLibrary& lib) {
  return uncoupled_mass(std::sqrt(zeta_exact(post, sigma, evaluate(lib, x_hat, u_hat))));
}

Vector state_mapping(const Vector& x_hat, const Vector& u_hat, const Vector& x, const Vector& u,
                     const Vector& x_plus, const Matrix& theta_hat, const FeatureLibrary& lib) {
  return x_plus + theta_hat.transpose() * (evaluate(lib, x_hat, u_hat) - evaluate(lib, x, u));
}

DiscreteMeasure make_measure(Matrix support, Vector mass) {
  if (support.rows() != mass.size()) throw ArgumentError("measure: support and mass sizes differ");
  if ((mass.array() < 0.0).any()) throw ArgumentError("measure: negative mass");
  if (mass.sum() > 1.0 + 1e-12) throw ArgumentError("measure: total mass exceeds 1");
  return DiscreteMeasure{std::move(support), std::move(mass)};
}

std::pair<DiscreteCoupling, double> build_sub_coupling(const DiscreteMeasure& p_hat,
                                                       const DiscreteMeasure& p,
                                                       const PairRelation& relation) {
  const Eigen::Index rows = p_hat.size();
  const Eigen::Index cols = p.size();
  DiscreteCoupling v;
  v.joint = Matrix::Zero(rows, cols);
  v.relation_mask.setConstant(rows, cols, false);
  Vector col_left = p.mass;
  for (Eigen::Index i = 0; i < rows; ++i) {
    double row_left = p_hat.mass[i];
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!relation(i, j)) continue;
      v.relation_mask(i, j) = true;
      const double w = std::min(row_left, col_left[j]);
      if (w <= 0.0) continue;
      v.joint(i, j) = w;
      row_left -= w;
      col_left[j] -= w;
    }
  }
  const double mass = v.mass();
  return {std::move(v), mass};
}

CouplingCheck check_sub_coupling(const DiscreteCoupling& v, const DiscreteMeasure& p_hat,
                                 const DiscreteMeasure& p, double tol) {
  CouplingCheck out;
  double off_relation = 0.0;
  for (Eigen::Index i = 0; i < v.joint.rows(); ++i) {
    for (Eigen::Index j = 0; j < v.joint.cols(); ++j) {
      if (!v.relation_mask(i, j)) off_relation += std::abs(v.joint(i, j));
    }
  }
  const double row_excess = (v.joint.rowwise().sum() - p_hat.mass).maxCoeff();
  const double col_excess = (v.joint.colwise().sum().transpose() - p.mass).maxCoeff();
  out.on_relation = off_relation <= tol && (v.joint.array() >= 0.0).all();
  out.rows_dominated = row_excess <= tol;
  out.cols_dominated = col_excess <= tol;
  out.worst_violation = std::max({off_relation, row_excess, col_excess, 0.0});
  return out;
}

Matrix complete_coupling(const DiscreteCoupling& v, const DiscreteMeasure& p_hat,
                         const DiscreteMeasure& p) {
  if (v.joint.rows() != p_hat.size() || v.joint.cols() != p.size()) {
    throw ArgumentError("complete_coupling: shape mismatch");
  }
  Vector row_residual = p_hat.mass - v.joint.rowwise().sum();
  Vector col_residual = p.mass - v.joint.colwise().sum().transpose();
  if (row_residual.minCoeff() < -1e-12 || col_residual.minCoeff() < -1e-12) {
    throw InvariantError("complete_coupling: sub-coupling marginals exceed the measures");
  }
  row_residual = row_residual.cwiseMax(0.0);
  col_residual = col_residual.cwiseMax(0.0);
  // For probability measures the residual mass equals 1 - v(R).
  const double residual = row_residual.sum();
  if (residual <= 1e-15 || col_residual.sum() <= 1e-15) return v.joint;
  if (std::abs(p_hat.mass.sum() - p.mass.sum()) > 1e-12) {
    throw ArgumentError("complete_coupling: measures have different total mass");
  }
  return v.joint + row_residual * col_residual.transpose() / residual;
}

DiscreteMeasure discretize_gaussian_1d(double mean, double sigma, double lo, double hi, double step) {
  if (!(sigma > 0.0) || !(step > 0.0) || !(hi > lo)) {
    throw ArgumentError("discretize_gaussian_1d: invalid arguments");
  }
  const auto cells = static_cast<Eigen::Index>(std::llround((hi - lo) / step));
  Matrix support(cells, 1);
  Vector mass(cells);
  for (Eigen::Index i = 0; i < cells; ++i) {
    const double a = lo + static_cast<double>(i) * step;
    const double b = a + step;
    support(i, 0) = 0.5 * (a + b);
    mass[i] = normal_interval((a - mean) / sigma, (b - mean) / sigma);
  }
  return DiscreteMeasure{std::move(support), std::move(mass)};
}

void save_delta_table(const DeltaTable& delta, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << "cell_index,input_index,delta\n";
  char buf[64];
  for (Eigen::Index c = 0; c < delta.rows(); ++c) {
    for (Eigen::Index u = 0; u < delta.cols(); ++u) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), delta(c, u));
      out << c << ',' << u << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf)) << '\n';
    }
  }
}

DeltaTable load_delta_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "' for reading");
  std::string line;
  std::getline(in, line);
  if (line.rfind("cell_index,input_index,delta", 0) != 0) {
    throw ParseError(path.string() + ":1: bad delta table header");
  }
  std::vector<std::tuple<long, long, double>> entries;
  long max_cell = -1;
  long max_input = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    long c = 0;
    long u = 0;
    double d = 0.0;
    const char* it = line.data();
    const char* end = line.data() + line.size();
    auto r1 = std::from_chars(it, end, c);
    bool ok = r1.ec == std::errc() && r1.ptr != end && *r1.ptr == ',';
    if (ok) {
      auto r2 = std::from_chars(r1.ptr + 1, end, u);
      ok = r2.ec == std::errc() && r2.ptr != end && *r2.ptr == ',';
      if (ok) {
        auto r3 = std::from_chars(r2.ptr + 1, end, d);
        ok = r3.ec == std::errc() && r3.ptr == end;
      }
    }
    if (!ok || c < 0 || u < 0) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": malformed row");
    }
    entries.emplace_back(c, u, d);
    max_cell = std::max(max_cell, c);
    max_input = std::max(max_input, u);
  }
  DeltaTable table = DeltaTable::Zero(max_cell + 1, max_input + 1);
  for (const auto& [c, u, d] : entries) table(c, u) = d;
  return table;
}

}  // namespace stochsyn
