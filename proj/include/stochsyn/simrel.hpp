#pragma once

#include "stochsyn/common.hpp"
#include "stochsyn/estimation.hpp"
#include "stochsyn/model.hpp"

#include <filesystem>
#include <functional>
#include <variant>

namespace stochsyn {

/// Uncoupled probability per (abstract cell, input); rows are cells.
using DeltaTable = Matrix;

enum class RelationKind { parametric, discretization, composed };

/// Deviation bounds (eps, delta) of a sub-simulation relation.
struct SimRelation {
  double eps = 0.0;
  std::variant<double, DeltaTable> delta = 0.0;
  RelationKind kind = RelationKind::parametric;
};

/// Sums eps and delta (pointwise for tables, clamped to 1).
SimRelation compose_relations(const SimRelation& first, const SimRelation& second);

/// gamma = (theta - theta_hat)^T f(x, u).
Vector gamma(const Matrix& theta, const Matrix& theta_hat, const Vector& x, const Vector& u,
             const FeatureLibrary& lib);

/// Total mass of min(N(0, sigma), N(-gamma, sigma)) = 2 Phi(-sqrt(gamma^T sigma^-1 gamma) / 2).
double coupling_mass(const Vector& gamma, const Matrix& sigma);

/// r = ||sigma^-1|| ||sigma_N|| n chi2^-1(1 - alpha | n) with spectral norms.
double deviation_radius(const Posterior& post, const Matrix& sigma);

/// Closed-form delta = 1 - 2 Phi(-(sqrt(r) / 2) ||f(x, u)||).
double delta_bound(const Posterior& post, const Matrix& sigma, const Vector& x_hat,
                   const Vector& u_hat, const FeatureLibrary& lib);

/// Exact sup of gamma^T sigma^-1 gamma over the credible ellipsoid for feature
/// vector f, i.e. c * lambda_max(sigma^-1/2 G sigma_N G^T sigma^-1/2) with
/// G = I_n (x) f^T.
double zeta_exact(const Posterior& post, const Matrix& sigma, const Vector& f);

/// delta from the exact zeta; never larger than delta_bound.
double delta_exact(const Posterior& post, const Matrix& sigma, const Vector& x_hat,
                   const Vector& u_hat, const FeatureLibrary& lib);

enum class DeltaMode { bound, exact };

/// Returns x+ + theta_hat^T (f(x_hat, u_hat) - f(x, u)).
Vector state_mapping(const Vector& x_hat, const Vector& u_hat, const Vector& x, const Vector& u,
                     const Vector& x_plus, const Matrix& theta_hat, const FeatureLibrary& lib);

// --- discrete couplings -----------------------------------------------------

/// Weighted point set; rows of `support` are points.
struct DiscreteMeasure {
  Matrix support;
  Vector mass;

  Eigen::Index size() const { return mass.size(); }
};

DiscreteMeasure make_measure(Matrix support, Vector mass);

/// Joint weights indexed (support of p_hat) x (support of p).
struct DiscreteCoupling {
  Matrix joint;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> relation_mask;

  double mass() const { return joint.sum(); }
};

using PairRelation = std::function<bool(Eigen::Index i, Eigen::Index j)>;

struct CouplingCheck {
  bool on_relation = false;
  bool rows_dominated = false;
  bool cols_dominated = false;
  double worst_violation = 0.0;

  bool ok() const { return on_relation && rows_dominated && cols_dominated; }
};

/// Sub-probability coupling concentrated on the relation. For every related
/// pair, scanned row by row, the joint weight is the smaller of the remaining
/// row and column masses; along a matching this is min(p_hat_i, p_j).
std::pair<DiscreteCoupling, double> build_sub_coupling(const DiscreteMeasure& p_hat,
                                                       const DiscreteMeasure& p,
                                                       const PairRelation& relation);

/// Checks mass confinement and marginal domination within tol.
CouplingCheck check_sub_coupling(const DiscreteCoupling& v, const DiscreteMeasure& p_hat,
                                 const DiscreteMeasure& p, double tol = 1e-12);

/// Completes v to a coupling of p_hat and p by distributing the residual
/// marginals independently: W = v + r_hat r^T / (1 - v(R)).
Matrix complete_coupling(const DiscreteCoupling& v, const DiscreteMeasure& p_hat,
                         const DiscreteMeasure& p);

/// Discretises N(mean, sigma^2) onto the cells of width `step` covering
/// [lo, hi]; support points are cell centres, masses exact cell integrals.
DiscreteMeasure discretize_gaussian_1d(double mean, double sigma, double lo, double hi, double step);

void save_delta_table(const DeltaTable& delta, const std::filesystem::path& path);
DeltaTable load_delta_table(const std::filesystem::path& path);

}  // namespace stochsyn
