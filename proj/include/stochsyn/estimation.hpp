#pragma once

#include "stochsyn/common.hpp"
#include "stochsyn/model.hpp"

#include <json.hpp>

namespace stochsyn {

/// Gaussian prior over the stacked parameter vector [theta_1; ...; theta_n].
struct Prior {
  Vector mu0;
  Matrix sigma0;
};

/// mu0 = 0, sigma0 = variance * I of size (m n).
Prior default_prior(std::size_t m, std::size_t n, double variance = 10.0);

/// Posterior of Bayesian linear regression and its chi-squared credible set.
///
/// mu_n stacks the m-vectors of the n output dimensions, so theta_hat is the
/// column-major m x n view of mu_n.
struct Posterior {
  Vector mu_n;
  Matrix sigma_n;
  Matrix theta_hat;
  double alpha = 0.1;
  /// n * chi2_quantile(1 - alpha, n).
  double credible_radius = 0.0;

  Eigen::Index m() const { return theta_hat.rows(); }
  Eigen::Index n() const { return theta_hat.cols(); }
};

/// Row i holds f(x_i, u_i)^T.
Matrix design_matrix(const FeatureLibrary& lib, const Dataset& ds);

/// Column-major stacking of an m x n matrix, matching Posterior::mu_n.
Vector vectorize(const Matrix& theta);
Matrix unvectorize(const Vector& theta_bar, Eigen::Index m, Eigen::Index n);

double credible_radius(double alpha, Eigen::Index n);

/// Posterior precision sigma0^-1 + sigma^-1 (x) Phi^T Phi and mean
/// sigma_N (sigma0^-1 mu0 + (sigma^-1 (x) Phi^T) X+). An empty dataset returns
/// the prior unchanged.
Posterior posterior(const Prior& prior, const Dataset& ds, const Matrix& sigma_noise,
                    const FeatureLibrary& lib, double alpha);

/// Mahalanobis form (theta_bar - mu_n)^T sigma_n^-1 (theta_bar - mu_n).
double credible_distance(const Posterior& post, const Matrix& theta);
bool in_credible_set(const Posterior& post, const Matrix& theta);

nlohmann::json posterior_to_json(const Posterior& post);
Posterior posterior_from_json(const nlohmann::json& j);

}  // namespace stochsyn
