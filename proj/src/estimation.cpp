#include "stochsyn/estimation.hpp"

#include "stochsyn/stats.hpp"

#include <json.hpp>

namespace stochsyn {

Prior default_prior(std::size_t m, std::size_t n, double variance) {
  const auto d = static_cast<Eigen::Index>(m * n);
  return Prior{Vector::Zero(d), variance * Matrix::Identity(d, d)};
}

Matrix design_matrix(const FeatureLibrary& lib, const Dataset& ds) {
  Matrix phi(ds.size(), static_cast<Eigen::Index>(lib.m));
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    phi.row(i) = evaluate(lib, ds.x.row(i).transpose(), ds.u.row(i).transpose()).transpose();
  }
  return phi;
}

Vector vectorize(const Matrix& theta) {
  return Eigen::Map<const Vector>(theta.data(), theta.size());
}

Matrix unvectorize(const Vector& theta_bar, Eigen::Index m, Eigen::Index n) {
  if (theta_bar.size() != m * n) throw ArgumentError("unvectorize: size mismatch");
  return Eigen::Map<const Matrix>(theta_bar.data(), m, n);
}

double credible_radius(double alpha, Eigen::Index n) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  return static_cast<double>(n) * chi2_quantile(1.0 - alpha, static_cast<double>(n));
}

namespace {

Matrix spd_inverse(const Matrix& a, const char* what) {
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw LinAlgError(std::string(what) + " is not positive definite");
  return llt.solve(Matrix::Identity(a.rows(), a.cols()));
}

}  // namespace

Posterior posterior(const Prior& prior, const Dataset& ds, const Matrix& sigma_noise,
                    const FeatureLibrary& lib, double alpha) {
  const auto m = static_cast<Eigen::Index>(lib.m);
  const Eigen::Index n = sigma_noise.rows();
  const Eigen::Index d = m * n;
  if (prior.mu0.size() != d || prior.sigma0.rows() != d || prior.sigma0.cols() != d) {
    throw ArgumentError("prior dimensions do not match m * n");
  }
  if (sigma_noise.cols() != n) throw ArgumentError("noise covariance must be square");
  if (ds.size() > 0 && (ds.state_dim() != n || ds.x_plus.cols() != n)) {
    throw ArgumentError("dataset state dimension does not match the noise covariance");
  }

  Posterior post;
  post.alpha = alpha;
  post.credible_radius = credible_radius(alpha, n);
  if (ds.size() == 0) {
    post.mu_n = prior.mu0;
    post.sigma_n = prior.sigma0;
    post.theta_hat = unvectorize(post.mu_n, m, n);
    return post;
  }

  const Matrix prior_precision = spd_inverse(prior.sigma0, "prior covariance");
  const Matrix noise_precision = spd_inverse(sigma_noise, "noise covariance");
  const Matrix phi = design_matrix(lib, ds);
  Matrix gram = Matrix::Zero(m, m);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.transpose());
  gram = gram.selfadjointView<Eigen::Lower>();

  // Block (i, j) of sigma^-1 (x) Phi^T Phi is noise_precision(i, j) * gram.
  Matrix precision = prior_precision;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      precision.block(i * m, j * m, m, m) += noise_precision(i, j) * gram;
    }
  }
  // (sigma^-1 (x) Phi^T) X+ stacked by output dimension equals vec(Phi^T X+ sigma^-1).
  const Matrix cross = phi.transpose() * ds.x_plus * noise_precision;
  const Vector rhs = prior_precision * prior.mu0 + vectorize(cross);

  Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw LinAlgError("posterior precision is not positive definite");
  post.mu_n = llt.solve(rhs);
  Matrix sigma_n = llt.solve(Matrix::Identity(d, d));
  post.sigma_n = 0.5 * (sigma_n + sigma_n.transpose());
  post.theta_hat = unvectorize(post.mu_n, m, n);
  return post;
}

double credible_distance(const Posterior& post, const Matrix& theta) {
  if (theta.rows() != post.m() || theta.cols() != post.n()) {
    throw ArgumentError("credible set: theta has the wrong shape");
  }
  const Vector diff = vectorize(theta) - post.mu_n;
  Eigen::LLT<Matrix> llt(post.sigma_n);
  if (llt.info() != Eigen::Success) throw LinAlgError("posterior covariance is not positive definite");
  return llt.matrixL().solve(diff).squaredNorm();
}

bool in_credible_set(const Posterior& post, const Matrix& theta) {
  return credible_distance(post, theta) <= post.credible_radius;
}

namespace {

nlohmann::json flat(const Matrix& a) {
  // Row-major flattening.
  nlohmann::json out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    for (Eigen::Index c = 0; c < a.cols(); ++c) out.push_back(a(r, c));
  }
  return out;
}

Matrix unflat(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols, const char* field) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows * cols) {
    throw ParseError(std::string("posterior JSON: field '") + field + "' has the wrong size");
  }
  Matrix a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = j.at(r * cols + c).get<double>();
  }
  return a;
}

}  // namespace

nlohmann::json posterior_to_json(const Posterior& post) {
  nlohmann::json j;
  j["m"] = post.m();
  j["n"] = post.n();
  j["mu_n"] = flat(post.mu_n);
  j["sigma_n"] = flat(post.sigma_n);
  j["theta_hat"] = flat(post.theta_hat);
  j["alpha"] = post.alpha;
  j["credible_radius"] = post.credible_radius;
  return j;
}

Posterior posterior_from_json(const nlohmann::json& j) {
  try {
    const auto m = j.at("m").get<Eigen::Index>();
    const auto n = j.at("n").get<Eigen::Index>();
    Posterior post;
    post.mu_n = unflat(j.at("mu_n"), m * n, 1, "mu_n");
    post.sigma_n = unflat(j.at("sigma_n"), m * n, m * n, "sigma_n");
    post.theta_hat = unflat(j.at("theta_hat"), m, n, "theta_hat");
    post.alpha = j.at("alpha").get<double>();
    post.credible_radius = j.at("credible_radius").get<double>();
    return post;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("posterior JSON: ") + e.what());
  }
}

}  // namespace stochsyn
