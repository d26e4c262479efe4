#include "stochsyn/simrel.hpp"
#include "stochsyn/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace stochsyn;

namespace {

FeatureLibrary constant_feature() {
  FeatureLibrary lib;
  lib.m = 1;
  lib.names = {"1"};
  lib.eval = [](const Vector&, const Vector&) { return Vector::Ones(1); };
  return lib;
}

/// Library returning x itself, so f can be chosen directly through x.
FeatureLibrary passthrough(std::size_t m) {
  FeatureLibrary lib;
  lib.m = m;
  lib.eval = [](const Vector& x, const Vector&) { return x; };
  return lib;
}

Posterior make_posterior(const Matrix& theta_hat, const Matrix& sigma_n, double alpha = 0.1) {
  Posterior post;
  post.theta_hat = theta_hat;
  post.mu_n = vectorize(theta_hat);
  post.sigma_n = sigma_n;
  post.alpha = alpha;
  post.credible_radius = credible_radius(alpha, theta_hat.cols());
  return post;
}

Matrix random_spd(Eigen::Index d, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> g;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = g(rng);
  return scale * (a * a.transpose() + 0.1 * Matrix::Identity(d, d));
}

double min_density_quadrature(double gamma_value, double sigma, double step) {
  double mass = 0.0;
  const double lo = -8.0 * sigma - std::abs(gamma_value);
  const double hi = 8.0 * sigma + std::abs(gamma_value);
  const double norm = 1.0 / (sigma * std::sqrt(2.0 * M_PI));
  for (double t = lo + 0.5 * step; t < hi; t += step) {
    const double a = norm * std::exp(-0.5 * t * t / (sigma * sigma));
    const double b = norm * std::exp(-0.5 * (t + gamma_value) * (t + gamma_value) / (sigma * sigma));
    mass += std::min(a, b) * step;
  }
  return mass;
}

}  // namespace

TEST_CASE("offset gamma") {
  const Vector x = Vector::Zero(1);
  const Vector u = Vector::Zero(1);
  CHECK(gamma(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 0.5), x, u, constant_feature())[0] ==
        doctest::Approx(1.5));
  CHECK(gamma(Matrix::Constant(1, 1, 2.0), Matrix::Constant(1, 1, 2.0), x, u, constant_feature()).isZero());

  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  const FeatureLibrary lib = van_der_pol_features();
  for (int trial = 0; trial < 20; ++trial) {
    Matrix theta(4, 2), theta_hat(4, 2);
    for (Eigen::Index i = 0; i < 8; ++i) {
      theta.data()[i] = g(rng);
      theta_hat.data()[i] = g(rng);
    }
    Vector xs(2), us(1);
    xs << g(rng), g(rng);
    us << g(rng);
    const Vector f = evaluate(lib, xs, us);
    const Vector expect = theta.transpose() * f - theta_hat.transpose() * f;
    CHECK((gamma(theta, theta_hat, xs, us, lib) - expect).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("coupling mass against quadrature") {
  CHECK(coupling_mass(Vector::Zero(2), Matrix::Identity(2, 2)) == 1.0);
  const double oracle = min_density_quadrature(1.0, 1.0, 1e-3);
  CHECK(oracle == doctest::Approx(0.617075).epsilon(1e-6));
  CHECK(coupling_mass(Vector::Ones(1), Matrix::Identity(1, 1)) == doctest::Approx(oracle).epsilon(1e-6));
  for (double gv : {0.1, 0.5, 2.0}) {
    for (double s : {0.5, 2.0}) {
      CHECK(std::abs(coupling_mass(Vector::Constant(1, gv), Matrix::Constant(1, 1, s * s)) -
                     min_density_quadrature(gv, s, 1e-3)) < 1e-6);
    }
  }
  CHECK(coupling_mass(Vector::Constant(1, 200.0), Matrix::Identity(1, 1)) < 1e-12);
}

TEST_CASE("delta bound examples") {
  const FeatureLibrary lib = constant_feature();
  const Vector x = Vector::Zero(1);
  // sqrt(r) |f| = 1 with r = |sigma_N| c when sigma = 1.
  const double c = credible_radius(0.1, 1);
  const Posterior post = make_posterior(Matrix::Constant(1, 1, 0.3), Matrix::Constant(1, 1, 1.0 / c));
  CHECK(deviation_radius(post, Matrix::Identity(1, 1)) == doctest::Approx(1.0));
  CHECK(delta_bound(post, Matrix::Identity(1, 1), x, x, lib) == doctest::Approx(0.382925).epsilon(1e-6));

  const FeatureLibrary pass = passthrough(2);
  const Posterior p2 = make_posterior(Matrix::Zero(2, 1), Matrix::Identity(2, 2));
  CHECK(delta_bound(p2, Matrix::Identity(1, 1), Vector::Zero(2), Vector::Zero(0), pass) == 0.0);
  CHECK(delta_exact(p2, Matrix::Identity(1, 1), Vector::Zero(2), Vector::Zero(0), pass) == 0.0);

  const Posterior tight = make_posterior(Matrix::Zero(2, 1), 1e-12 * Matrix::Identity(2, 2));
  CHECK(delta_bound(tight, Matrix::Identity(1, 1), Vector::Ones(2), Vector::Zero(0), pass) < 1e-5);
}

TEST_CASE("exact zeta is tight for isotropic covariances") {
  const double s = 0.03;
  const Posterior post = make_posterior(Matrix::Zero(3, 2), s * Matrix::Identity(6, 6));
  Vector f(3);
  f << 0.5, -1.0, 2.0;
  CHECK(zeta_exact(post, Matrix::Identity(2, 2), f) ==
        doctest::Approx(post.credible_radius * s * f.squaredNorm()).epsilon(1e-12));
  const FeatureLibrary pass = passthrough(3);
  CHECK(delta_exact(post, Matrix::Identity(2, 2), f, Vector::Zero(0), pass) ==
        doctest::Approx(delta_bound(post, Matrix::Identity(2, 2), f, Vector::Zero(0), pass)).epsilon(1e-12));
}

TEST_CASE("anisotropic exact delta against boundary sampling") {
  const double s = 0.5;
  Matrix sigma_n = Matrix::Zero(2, 2);
  sigma_n.diagonal() << s, s * 1e-4;
  const Posterior post = make_posterior(Matrix::Zero(2, 1), sigma_n);
  Vector f(2);
  f << 0.0, 1.0;
  const Matrix sigma = Matrix::Identity(1, 1);
  const double c = post.credible_radius;
  const double zeta = zeta_exact(post, sigma, f);
  CHECK(zeta == doctest::Approx(c * s * 1e-4).epsilon(1e-10));

  // Oracle: largest gamma^T sigma^-1 gamma over 1e5 points of the ellipsoid boundary.
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  const Matrix root = sigma_n.llt().matrixL();
  double best = 0.0;
  for (int i = 0; i < 100000; ++i) {
    Vector z(2);
    z << g(rng), g(rng);
    const Vector d = std::sqrt(c) * root * z.normalized();
    const double gv = f.dot(d);
    best = std::max(best, gv * gv);
  }
  CHECK(best <= zeta * (1.0 + 1e-12));
  CHECK(best >= zeta * (1.0 - 1e-3));

  const FeatureLibrary pass = passthrough(2);
  const double de = delta_exact(post, sigma, f, Vector::Zero(0), pass);
  const double db = delta_bound(post, sigma, f, Vector::Zero(0), pass);
  CHECK(de < db);
  CHECK(de == doctest::Approx(uncoupled_mass(std::sqrt(c * s * 1e-4))).epsilon(1e-6));
  CHECK(db == doctest::Approx(uncoupled_mass(std::sqrt(c * s))).epsilon(1e-6));
}

TEST_CASE("exact delta never exceeds the bound") {
  std::mt19937_64 rng(99);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 1 + trial % 4;
    const Eigen::Index n = 1 + (trial / 4) % 3;
    const Posterior post = make_posterior(Matrix::Zero(m, n), random_spd(m * n, rng, 0.01 * unit(rng)),
                                          0.05 + 0.9 * unit(rng));
    const Matrix sigma = random_spd(n, rng, 0.5);
    Vector f(m);
    for (Eigen::Index i = 0; i < m; ++i) f[i] = 3.0 * g(rng);
    const FeatureLibrary pass = passthrough(static_cast<std::size_t>(m));
    const double de = delta_exact(post, sigma, f, Vector::Zero(0), pass);
    const double db = delta_bound(post, sigma, f, Vector::Zero(0), pass);
    CHECK(de <= db + 1e-10);
    CHECK(de >= 0.0);
  }
}

TEST_CASE("state mapping") {
  const FeatureLibrary lib = linear_features(2, 1);
  Matrix theta_hat(3, 2);
  theta_hat << 0.9, 0.1, -0.2, 0.8, 0.5, 1.0;
  Vector x(2), xh(2), xp(2), u(1), uh(1);
  x << 1.0, -2.0;
  xh << 1.2, -1.9;
  xp << 0.3, 0.4;
  u << 0.5;
  uh << -0.5;
  CHECK(state_mapping(x, u, x, u, xp, theta_hat, lib) == xp);
  CHECK(state_mapping(xh, uh, x, u, xp, Matrix::Zero(3, 2), lib) == xp);
  const Matrix a_hat = theta_hat.topRows(2).transpose();
  const Matrix b_hat = theta_hat.bottomRows(1).transpose();
  const Vector diff = state_mapping(xh, uh, x, u, xp, theta_hat, lib) - xp;
  CHECK((diff - (a_hat * (xh - x) + b_hat * (uh - u))).norm() < 1e-14);
}

TEST_CASE("relation composition") {
  SimRelation a{0.0, 0.051, RelationKind::parametric};
  SimRelation b{0.950, 0.0, RelationKind::discretization};
  const SimRelation ab = compose_relations(a, b);
  CHECK(ab.eps == doctest::Approx(0.950));
  CHECK(std::get<double>(ab.delta) == doctest::Approx(0.051));
  CHECK(ab.kind == RelationKind::composed);

  const SimRelation sat = compose_relations(SimRelation{0.0, 0.7}, SimRelation{0.0, 0.7});
  CHECK(std::get<double>(sat.delta) == 1.0);

  Matrix t1(2, 2), t2(2, 2);
  t1 << 0.1, 0.6, 0.0, 0.3;
  t2 << 0.2, 0.6, 0.5, 0.0;
  const SimRelation tab = compose_relations(SimRelation{0.1, t1}, SimRelation{0.2, t2});
  Matrix expect(2, 2);
  expect << 0.1 + 0.2, 1.0, 0.5, 0.3;
  CHECK(std::get<DeltaTable>(tab.delta) == expect);
  const SimRelation mixed = compose_relations(SimRelation{0.0, t1}, SimRelation{0.0, 0.5});
  CHECK(std::get<DeltaTable>(mixed.delta)(0, 0) == 0.1 + 0.5);
  CHECK(std::get<DeltaTable>(mixed.delta)(0, 1) == 1.0);
  const SimRelation id = compose_relations(SimRelation{0.0, 0.0}, SimRelation{0.3, t2});
  CHECK(id.eps == 0.3);
  CHECK(std::get<DeltaTable>(id.delta) == t2);
  CHECK_THROWS_AS(compose_relations(SimRelation{0.0, t1}, SimRelation{0.0, Matrix::Zero(3, 2)}), ArgumentError);
}

TEST_CASE("sub-coupling examples") {
  Matrix pts(3, 1);
  pts << 0, 1, 2;
  Vector mass(3);
  mass << 0.2, 0.5, 0.3;
  const DiscreteMeasure p = make_measure(pts, mass);
  const auto identity = [](Eigen::Index i, Eigen::Index j) { return i == j; };
  const auto [v, achieved] = build_sub_coupling(p, p, identity);
  CHECK(achieved == doctest::Approx(1.0));
  CHECK(Matrix(v.joint) == Matrix(mass.asDiagonal()));

  const auto never = [](Eigen::Index, Eigen::Index) { return false; };
  CHECK(build_sub_coupling(p, p, never).second == 0.0);

  // Gaussians N(0, 1) and N(-1, 1) on a step 0.01 grid over +-8, related when equal.
  const DiscreteMeasure a = discretize_gaussian_1d(0.0, 1.0, -9.0, 8.0, 0.01);
  const DiscreteMeasure b = discretize_gaussian_1d(-1.0, 1.0, -9.0, 8.0, 0.01);
  const auto [g, got] = build_sub_coupling(a, b, identity);
  CHECK(std::abs(got - 2.0 * normal_cdf(-0.5)) < 1e-3);
  CHECK(check_sub_coupling(g, a, b).ok());
}

TEST_CASE("completion examples") {
  Matrix pts(2, 1);
  pts << 0, 1;
  Vector ph(2), pp(2);
  ph << 0.6, 0.4;
  pp << 0.5, 0.5;
  const DiscreteMeasure a = make_measure(pts, ph);
  const DiscreteMeasure b = make_measure(pts, pp);
  DiscreteCoupling v;
  v.joint = Matrix::Zero(2, 2);
  v.joint.diagonal() << 0.5, 0.4;
  v.relation_mask = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Identity(2, 2);
  const Matrix w = complete_coupling(v, a, b);
  Matrix expect(2, 2);
  expect << 0.5, 0.1, 0.0, 0.4;
  CHECK((w - expect).cwiseAbs().maxCoeff() < 1e-15);

  v.joint.setZero();
  CHECK((complete_coupling(v, a, b) - ph * pp.transpose()).cwiseAbs().maxCoeff() < 1e-15);

  const DiscreteMeasure same = make_measure(pts, pp);
  v.joint = Matrix(pp.asDiagonal());
  CHECK(complete_coupling(v, same, same) == v.joint);
}

TEST_CASE("random sub-couplings complete to exact marginals") {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index na = 2 + trial % 9;
    const Eigen::Index nb = 2 + (trial * 7) % 11;
    Vector ma(na), mb(nb);
    for (Eigen::Index i = 0; i < na; ++i) ma[i] = unit(rng);
    for (Eigen::Index j = 0; j < nb; ++j) mb[j] = unit(rng);
    ma /= ma.sum();
    mb /= mb.sum();
    const DiscreteMeasure a = make_measure(Matrix::Zero(na, 1), ma);
    const DiscreteMeasure b = make_measure(Matrix::Zero(nb, 1), mb);
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> rel(na, nb);
    for (Eigen::Index i = 0; i < na; ++i) {
      for (Eigen::Index j = 0; j < nb; ++j) rel(i, j) = unit(rng) < 0.4;
    }
    const auto [v, achieved] = build_sub_coupling(a, b, [&](Eigen::Index i, Eigen::Index j) { return rel(i, j); });
    const CouplingCheck chk = check_sub_coupling(v, a, b);
    CHECK(chk.ok());
    CHECK(achieved <= 1.0 + 1e-12);
    const Matrix w = complete_coupling(v, a, b);
    CHECK((w.rowwise().sum() - ma).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w.colwise().sum().transpose() - mb).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((w - v.joint).minCoeff() >= -1e-15);
  }
}

TEST_CASE("delta table csv round trip") {
  Matrix d(3, 2);
  d << 0.1, 0.2, 1.0 / 3.0, 0.0, 1.0, 1e-17;
  const auto path = std::filesystem::temp_directory_path() / "stochsyn_test_delta.csv";
  save_delta_table(d, path);
  CHECK(load_delta_table(path) == d);
  std::filesystem::remove(path);
}
