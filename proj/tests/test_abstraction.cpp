#include "stochsyn/abstraction.hpp"
#include "stochsyn/stats.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace stochsyn;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

Matrix package_theta() {
  Matrix theta(4, 2);
  theta << 0.6, 0.2, 0.3, 0.7, 1.2, 0.0, 0.0, 1.4;
  return theta;
}

Matrix vdp_theta() {
  Matrix theta(4, 2);
  theta << 1.0, -0.1, 0.1, 1.09, 0.0, -0.09, 0.0, 1.0;
  return theta;
}

/// Dense oracle for a product row: the exact Gaussian mass of cell j.
double cell_mass(const Grid& grid, std::size_t cell, const Vector& mean, const Vector& sd) {
  const Box b = grid.cell_box(cell);
  double p = 1.0;
  for (Eigen::Index d = 0; d < mean.size(); ++d) {
    p *= normal_interval((b.lo[d] - mean[d]) / sd[d], (b.hi[d] - mean[d]) / sd[d]);
  }
  return p;
}

}  // namespace

TEST_CASE("grid geometry") {
  const Grid g1(vec({0}), vec({1}), {2});
  CHECK(g1.size() == 2);
  CHECK(g1.center(0)[0] == doctest::Approx(0.25));
  CHECK(g1.center(1)[0] == doctest::Approx(0.75));
  CHECK(g1.widths()[0] == doctest::Approx(0.5));

  const Grid g2 = build_grid(make_box(vec({-6, -6}), vec({6, 6})), {60, 60});
  CHECK(g2.size() == 3600);
  CHECK(g2.widths()[0] == doctest::Approx(0.2));
  CHECK(g2.widths()[1] == doctest::Approx(0.2));
  for (std::size_t c = 0; c < g2.size(); c += 7) {
    CHECK(g2.cell_of(g2.center(c)) == c);
    CHECK(g2.linear_index(g2.multi_index(c)) == c);
  }
  CHECK(g2.multi_index(61) == std::vector<std::size_t>{1, 1});

  bool clamped = false;
  CHECK(g2.cell_of(vec({-100, -100}), &clamped) == 0);
  CHECK(clamped);
  g2.cell_of(vec({0.1, 0.1}), &clamped);
  CHECK_FALSE(clamped);
  CHECK(g2.cell_of(vec({6, 6})) == 3599);

  CHECK_THROWS_AS(Grid(vec({0}), vec({1}), {0}), ArgumentError);
  CHECK_THROWS_AS(Grid(vec({1}), vec({0}), {3}), ArgumentError);
}

TEST_CASE("input gridding") {
  const auto in = grid_inputs(make_box(vec({-1, -1}), vec({1, 1})), 5);
  CHECK(in.size() == 25);
  CHECK(in.front() == vec({-1, -1}));
  CHECK(in.back() == vec({1, 1}));
  const auto mid = grid_inputs(make_box(vec({-1}), vec({3})), 1);
  REQUIRE(mid.size() == 1);
  CHECK(mid[0][0] == 1.0);
}

TEST_CASE("single cell row") {
  const Grid g(vec({-0.5}), vec({0.5}), {1});
  const ProductRow row = gaussian_row(g, vec({0}), vec({1}), 1e-12);
  CHECK(row.retained == doctest::Approx(0.382925).epsilon(1e-6));
  CHECK(row.sink() == doctest::Approx(0.617075).epsilon(1e-6));
}

TEST_CASE("far mean goes to the sink") {
  const Grid g(vec({-1, -1}), vec({1, 1}), {10, 10});
  const ProductRow row = gaussian_row(g, vec({15, 0}), vec({1, 1}), 1e-12);
  CHECK(row.sink() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("row symmetry and stochasticity") {
  const Grid g(vec({-3}), vec({3}), {12});
  const ProductRow row = gaussian_row(g, vec({0}), vec({0.7}), 0.0);
  const SparseRow s = expand_row(row, g);
  std::vector<double> dense(12, 0.0);
  for (std::size_t k = 0; k < s.index.size(); ++k) dense[s.index[k]] = s.prob[k];
  for (std::size_t j = 0; j < 12; ++j) CHECK(std::abs(dense[j] - dense[11 - j]) < 1e-12);
  double total = s.sink;
  for (double p : s.prob) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("product rows agree with dense cell integrals") {
  const Grid g(vec({-2, -1}), vec({2, 3}), {17, 9});
  const Vector mean = vec({0.3, 1.1});
  const Vector sd = vec({0.4, 0.9});
  const ProductRow row = gaussian_row(g, mean, sd, 0.0);
  const SparseRow s = expand_row(row, g);
  REQUIRE(s.index.size() == g.size());
  for (std::size_t k = 0; k < s.index.size(); ++k) {
    CHECK(s.prob[k] == doctest::Approx(cell_mass(g, s.index[k], mean, sd)).epsilon(1e-12));
  }
  std::vector<double> values(g.size());
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (double& v : values) v = unit(rng);
  double dense = 0.0;
  for (std::size_t k = 0; k < s.index.size(); ++k) dense += s.prob[k] * values[s.index[k]];
  CHECK(row_expectation(row, g, values.data()) == doctest::Approx(dense).epsilon(1e-13));
}

TEST_CASE("pruning only moves mass to the sink") {
  const Grid g(vec({-6, -6}), vec({6, 6}), {60, 60});
  const ProductRow full = gaussian_row(g, vec({1, -2}), vec({0.3, 0.3}), 0.0);
  const ProductRow pruned = gaussian_row(g, vec({1, -2}), vec({0.3, 0.3}), 1e-9);
  CHECK(pruned.retained <= full.retained);
  CHECK(full.retained - pruned.retained < 1e-7);
  const SparseRow sp = expand_row(pruned, g);
  const SparseRow sf = expand_row(full, g);
  CHECK(sp.index.size() < sf.index.size());
}

TEST_CASE("translation invariance away from the boundary") {
  const Grid g(vec({-5}), vec({5}), {50});
  const ProductRow a = gaussian_row(g, vec({0.0}), vec({0.5}), 1e-14);
  const ProductRow b = gaussian_row(g, vec({1.0}), vec({0.5}), 1e-14);
  const SparseRow sa = expand_row(a, g);
  const SparseRow sb = expand_row(b, g);
  REQUIRE(sa.index.size() == sb.index.size());
  for (std::size_t k = 0; k < sa.index.size(); ++k) {
    CHECK(sb.index[k] == sa.index[k] + 5);
    CHECK(sb.prob[k] == doctest::Approx(sa.prob[k]).epsilon(1e-10));
  }
}

TEST_CASE("non-diagonal noise is rejected") {
  Matrix sigma(2, 2);
  sigma << 0.1, 0.02, 0.02, 0.1;
  CHECK_THROWS_AS(diagonal_stddev(sigma), UnsupportedCovarianceError);
  CHECK(diagonal_stddev(0.04 * Matrix::Identity(2, 2)).isApprox(vec({0.2, 0.2})));
}

TEST_CASE("abstraction rows are stochastic") {
  const Grid g = build_grid(make_box(vec({-6, -6}), vec({6, 6})), {20, 20});
  const auto inputs = grid_inputs(make_box(vec({-1, -1}), vec({1, 1})), 3);
  const AbstractMdp mdp = build_abstraction(package_theta(), linear_features(2, 2), 0.1 * Matrix::Identity(2, 2),
                                            Matrix::Identity(2, 2), g, inputs);
  CHECK(mdp.num_cells() == 400);
  CHECK(mdp.num_inputs() == 9);
  CHECK(rows_stochastic(mdp));
  CHECK(mdp.eps2 == doctest::Approx(std::sqrt(0.3 * 0.3 * 2)));
  CHECK_FALSE(mdp.delta2_sampled);

  std::vector<double> ones(mdp.num_cells(), 1.0);
  for (std::size_t u = 0; u < mdp.num_inputs(); u += 4) {
    for (std::size_t c = 0; c < mdp.num_cells(); c += 37) {
      CHECK(mdp.expectation(u, c, ones.data()) == doctest::Approx(mdp.retained(u, c)).epsilon(1e-12));
      const SparseRow r = mdp.row(u, c);
      double total = r.sink;
      for (double p : r.prob) total += p;
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("discretisation error shrinks with the grid") {
  const Box box = make_box(vec({-6, -6}), vec({6, 6}));
  const auto inputs = grid_inputs(make_box(vec({-1, -1}), vec({1, 1})), 3);
  const Matrix sigma = 0.1 * Matrix::Identity(2, 2);
  double prev_eps = 1e300;
  double prev_delta = 1e300;
  for (std::size_t k : {5, 10, 40, 160}) {
    const DiscretizationErrors e = discretization_errors(package_theta(), linear_features(2, 2), sigma,
                                                         Matrix::Identity(2, 2), build_grid(box, {k, k}), inputs, 3);
    CHECK(e.eps2 < prev_eps);
    CHECK(e.delta2.maxCoeff() < prev_delta);
    prev_eps = e.eps2;
    prev_delta = e.delta2.maxCoeff();
  }
  CHECK(prev_eps < 0.06);
  CHECK(prev_delta < 0.08);
}

TEST_CASE("corner sampling is exact for linear features") {
  const Grid g = build_grid(make_box(vec({-6, -6}), vec({6, 6})), {12, 12});
  const auto inputs = grid_inputs(make_box(vec({-1, -1}), vec({1, 1})), 2);
  const Matrix sigma = 0.1 * Matrix::Identity(2, 2);
  const Matrix theta_hat = package_theta();
  const DiscretizationErrors e =
      discretization_errors(theta_hat, linear_features(2, 2), sigma, Matrix::Identity(2, 2), g, inputs, 3);
  const Matrix whiten = Matrix(sigma.llt().matrixL()).inverse() * theta_hat.transpose();
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t c = 0; c < g.size(); c += 13) {
    const Box b = g.cell_box(c);
    double best = 0.0;
    for (int i = 0; i < 2000; ++i) {
      Vector s(2);
      s << b.lo[0] + unit(rng) * (b.hi[0] - b.lo[0]), b.lo[1] + unit(rng) * (b.hi[1] - b.lo[1]);
      Vector f(4);
      f << s - g.center(c), 0.0, 0.0;
      best = std::max(best, (whiten * f).norm());
    }
    double vertex = 0.0;
    for (int k = 0; k < 4; ++k) {
      Vector f = Vector::Zero(4);
      f[0] = (k & 1 ? b.hi[0] : b.lo[0]) - g.center(c)[0];
      f[1] = (k & 2 ? b.hi[1] : b.lo[1]) - g.center(c)[1];
      vertex = std::max(vertex, (whiten * f).norm());
    }
    // Interior samples never beat the vertex value, which is what is shipped.
    CHECK(uncoupled_mass(best) <= e.delta2(static_cast<Eigen::Index>(c), 0) + 1e-12);
    CHECK(uncoupled_mass(vertex) == doctest::Approx(e.delta2(static_cast<Eigen::Index>(c), 0)).epsilon(1e-12));
  }
}

TEST_CASE("sampled delta2 for Van der Pol against a dense oracle") {
  // One 0.03-wide cell centred at (1, 1).
  const Grid g(vec({0.985, 0.985}), vec({1.015, 1.015}), {1, 1});
  const auto inputs = grid_inputs(make_box(vec({-1}), vec({1})), 5);
  const Matrix sigma = 0.04 * Matrix::Identity(2, 2);
  const FeatureLibrary lib = van_der_pol_features();
  const DiscretizationErrors e =
      discretization_errors(vdp_theta(), lib, sigma, Matrix::Identity(2, 2), g, inputs, 3);
  CHECK(e.sampled);
  const Matrix whiten = Matrix(sigma.llt().matrixL()).inverse() * vdp_theta().transpose();
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t u = 0; u < inputs.size(); ++u) {
    const Vector fc = evaluate(lib, g.center(0), inputs[u]);
    double best = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const Vector s = vec({0.985 + 0.03 * unit(rng), 0.985 + 0.03 * unit(rng)});
      best = std::max(best, (whiten * (evaluate(lib, s, inputs[u]) - fc)).norm());
    }
    CHECK(uncoupled_mass(best) <= e.delta2(0, static_cast<Eigen::Index>(u)) + 1e-6);
  }
}

TEST_CASE("transition cache round trip") {
  const Grid g = build_grid(make_box(vec({-6, -6}), vec({6, 6})), {15, 15});
  const auto inputs = grid_inputs(make_box(vec({-1, -1}), vec({1, 1})), 2);
  const Matrix sigma = 0.1 * Matrix::Identity(2, 2);
  const AbstractMdp mdp =
      build_abstraction(package_theta(), linear_features(2, 2), sigma, Matrix::Identity(2, 2), g, inputs);
  const std::uint64_t key = abstraction_key(package_theta(), sigma, g, inputs, 1e-12);
  CHECK(key != abstraction_key(package_theta() * 1.0001, sigma, g, inputs, 1e-12));
  CHECK(key != abstraction_key(package_theta(), sigma, g, inputs, 1e-10));

  const auto path = std::filesystem::temp_directory_path() / "stochsyn_test_cache.bin";
  save_transition_cache(mdp, key, path);
  const std::vector<ProductRow> rows = load_transition_cache(path, key, g, inputs.size());
  const auto& orig = mdp.product_rows();
  REQUIRE(rows.size() == orig.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    REQUIRE(rows[r].factors.size() == orig[r].factors.size());
    for (std::size_t d = 0; d < rows[r].factors.size(); ++d) {
      CHECK(rows[r].factors[d].first == orig[r].factors[d].first);
      CHECK(rows[r].factors[d].probs == orig[r].factors[d].probs);
    }
    CHECK(rows[r].retained == doctest::Approx(orig[r].retained).epsilon(1e-15));
  }
  CHECK(load_transition_cache(path, key + 1, g, inputs.size()).empty());
  CHECK(load_transition_cache(path, key, build_grid(make_box(vec({-6, -6}), vec({6, 6})), {15, 16}), inputs.size())
            .empty());
  std::filesystem::remove(path);
  CHECK(load_transition_cache(path, key, g, inputs.size()).empty());
}

TEST_CASE("explicit abstractions") {
  const Grid g(vec({0}), vec({2}), {2});
  std::vector<SparseRow> rows(2);
  rows[0] = SparseRow{{1}, {0.5}, 0.5};
  rows[1] = SparseRow{{0, 1}, {0.25, 0.75}, 0.0};
  Matrix outputs(2, 1);
  outputs << 0.5, 1.5;
  const AbstractMdp mdp(g, {vec({0})}, outputs, rows);
  CHECK_FALSE(mdp.is_product_form());
  CHECK_THROWS_AS(mdp.product_rows(), StateError);
  const double values[] = {1.0, 2.0};
  CHECK(mdp.expectation(0, 0, values) == doctest::Approx(1.0));
  CHECK(mdp.expectation(0, 1, values) == doctest::Approx(1.75));
  CHECK(mdp.sink(0, 0) == doctest::Approx(0.5));
}
