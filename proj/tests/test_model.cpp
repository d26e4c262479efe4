#include "stochsyn/model.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace stochsyn;

namespace {

Matrix package_theta() {
  Matrix theta(4, 2);
  theta << 0.6, 0.2, 0.3, 0.7, 1.2, 0.0, 0.0, 1.4;
  return theta;
}

ParametricSystem package_system() {
  return ParametricSystem(2, 2, linear_features(2, 2), package_theta(), 0.1 * Matrix::Identity(2, 2));
}

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

RegionMap package_regions() {
  return make_region_map({{"P1", make_box(vec({3, -2.5}), vec({6, 1}))},
                          {"P2", make_box(vec({-1, -4}), vec({1, 3}))},
                          {"P3", make_box(vec({-6, -6}), vec({-3, -3}))}},
                         make_box(vec({-6, -6}), vec({6, 6})));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("stochsyn_test_model_" + name);
}

}  // namespace

TEST_CASE("features") {
  const Vector x = vec({0.5, -2.0});
  const Vector u = vec({0.3});
  CHECK(evaluate(linear_features(2, 1), x, u).isApprox(vec({0.5, -2.0, 0.3})));
  CHECK(evaluate(affine_features(2, 1), x, u).isApprox(vec({0.5, -2.0, 0.3, 1.0})));
  CHECK(evaluate(van_der_pol_features(), x, u).isApprox(vec({0.5, -2.0, -0.5, 0.3})));
  CHECK(features_by_name("van_der_pol", 2, 1).m == 4);
  CHECK_THROWS_AS(features_by_name("quartic", 2, 1), ArgumentError);

  FeatureLibrary bad = linear_features(1, 1);
  bad.eval = [](const Vector& x, const Vector&) { return Vector::Constant(2, std::log(x[0])); };
  CHECK_THROWS_AS(evaluate(bad, vec({-1.0}), vec({0.0})), EvaluationError);
}

TEST_CASE("noiseless step") {
  const ParametricSystem sys = package_system();
  NoiseSource silent = NoiseSource::silent();
  CHECK(step(sys, vec({1, 1}), vec({1, 1}), silent).isApprox(vec({2.1, 2.3}), 1e-14));
  CHECK(step(sys, vec({0, 0}), vec({0, 0}), silent).isZero());
}

TEST_CASE("system validation") {
  CHECK_THROWS_AS(ParametricSystem(2, 2, linear_features(2, 2), Matrix::Zero(3, 2), Matrix::Identity(2, 2)),
                  ArgumentError);
  Matrix asym(2, 2);
  asym << 1.0, 0.1, 0.0, 1.0;
  CHECK_THROWS_AS(check_covariance(asym, "sigma"), ArgumentError);
  Matrix indefinite(2, 2);
  indefinite << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(check_covariance(indefinite, "sigma"), ArgumentError);
}

TEST_CASE("noise mean and covariance") {
  const ParametricSystem sys = package_system();
  NoiseSource noise(11);
  const Vector x = vec({1, -1});
  const Vector u = vec({0.5, 0.5});
  const Vector mean = sys.mean(x, u);
  const int draws = 40000;
  Vector sum = Vector::Zero(2);
  Matrix second = Matrix::Zero(2, 2);
  for (int i = 0; i < draws; ++i) {
    const Vector w = step(sys, x, u, noise) - mean;
    sum += w;
    second += w * w.transpose();
  }
  // Standard error of the mean is sqrt(0.1 / 40000) = 1.6e-3.
  CHECK(sum.cwiseAbs().maxCoeff() / draws < 8e-3);
  CHECK((second / draws - sys.sigma()).cwiseAbs().maxCoeff() < 6e-3);
}

TEST_CASE("dataset generation is deterministic and consistent") {
  const ParametricSystem sys = package_system();
  const Box sb = make_box(vec({-6, -6}), vec({6, 6}));
  const Box ib = make_box(vec({-1, -1}), vec({1, 1}));
  NoiseSource a(5);
  NoiseSource b(5);
  const Dataset d1 = generate_dataset(sys, sb, ib, 200, a);
  const Dataset d2 = generate_dataset(sys, sb, ib, 200, b);
  CHECK(d1.x == d2.x);
  CHECK(d1.u == d2.u);
  CHECK(d1.x_plus == d2.x_plus);

  NoiseSource s = NoiseSource::silent(5);
  const Dataset clean = generate_dataset(sys, sb, ib, 200, s);
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    CHECK(sb.contains(clean.x.row(i).transpose()));
    CHECK(ib.contains(clean.u.row(i).transpose()));
    const Vector expect = sys.mean(clean.x.row(i).transpose(), clean.u.row(i).transpose());
    CHECK((clean.x_plus.row(i).transpose() - expect).norm() < 1e-14);
  }
}

TEST_CASE("dataset csv round trip") {
  const ParametricSystem sys = package_system();
  NoiseSource noise(3);
  const Dataset ds = generate_dataset(sys, make_box(vec({-6, -6}), vec({6, 6})),
                                      make_box(vec({-1, -1}), vec({1, 1})), 50, noise);
  const auto path = temp_path("round.csv");
  save_dataset(ds, path);
  const Dataset back = load_dataset(path);
  CHECK(back.x == ds.x);
  CHECK(back.u == ds.u);
  CHECK(back.x_plus == ds.x_plus);
  std::filesystem::remove(path);
}

TEST_CASE("dataset csv errors carry line numbers") {
  const auto path = temp_path("bad.csv");
  {
    std::ofstream out(path);
    out << "x1,u1,xp1\n1,2,3\n4,5\n";
  }
  try {
    load_dataset(path);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
  {
    std::ofstream out(path);
    out << "x1,u1,xp1\n1,abc,3\n";
  }
  CHECK_THROWS_AS(load_dataset(path), ParseError);
  {
    std::ofstream out(path);
    out << "x1,u1,xp1\n";
  }
  CHECK(load_dataset(path).size() == 0);
  std::filesystem::remove(path);
}

TEST_CASE("labelling") {
  const RegionMap map = package_regions();
  CHECK(label(map, vec({4, 0})) == Letter{"P1"});
  CHECK(label(map, vec({0, 0})) == Letter{"P2"});
  CHECK(label(map, vec({-4, -4})) == Letter{"P3"});
  CHECK(label(map, vec({2, 5})).empty());
  // Closed boxes.
  CHECK(label(map, vec({3, 1})) == Letter{"P1"});
  CHECK(mask_to_letter(map, label_mask(map, vec({0.5, -3}))) == Letter{"P2"});
  CHECK_THROWS_AS(make_region_map({{"A", make_box(vec({0}), vec({1}))}, {"A", make_box(vec({2}), vec({3}))}},
                                  make_box(vec({0}), vec({3}))),
                  ArgumentError);
}

TEST_CASE("possible letters cover sampled letters in the ball") {
  const RegionMap map = package_regions();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const std::vector<Vector> centres = {vec({3.05, 0.95}), vec({1.02, 0.0}), vec({-3.0, -3.0}), vec({2.0, 2.0}),
                                       vec({0.0, 3.1})};
  for (const Vector& y : centres) {
    const double eps = 0.15;
    const std::set<Letter> possible = possible_letters(map, y, eps);
    CHECK(possible.count(label(map, y)) == 1);
    for (int i = 0; i < 10000; ++i) {
      Vector d(2);
      do {
        d << unit(rng), unit(rng);
      } while (d.norm() > 1.0);
      CHECK(possible.count(label(map, y + eps * d)) == 1);
    }
  }
  CHECK(possible_letters(map, vec({4, 0}), 0.0) == std::set<Letter>{Letter{"P1"}});
  CHECK_THROWS_AS(possible_letters(map, vec({4, 0}), -0.1), ArgumentError);
}

TEST_CASE("possible letters grow with eps") {
  const RegionMap map = package_regions();
  const Vector y = vec({2.5, 0.0});
  std::set<Letter> prev;
  for (double eps : {0.0, 0.2, 0.6, 1.0, 2.0, 4.0}) {
    const std::set<Letter> now = possible_letters(map, y, eps);
    for (const Letter& l : prev) CHECK(now.count(l) == 1);
    prev = now;
  }
  CHECK(prev.size() > 1);
}

TEST_CASE("ball straddling a region edge") {
  const RegionMap map = package_regions();
  CHECK(possible_letters(map, vec({2.9, 0}), 0.2) == std::set<Letter>{Letter{}, Letter{"P1"}});
  const RegionMap one = make_region_map({{"P", make_box(vec({0, 0}), vec({1, 1}))}},
                                        make_box(vec({-2, -2}), vec({2, 2})));
  CHECK(possible_letters(one, vec({-1.5, 1.5}), 20.0) == std::set<Letter>{Letter{}, Letter{"P"}});
}

TEST_CASE("dataset row format") {
  const auto path = temp_path("row.csv");
  {
    std::ofstream out(path);
    out << "x1,x2,u1,xp1,xp2\n1.0,2.0,0.5,1.5,2.5\n";
  }
  const Dataset ds = load_dataset(path);
  REQUIRE(ds.size() == 1);
  CHECK(ds.x.row(0).transpose() == vec({1.0, 2.0}));
  CHECK(ds.u(0, 0) == 0.5);
  CHECK(ds.x_plus.row(0).transpose() == vec({1.5, 2.5}));
  std::filesystem::remove(path);
}
