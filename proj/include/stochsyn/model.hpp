#pragma once

#include "stochsyn/common.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace stochsyn {

/// Basis functions f(x, u) in which the dynamics are linear.
struct FeatureLibrary {
  std::size_t m = 0;
  std::function<Vector(const Vector& x, const Vector& u)> eval;
  std::vector<std::string> names;
  /// Preset identifier, empty for user-defined libraries.
  std::string preset;
};

/// Evaluates the library and checks the result has m finite entries.
Vector evaluate(const FeatureLibrary& lib, const Vector& x, const Vector& u);

/// f(x, u) = [x; u].
FeatureLibrary linear_features(std::size_t n, std::size_t p);
/// f(x, u) = [x; u; 1].
FeatureLibrary affine_features(std::size_t n, std::size_t p);
/// f(x, u) = [x1, x2, x1^2 x2, u] for the discretised Van der Pol oscillator.
FeatureLibrary van_der_pol_features();
/// Looks a preset up by name ("linear", "affine", "van_der_pol").
FeatureLibrary features_by_name(const std::string& name, std::size_t n, std::size_t p);

/// Standard normal draws plus uniform sampling. A silent source returns
/// zero noise but still samples uniformly.
class NoiseSource {
 public:
  explicit NoiseSource(std::uint64_t seed, bool silent = false) : engine_(seed), silent_(silent) {}
  static NoiseSource silent(std::uint64_t seed = 0) { return NoiseSource(seed, true); }

  double standard_normal() { return silent_ ? 0.0 : normal_(engine_); }
  Vector standard_normal(Eigen::Index n);
  Vector uniform(const Box& box);
  bool is_silent() const { return silent_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  bool silent_;
};

/// x+ = theta^T f(x, u) + w,  w ~ N(0, sigma),  y = output_map * x.
class ParametricSystem {
 public:
  ParametricSystem(std::size_t n, std::size_t p, FeatureLibrary lib, Matrix theta, Matrix sigma,
                   Matrix output_map);
  /// Identity output map.
  ParametricSystem(std::size_t n, std::size_t p, FeatureLibrary lib, Matrix theta, Matrix sigma);

  std::size_t n() const { return n_; }
  std::size_t p() const { return p_; }
  std::size_t m() const { return lib_.m; }
  const FeatureLibrary& lib() const { return lib_; }
  const Matrix& theta() const { return theta_; }
  const Matrix& sigma() const { return sigma_; }
  const Matrix& output_map() const { return output_map_; }
  /// Lower Cholesky factor of sigma.
  const Matrix& noise_factor() const { return noise_factor_; }

  Vector mean(const Vector& x, const Vector& u) const;
  Vector output(const Vector& x) const { return output_map_ * x; }
  ParametricSystem with_theta(Matrix theta) const;

 private:
  std::size_t n_;
  std::size_t p_;
  FeatureLibrary lib_;
  Matrix theta_;
  Matrix sigma_;
  Matrix output_map_;
  Matrix noise_factor_;
};

/// Throws ArgumentError unless sigma is symmetric (1e-12) with positive eigenvalues.
void check_covariance(const Matrix& sigma, const std::string& what);

Vector step(const ParametricSystem& sys, const Vector& x, const Vector& u, NoiseSource& noise);

/// Samples as rows: x (N x n), u (N x p), x_plus (N x n).
struct Dataset {
  Matrix x;
  Matrix u;
  Matrix x_plus;

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index state_dim() const { return x.cols(); }
  Eigen::Index input_dim() const { return u.cols(); }
};

Dataset generate_dataset(const ParametricSystem& sys, const Box& state_box, const Box& input_box,
                         std::size_t n_samples, NoiseSource& noise);

void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

// --- labelling -------------------------------------------------------------

using Letter = std::set<std::string>;
/// Bit i set iff region i of the map holds.
using LetterMask = std::uint32_t;

struct Region {
  std::string name;
  Box box;
};

struct RegionMap {
  std::vector<Region> regions;
  Box bounds;
};

/// Validates unique names and box dimensions.
RegionMap make_region_map(std::vector<Region> regions, Box bounds);

Letter label(const RegionMap& map, const Vector& y);
LetterMask label_mask(const RegionMap& map, const Vector& y);
Letter mask_to_letter(const RegionMap& map, LetterMask mask);

/// Every letter reachable inside the closed Euclidean eps-ball around y.
/// Propositions are decided independently, so the result may contain letters
/// that no single point of the ball realises.
std::set<Letter> possible_letters(const RegionMap& map, const Vector& y, double eps);
std::vector<LetterMask> possible_masks(const RegionMap& map, const Vector& y, double eps);

}  // namespace stochsyn
