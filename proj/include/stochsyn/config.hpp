#pragma once

#include "stochsyn/common.hpp"
#include "stochsyn/dfa.hpp"
#include "stochsyn/model.hpp"
#include "stochsyn/simrel.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stochsyn {

/// Invalid or inconsistent run configuration (exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct RegionSpec {
  std::string name;
  Vector lo;
  Vector hi;
};

struct SystemConfig {
  std::string features = "linear";
  std::size_t state_dim = 2;
  std::size_t input_dim = 1;
  /// m x n parameters of the data-generating system.
  Matrix theta;
  Matrix sigma;
  Vector state_lo;
  Vector state_hi;
  Vector input_lo;
  Vector input_hi;
  /// Empty means identity.
  Matrix output_map;
};

struct EstimationConfig {
  std::size_t samples = 10000;
  double alpha = 0.1;
  double prior_variance = 10.0;
};

struct AbstractionConfig {
  std::vector<std::size_t> grid;
  std::size_t inputs_per_dim = 5;
  double prune_threshold = 1e-12;
  std::size_t corner_samples = 3;
  bool cache = false;
};

struct SpecConfig {
  /// "package_delivery", "reach_avoid", or a path to a DFA JSON file.
  std::string dfa = "package_delivery";
  std::string safe = "PS";
  std::string target = "PT";
  std::vector<RegionSpec> regions;
  /// Working output box; empty means the image of the state box.
  Vector bounds_lo;
  Vector bounds_hi;
};

struct SynthesisConfig {
  double tol = 1e-6;
  std::size_t max_iter = 2000;
  /// 0 runs to convergence.
  std::size_t horizon = 0;
  DeltaMode delta_mode = DeltaMode::bound;
};

struct SimulateConfig {
  std::size_t runs = 500;
  std::size_t horizon = 60;
  double confidence = 0.9;
  std::vector<Vector> initial_states;
};

struct RunConfig {
  std::string preset;
  std::filesystem::path output_dir = "out";
  std::uint64_t seed = 1;
  SystemConfig system;
  EstimationConfig estimation;
  AbstractionConfig abstraction;
  SpecConfig spec;
  SynthesisConfig synthesis;
  SimulateConfig simulate;
};

/// Built-in case studies: "package_delivery" and "van_der_pol".
RunConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

/// Reads a TOML run config. A top-level `preset` key loads that preset first
/// and the file overrides it field by field.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& toml_text, const std::string& source = "config");

/// Throws ConfigError naming the offending field.
void validate(const RunConfig& cfg);

std::string config_to_toml(const RunConfig& cfg);

FeatureLibrary config_features(const RunConfig& cfg);
Matrix config_output_map(const RunConfig& cfg);
ParametricSystem config_true_system(const RunConfig& cfg);
RegionMap config_region_map(const RunConfig& cfg);
Dfa config_dfa(const RunConfig& cfg);
Box config_state_box(const RunConfig& cfg);
Box config_input_box(const RunConfig& cfg);

}  // namespace stochsyn
