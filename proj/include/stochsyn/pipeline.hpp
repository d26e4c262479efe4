#pragma once

#include "stochsyn/abstraction.hpp"
#include "stochsyn/config.hpp"
#include "stochsyn/estimation.hpp"
#include "stochsyn/refine.hpp"
#include "stochsyn/synthesis.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stochsyn {

enum class Stage { generate, estimate, abstract, synthesize, simulate };

const char* stage_name(Stage stage);

/// Failure inside a pipeline stage; the message is prefixed with the stage.
class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what)
      : Error(std::string("[") + stage_name(stage) + "] " + what), stage_(stage) {}
  Stage stage() const { return stage_; }

 private:
  Stage stage_;
};

/// File names inside the output directory.
namespace artifact {
inline constexpr const char* dataset = "dataset.csv";
inline constexpr const char* posterior = "posterior.json";
inline constexpr const char* delta = "delta.csv";
inline constexpr const char* delta_parametric = "delta_parametric.csv";
inline constexpr const char* delta_discretization = "delta_discretization.csv";
inline constexpr const char* abstraction = "abstraction.json";
inline constexpr const char* transitions = "transitions.bin";
inline constexpr const char* value_policy = "value_policy.csv";
inline constexpr const char* summary = "summary.json";
inline constexpr const char* bounds = "bounds.csv";
inline constexpr const char* heatmap = "heatmap.ppm";
inline constexpr const char* mc_report = "mc_report.json";
}  // namespace artifact

/// Exclusive ownership of an output directory through a `.lock` file.
class OutputLock {
 public:
  explicit OutputLock(const std::filesystem::path& dir);
  ~OutputLock();
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Sub-seed of a stage: the root seed mixed with a hash of the stage name.
std::uint64_t stage_seed(std::uint64_t root, const std::string& stage);

/// Runs one stage, reading its predecessors' artifacts from the output
/// directory. Missing artifacts raise StageError unless `chain` is set, in
/// which case the missing predecessors run first.
void run_stage(const RunConfig& cfg, Stage stage, bool chain = false);
/// All stages in order.
void run_pipeline(const RunConfig& cfg);

/// Nominal abstraction for a posterior, read from the transition cache when
/// enabled and valid.
AbstractMdp nominal_abstraction(const RunConfig& cfg, const Posterior& post);

/// Composed relation: eps = eps2 (eps1 = 0) and delta = delta1 + delta2.
struct RelationTables {
  double eps1 = 0.0;
  double eps2 = 0.0;
  DeltaTable delta1;
  DeltaTable delta2;
  SimRelation composed;
};
RelationTables relation_tables(const RunConfig& cfg, const Posterior& post, const AbstractMdp& mdp);

/// Plain PPM (P6) of per-cell values in [0, 1] for 1-D and 2-D grids.
void write_heatmap(const Grid& grid, const Vector& values, const std::filesystem::path& path);

struct CouplingVerification {
  std::size_t points = 0;
  double expected_mass = 0.0;
  double coupled_mass = 0.0;
  /// Mass of N(0, sigma) outside the discretisation box.
  double truncated_tail = 0.0;
  double def3_violation = 0.0;
  double completion_error = 0.0;
  bool mass_ok = false;
  bool def3_ok = false;
  bool completion_ok = false;
  /// Dense construction agrees with the structured one (small grids only).
  bool dense_checked = false;
  bool dense_ok = true;

  bool ok() const { return mass_ok && def3_ok && completion_ok && dense_ok; }
};

/// Couples N(0, diag(stddev^2)) with its gamma-shifted copy on a uniform grid
/// of the given step covering +-8 sigma, then checks the coupled mass, the
/// sub-coupling conditions and the completed marginals.
CouplingVerification verify_coupling(const Vector& gamma, const Vector& stddev, double step,
                                     double mass_tol = 1e-3);

}  // namespace stochsyn
