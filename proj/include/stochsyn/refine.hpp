#pragma once

#include "stochsyn/abstraction.hpp"
#include "stochsyn/dfa.hpp"
#include "stochsyn/model.hpp"
#include "stochsyn/synthesis.hpp"

#include <json.hpp>

#include <optional>
#include <vector>

namespace stochsyn {

struct ControlOutput {
  Vector u;
  bool accepted_now = false;
  /// The state lay outside the grid and was snapped to a boundary cell.
  bool clamped = false;
  std::size_t cell = 0;
};

/// Concrete controller: tracks the DFA state on observed outputs and plays
/// the abstract policy of the nearest grid cell (interface u = u_hat).
class RefinedController {
 public:
  RefinedController(Policy policy, Grid grid, std::vector<Vector> inputs, Dfa dfa, RegionMap map,
                    Matrix output_map, Matrix theta_hat);

  /// q = tau(q0, L(h(x0))).
  void reset(const Vector& x0);
  /// Updates q with the label of h(x), then selects the input.
  ControlOutput control(const Vector& x);
  /// Selects the input for x without updating q.
  ControlOutput select(const Vector& x) const;

  std::size_t state() const;
  /// No accepting DFA state is reachable from the current one.
  bool doomed() const;
  bool initialized() const { return q_.has_value(); }
  const Matrix& theta_hat() const { return theta_hat_; }
  const Dfa& dfa() const { return dfa_; }

 private:
  void observe(const Vector& x);

  Policy policy_;
  Grid grid_;
  std::vector<Vector> inputs_;
  Dfa dfa_;
  RegionMap map_;
  Matrix output_map_;
  Matrix theta_hat_;
  std::vector<bool> live_;
  std::optional<std::size_t> q_;
};

struct McReport {
  Vector x0;
  std::size_t runs = 0;
  std::size_t successes = 0;
  std::size_t horizon = 0;
  double confidence = 0.9;
  double empirical_rate = 0.0;
  double conf_low = 0.0;
  double conf_high = 0.0;
  double hoeffding_low = 0.0;
  double hoeffding_high = 0.0;
  double certified_bound = 0.0;
  std::size_t clamp_events = 0;
  /// conf_high below the certified bound in this experiment.
  bool flagged = false;
};

/// Chebyshev half-width sqrt(p(1 - p) / (runs (1 - confidence))), using the
/// variance bound 1/4 when p is 0 or 1.
double chebyshev_half_width(double rate, std::size_t runs, double confidence);
double hoeffding_half_width(std::size_t runs, double confidence);

/// Closed-loop simulation of sys_true under ctrl. Run i draws its noise from
/// a stream seeded by mixing `seed` with i, so the aggregate does not depend
/// on the worker count.
McReport monte_carlo(const ParametricSystem& sys_true, const RefinedController& ctrl, const Vector& x0,
                     std::size_t runs, std::size_t horizon, double confidence, std::uint64_t seed,
                     double certified_bound = 0.0);

/// SplitMix64 finaliser of (a, b), used to derive independent seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

nlohmann::json mc_report_json(const McReport& report);

}  // namespace stochsyn
