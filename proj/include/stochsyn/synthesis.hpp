#pragma once

#include "stochsyn/abstraction.hpp"
#include "stochsyn/dfa.hpp"
#include "stochsyn/model.hpp"
#include "stochsyn/simrel.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <vector>

namespace stochsyn {

/// Values over (cells + sink) x DFA states; the last row is the sink and
/// stays 0.
struct ProductValue {
  Matrix values;

  std::size_t num_cells() const { return static_cast<std::size_t>(values.rows()) - 1; }
  std::size_t num_states() const { return static_cast<std::size_t>(values.cols()); }
  double operator()(std::size_t cell, std::size_t q) const {
    return values(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(q));
  }
  static ProductValue zeros(std::size_t cells, std::size_t states) {
    return ProductValue{Matrix::Zero(static_cast<Eigen::Index>(cells) + 1, static_cast<Eigen::Index>(states))};
  }
};

/// Input index per (cell, DFA state).
struct Policy {
  IndexMatrix choice;

  std::size_t operator()(std::size_t cell, std::size_t q) const {
    return static_cast<std::size_t>(choice(static_cast<Eigen::Index>(cell), static_cast<Eigen::Index>(q)));
  }
};

/// Product of an abstraction with a DFA under an output deviation eps: the
/// robust DFA successors of every (target cell, state) pair, computed from
/// the cell's representative output.
class RobustProduct {
 public:
  RobustProduct(const AbstractMdp& mdp, const Dfa& dfa, const RegionMap& map, double eps);

  const AbstractMdp& mdp() const { return *mdp_; }
  const DfaTable& table() const { return table_; }
  const RegionMap& map() const { return *map_; }
  double eps() const { return eps_; }
  std::size_t num_states() const { return table_.num_states(); }
  const std::vector<std::size_t>& successors(std::size_t cell, std::size_t q) const {
    return successors_[cell * table_.num_states() + q];
  }
  /// tau_eps(q, y) for an arbitrary output point.
  std::vector<std::size_t> successors_at(std::size_t q, const Vector& y) const;

 private:
  const AbstractMdp* mdp_;
  const RegionMap* map_;
  DfaTable table_;
  double eps_;
  std::vector<std::vector<std::size_t>> successors_;
};

enum class BellmanMode { optimize, fixed_policy };

/// One application of the robust operator. In optimize mode the returned
/// policy is the argmax of score(u) - delta(cell, u) before truncation, ties
/// to the lowest input index. `fixed` must be given in fixed-policy mode.
std::pair<ProductValue, Policy> robust_bellman(const RobustProduct& product, const DeltaTable& delta,
                                               const ProductValue& v, BellmanMode mode = BellmanMode::optimize,
                                               const Policy* fixed = nullptr);

std::pair<ProductValue, Policy> robust_bellman(const AbstractMdp& mdp, const Dfa& dfa, const RegionMap& map,
                                               double eps, const DeltaTable& delta, const ProductValue& v,
                                               BellmanMode mode = BellmanMode::optimize,
                                               const Policy* fixed = nullptr);

/// delta table filled with one value.
DeltaTable constant_delta(const AbstractMdp& mdp, double delta);

struct SynthesisOptions {
  double tol = 1e-6;
  std::size_t max_iter = 2000;
  /// Finite-horizon mode: exactly this many sweeps, one policy per sweep.
  std::optional<std::size_t> horizon;
  double alpha = 0.1;
};

struct SynthesisResult {
  ProductValue value;
  Policy policy;
  /// Horizon mode only: policies[k] is applied with k steps remaining + 1.
  std::vector<Policy> policies;
  double eps = 0.0;
  double alpha = 0.1;
  Vector satisfaction_bound_per_cell;
  Vector final_bound_per_cell;
  std::size_t iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

SynthesisResult value_iteration(const RobustProduct& product, const DeltaTable& delta,
                                const SynthesisOptions& options = {});
SynthesisResult value_iteration(const AbstractMdp& mdp, const Dfa& dfa, const RegionMap& map, double eps,
                                const DeltaTable& delta, const SynthesisOptions& options = {});

/// S* = min over q+ in tau_eps(q0, y(x0)) of max{1_F(q+), V(x0, q+)}.
double robust_satisfaction(const SynthesisResult& result, const RobustProduct& product, std::size_t x0_cell);

/// s_star * (1 - alpha).
double final_bound(double s_star, double alpha);

/// Columns cell_index, c1..cn (centre), q, value, input_index.
void save_value_policy(const SynthesisResult& result, const AbstractMdp& mdp, const std::filesystem::path& path);
nlohmann::json synthesis_summary(const SynthesisResult& result);

}  // namespace stochsyn
