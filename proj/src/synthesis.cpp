#include "stochsyn/synthesis.hpp"

#include "stochsyn/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>

namespace stochsyn {

RobustProduct::RobustProduct(const AbstractMdp& mdp, const Dfa& dfa, const RegionMap& map, double eps)
    : mdp_(&mdp), map_(&map), table_(dfa, map), eps_(eps) {
  if (eps < 0.0) throw ArgumentError("eps must be nonnegative");
  if (mdp.outputs().cols() != map.bounds.dim()) {
    throw ArgumentError("abstraction outputs do not match the region map dimension");
  }
  const std::size_t states = table_.num_states();
  successors_.resize(mdp.num_cells() * states);
  parallel_for(mdp.num_cells(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const Vector y = mdp.outputs().row(static_cast<Eigen::Index>(c)).transpose();
      const auto masks = possible_masks(map, y, eps);
      for (std::size_t q = 0; q < states; ++q) {
        auto& succ = successors_[c * states + q];
        for (LetterMask m : masks) succ.push_back(table_.next(q, m));
        std::sort(succ.begin(), succ.end());
        succ.erase(std::unique(succ.begin(), succ.end()), succ.end());
      }
    }
  });
}

std::vector<std::size_t> RobustProduct::successors_at(std::size_t q, const Vector& y) const {
  std::vector<std::size_t> succ;
  for (LetterMask m : possible_masks(*map_, y, eps_)) succ.push_back(table_.next(q, m));
  std::sort(succ.begin(), succ.end());
  succ.erase(std::unique(succ.begin(), succ.end()), succ.end());
  return succ;
}

namespace {

double truncate(double t) { return std::min(1.0, std::max(0.0, t)); }

/// min over robust successors of max{1_F(q+), V(j, q+)}, column q contiguous.
Matrix worst_successor_values(const RobustProduct& product, const ProductValue& v) {
  const std::size_t cells = product.mdp().num_cells();
  const std::size_t states = product.num_states();
  Matrix w(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(states));
  for (std::size_t q = 0; q < states; ++q) {
    for (std::size_t j = 0; j < cells; ++j) {
      double worst = 1.0;
      for (std::size_t qn : product.successors(j, q)) {
        worst = std::min(worst, product.table().accepting(qn) ? 1.0 : v(j, qn));
      }
      w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(q)) = worst;
    }
  }
  return w;
}

}  // namespace

std::pair<ProductValue, Policy> robust_bellman(const RobustProduct& product, const DeltaTable& delta,
                                               const ProductValue& v, BellmanMode mode, const Policy* fixed) {
  const AbstractMdp& mdp = product.mdp();
  const std::size_t cells = mdp.num_cells();
  const std::size_t inputs = mdp.num_inputs();
  const std::size_t states = product.num_states();
  if (v.num_cells() != cells || v.num_states() != states) throw ArgumentError("value table has the wrong shape");
  if (delta.rows() != static_cast<Eigen::Index>(cells) || delta.cols() != static_cast<Eigen::Index>(inputs)) {
    throw ArgumentError("delta table must be cells x inputs");
  }
  if (mode == BellmanMode::fixed_policy) {
    if (!fixed || fixed->choice.rows() != static_cast<Eigen::Index>(cells) ||
        fixed->choice.cols() != static_cast<Eigen::Index>(states)) {
      throw ArgumentError("fixed-policy mode needs a cells x states policy");
    }
  }
  const Matrix w = worst_successor_values(product, v);
  ProductValue next = ProductValue::zeros(cells, states);
  Policy policy{IndexMatrix::Zero(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(states))};

  parallel_for(cells, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const auto ci = static_cast<Eigen::Index>(c);
      for (std::size_t q = 0; q < states; ++q) {
        const auto qi = static_cast<Eigen::Index>(q);
        const double* col = w.col(qi).data();
        std::size_t best_u = 0;
        double best_raw = -std::numeric_limits<double>::infinity();
        if (mode == BellmanMode::fixed_policy) {
          best_u = (*fixed)(c, q);
          if (best_u >= inputs) throw ArgumentError("policy refers to an unknown input");
          best_raw = mdp.expectation(best_u, c, col) - delta(ci, static_cast<Eigen::Index>(best_u));
        } else {
          for (std::size_t u = 0; u < inputs; ++u) {
            const double raw = mdp.expectation(u, c, col) - delta(ci, static_cast<Eigen::Index>(u));
            if (raw > best_raw) {
              best_raw = raw;
              best_u = u;
            }
          }
        }
        next.values(ci, qi) = truncate(best_raw);
        policy.choice(ci, qi) = static_cast<int>(best_u);
      }
    }
  });
  return {std::move(next), std::move(policy)};
}

std::pair<ProductValue, Policy> robust_bellman(const AbstractMdp& mdp, const Dfa& dfa, const RegionMap& map,
                                               double eps, const DeltaTable& delta, const ProductValue& v,
                                               BellmanMode mode, const Policy* fixed) {
  const RobustProduct product(mdp, dfa, map, eps);
  return robust_bellman(product, delta, v, mode, fixed);
}

DeltaTable constant_delta(const AbstractMdp& mdp, double delta) {
  if (!(delta >= 0.0 && delta <= 1.0)) throw ArgumentError("delta must lie in [0, 1]");
  return DeltaTable::Constant(static_cast<Eigen::Index>(mdp.num_cells()),
                              static_cast<Eigen::Index>(mdp.num_inputs()), delta);
}

SynthesisResult value_iteration(const RobustProduct& product, const DeltaTable& delta,
                                const SynthesisOptions& options) {
  if (!options.horizon && !(options.tol > 0.0)) throw ArgumentError("tol must be positive");
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  if ((delta.array() < 0.0).any() || (delta.array() > 1.0).any()) {
    throw ArgumentError("delta entries must lie in [0, 1]");
  }
  const std::size_t cells = product.mdp().num_cells();
  const std::size_t states = product.num_states();
  SynthesisResult result;
  result.eps = product.eps();
  result.alpha = options.alpha;
  result.value = ProductValue::zeros(cells, states);
  result.policy.choice = IndexMatrix::Zero(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(states));

  const std::size_t sweeps = options.horizon ? *options.horizon : options.max_iter;
  for (std::size_t k = 0; k < sweeps; ++k) {
    auto [next, policy] = robust_bellman(product, delta, result.value);
    const Matrix diff = next.values - result.value.values;
    if (diff.minCoeff() < -1e-12) {
      throw InvariantError("value iteration is not monotone (decrease of " + std::to_string(-diff.minCoeff()) + ")");
    }
    result.residual = diff.cwiseAbs().maxCoeff();
    result.value = std::move(next);
    result.policy = policy;
    if (options.horizon) result.policies.push_back(std::move(policy));
    result.iterations = k + 1;
    if (!options.horizon && result.residual < options.tol) {
      result.converged = true;
      break;
    }
  }
  if (options.horizon) result.converged = true;

  result.satisfaction_bound_per_cell.resize(static_cast<Eigen::Index>(cells));
  result.final_bound_per_cell.resize(static_cast<Eigen::Index>(cells));
  for (std::size_t c = 0; c < cells; ++c) {
    const double s = robust_satisfaction(result, product, c);
    result.satisfaction_bound_per_cell[static_cast<Eigen::Index>(c)] = s;
    result.final_bound_per_cell[static_cast<Eigen::Index>(c)] = final_bound(s, options.alpha);
  }
  return result;
}

SynthesisResult value_iteration(const AbstractMdp& mdp, const Dfa& dfa, const RegionMap& map, double eps,
                                const DeltaTable& delta, const SynthesisOptions& options) {
  const RobustProduct product(mdp, dfa, map, eps);
  return value_iteration(product, delta, options);
}

double robust_satisfaction(const SynthesisResult& result, const RobustProduct& product, std::size_t x0_cell) {
  if (x0_cell >= product.mdp().num_cells()) throw ArgumentError("initial cell out of range");
  double s = 1.0;
  for (std::size_t q : product.successors(x0_cell, product.table().initial())) {
    s = std::min(s, product.table().accepting(q) ? 1.0 : result.value(x0_cell, q));
  }
  return s;
}

double final_bound(double s_star, double alpha) {
  if (!(s_star >= 0.0 && s_star <= 1.0)) throw ArgumentError("s_star must lie in [0, 1]");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ArgumentError("alpha must lie in (0, 1)");
  return s_star * (1.0 - alpha);
}

namespace {

std::string number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

void save_value_policy(const SynthesisResult& result, const AbstractMdp& mdp, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  const std::size_t dim = mdp.grid().dim();
  out << "cell_index";
  for (std::size_t d = 0; d < dim; ++d) out << ",c" << d + 1;
  out << ",q,value,input_index\n";
  for (std::size_t c = 0; c < mdp.num_cells(); ++c) {
    const Vector center = mdp.grid().center(c);
    for (std::size_t q = 0; q < result.value.num_states(); ++q) {
      out << c;
      for (Eigen::Index d = 0; d < center.size(); ++d) out << ',' << number(center[d]);
      out << ',' << q << ',' << number(result.value(c, q)) << ',' << result.policy(c, q) << '\n';
    }
  }
}

nlohmann::json synthesis_summary(const SynthesisResult& result) {
  nlohmann::json j;
  j["eps"] = result.eps;
  j["alpha"] = result.alpha;
  const bool any = result.satisfaction_bound_per_cell.size() > 0;
  j["s_star_max"] = any ? result.satisfaction_bound_per_cell.maxCoeff() : 0.0;
  j["s_star_min"] = any ? result.satisfaction_bound_per_cell.minCoeff() : 0.0;
  j["final_bound_max"] = any ? result.final_bound_per_cell.maxCoeff() : 0.0;
  j["iterations"] = result.iterations;
  j["residual"] = result.residual;
  j["converged"] = result.converged;
  return j;
}

}  // namespace stochsyn
