#include "stochsyn/refine.hpp"

#include "stochsyn/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace stochsyn {

RefinedController::RefinedController(Policy policy, Grid grid, std::vector<Vector> inputs, Dfa dfa, RegionMap map,
                                     Matrix output_map, Matrix theta_hat)
    : policy_(std::move(policy)),
      grid_(std::move(grid)),
      inputs_(std::move(inputs)),
      dfa_(std::move(dfa)),
      map_(std::move(map)),
      output_map_(std::move(output_map)),
      theta_hat_(std::move(theta_hat)),
      live_(live_states(dfa_)) {
  if (policy_.choice.rows() != static_cast<Eigen::Index>(grid_.size()) ||
      policy_.choice.cols() != static_cast<Eigen::Index>(dfa_.num_states)) {
    throw ArgumentError("controller: policy shape does not match grid x DFA states");
  }
  if (policy_.choice.size() > 0 &&
      (policy_.choice.minCoeff() < 0 || policy_.choice.maxCoeff() >= static_cast<int>(inputs_.size()))) {
    throw ArgumentError("controller: policy refers to an unknown input");
  }
  if (output_map_.cols() != static_cast<Eigen::Index>(grid_.dim())) {
    throw ArgumentError("controller: output map does not match the state dimension");
  }
}

bool RefinedController::doomed() const { return !live_[state()]; }

void RefinedController::observe(const Vector& x) {
  q_ = dfa_step(dfa_, *q_, label(map_, output_map_ * x));
}

void RefinedController::reset(const Vector& x0) {
  q_ = dfa_.q0;
  observe(x0);
}

std::size_t RefinedController::state() const {
  if (!q_) throw StateError("controller used before reset");
  return *q_;
}

ControlOutput RefinedController::select(const Vector& x) const {
  const std::size_t q = state();
  ControlOutput out;
  out.cell = grid_.cell_of(x, &out.clamped);
  out.u = inputs_[policy_(out.cell, q)];
  out.accepted_now = dfa_.is_accepting(q);
  return out;
}

ControlOutput RefinedController::control(const Vector& x) {
  if (!q_) throw StateError("controller used before reset");
  observe(x);
  return select(x);
}

double chebyshev_half_width(double rate, std::size_t runs, double confidence) {
  if (runs == 0) throw ArgumentError("runs must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ArgumentError("confidence must lie in (0, 1)");
  const double var = (rate <= 0.0 || rate >= 1.0) ? 0.25 : rate * (1.0 - rate);
  return std::sqrt(var / (static_cast<double>(runs) * (1.0 - confidence)));
}

double hoeffding_half_width(std::size_t runs, double confidence) {
  if (runs == 0) throw ArgumentError("runs must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ArgumentError("confidence must lie in (0, 1)");
  return std::sqrt(std::log(2.0 / (1.0 - confidence)) / (2.0 * static_cast<double>(runs)));
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

McReport monte_carlo(const ParametricSystem& sys_true, const RefinedController& ctrl, const Vector& x0,
                     std::size_t runs, std::size_t horizon, double confidence, std::uint64_t seed,
                     double certified_bound) {
  if (runs == 0) throw ArgumentError("monte_carlo: runs must be >= 1");
  if (horizon == 0) throw ArgumentError("monte_carlo: horizon must be >= 1");
  if (x0.size() != static_cast<Eigen::Index>(sys_true.n())) throw ArgumentError("monte_carlo: x0 has the wrong size");
  std::vector<char> success(runs, 0);
  std::vector<std::size_t> clamps(runs, 0);
  parallel_for(runs, [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      RefinedController c = ctrl;
      NoiseSource noise(mix_seed(seed, r));
      Vector x = x0;
      c.reset(x);
      ControlOutput out = c.select(x);
      for (std::size_t k = 0; k < horizon && !out.accepted_now && !c.doomed(); ++k) {
        if (out.clamped) ++clamps[r];
        try {
          x = step(sys_true, x, out.u, noise);
        } catch (const EvaluationError&) {
          break;
        }
        out = c.control(x);
      }
      success[r] = out.accepted_now ? 1 : 0;
    }
  });
  McReport rep;
  rep.x0 = x0;
  rep.runs = runs;
  rep.horizon = horizon;
  rep.confidence = confidence;
  rep.certified_bound = certified_bound;
  for (std::size_t r = 0; r < runs; ++r) {
    rep.successes += static_cast<std::size_t>(success[r]);
    rep.clamp_events += clamps[r];
  }
  rep.empirical_rate = static_cast<double>(rep.successes) / static_cast<double>(runs);
  const double cheb = chebyshev_half_width(rep.empirical_rate, runs, confidence);
  const double hoef = hoeffding_half_width(runs, confidence);
  rep.conf_low = std::max(0.0, rep.empirical_rate - cheb);
  rep.conf_high = std::min(1.0, rep.empirical_rate + cheb);
  rep.hoeffding_low = std::max(0.0, rep.empirical_rate - hoef);
  rep.hoeffding_high = std::min(1.0, rep.empirical_rate + hoef);
  rep.flagged = rep.conf_high < certified_bound;
  return rep;
}

nlohmann::json mc_report_json(const McReport& report) {
  nlohmann::json j;
  j["x0"] = std::vector<double>(report.x0.data(), report.x0.data() + report.x0.size());
  j["runs"] = report.runs;
  j["horizon"] = report.horizon;
  j["successes"] = report.successes;
  j["empirical_rate"] = report.empirical_rate;
  j["confidence"] = report.confidence;
  j["conf_low"] = report.conf_low;
  j["conf_high"] = report.conf_high;
  j["hoeffding_low"] = report.hoeffding_low;
  j["hoeffding_high"] = report.hoeffding_high;
  j["certified_bound"] = report.certified_bound;
  j["clamp_events"] = report.clamp_events;
  j["flagged"] = report.flagged;
  return j;
}

}  // namespace stochsyn
