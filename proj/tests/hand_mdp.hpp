// Small hand-specified abstraction shared by the synthesis tests and the
// acceptance runner: four cells on [0, 4], two inputs, target cell 3.
#pragma once

#include "stochsyn/abstraction.hpp"
#include "stochsyn/dfa.hpp"

#include <functional>
#include <vector>

namespace hand {

using namespace stochsyn;

struct HandCase {
  AbstractMdp mdp;
  Dfa dfa;
  RegionMap map;
};

inline Vector scalar(double v) { return Vector::Constant(1, v); }

/// Rows leave {0, 1, 2} with mass >= 0.7, so reachability beyond 12 steps is
/// below 0.3^12 < 1e-6.
inline std::vector<std::vector<std::pair<std::size_t, double>>> hand_rows() {
  // Input-major: rows 0..3 for input a, 4..7 for input b. Missing mass is the sink.
  return {
      {{0, 0.1}, {1, 0.1}, {3, 0.5}},            // a, cell 0
      {{0, 0.1}, {2, 0.2}, {3, 0.6}},            // a, cell 1
      {{1, 0.2}, {2, 0.1}, {3, 0.4}},            // a, cell 2
      {{2, 0.5}, {3, 0.5}},                      // a, cell 3
      {{1, 0.2}, {2, 0.1}, {3, 0.3}},            // b, cell 0
      {{1, 0.1}, {3, 0.8}},                      // b, cell 1
      {{0, 0.1}, {1, 0.1}, {2, 0.1}, {3, 0.65}}, // b, cell 2
      {{3, 1.0}},                                // b, cell 3
  };
}

inline HandCase hand_case() {
  const Grid grid(scalar(0.0), scalar(4.0), {4});
  std::vector<SparseRow> rows;
  for (const auto& entries : hand_rows()) {
    SparseRow r;
    double total = 0.0;
    for (const auto& [j, p] : entries) {
      r.index.push_back(j);
      r.prob.push_back(p);
      total += p;
    }
    r.sink = 1.0 - total;
    rows.push_back(std::move(r));
  }
  Matrix outputs(4, 1);
  outputs << 0.5, 1.5, 2.5, 3.5;
  AbstractMdp mdp(grid, {scalar(-1.0), scalar(1.0)}, outputs, std::move(rows));
  RegionMap map = make_region_map({{"PS", make_box(scalar(-100.0), scalar(100.0))},
                                   {"PT", make_box(scalar(3.0), scalar(4.0))}},
                                  make_box(scalar(0.0), scalar(4.0)));
  return HandCase{std::move(mdp), builtin_reach_avoid("PS", "PT"), std::move(map)};
}

/// Probability of entering cell 3 within `horizon` steps from `start` under a
/// stationary policy, by explicit enumeration of every path.
inline double enumerate_reach(std::size_t start, const std::vector<int>& policy, int horizon) {
  const auto rows = hand_rows();
  double total = 0.0;
  std::function<void(std::size_t, double, int)> walk = [&](std::size_t cell, double prob, int left) {
    if (left == 0) return;
    for (const auto& [j, p] : rows[static_cast<std::size_t>(policy[cell]) * 4 + cell]) {
      if (j == 3) {
        total += prob * p;
      } else {
        walk(j, prob * p, left - 1);
      }
    }
  };
  walk(start, 1.0, horizon);
  return total;
}

/// Best reach probability over the eight stationary deterministic policies.
inline double enumerate_best(std::size_t start, int horizon) {
  double best = 0.0;
  for (int code = 0; code < 8; ++code) {
    const std::vector<int> policy = {code & 1, (code >> 1) & 1, (code >> 2) & 1, 0};
    best = std::max(best, enumerate_reach(start, policy, horizon));
  }
  return best;
}

}  // namespace hand
