#pragma once

#include "stochsyn/common.hpp"
#include "stochsyn/model.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace stochsyn {

/// Conjunction of literals over atomic propositions; empty means `true`.
struct Guard {
  std::set<std::string> positive;
  std::set<std::string> negative;

  bool holds(const Letter& letter) const;
  /// True when some letter satisfies both guards.
  bool overlaps(const Guard& other) const;
};

/// Parses "true", "1", or literals joined by '&' / "&&", each optionally
/// negated with '!' or '~'.
Guard parse_guard(const std::string& text);

struct DfaEdge {
  std::size_t from = 0;
  Guard guard;
  std::size_t to = 0;
};

/// Deterministic finite automaton over letters (sets of proposition names).
struct Dfa {
  std::size_t num_states = 0;
  std::size_t q0 = 0;
  std::vector<bool> accepting;
  std::vector<DfaEdge> edges;
  std::vector<std::string> state_names;
  bool default_self_loop = false;

  bool is_accepting(std::size_t q) const { return accepting.at(q); }
};

/// Checks indices and that guards leaving one state are pairwise disjoint.
Dfa make_dfa(std::size_t num_states, std::size_t q0, const std::vector<std::size_t>& accepting,
             std::vector<DfaEdge> edges, bool default_self_loop = false,
             std::vector<std::string> state_names = {});

std::size_t dfa_step(const Dfa& dfa, std::size_t q, const Letter& letter);

/// Co-safe acceptance: true once any prefix ends in an accepting state.
bool accepts(const Dfa& dfa, const std::vector<Letter>& word);

/// States from which some accepting state is reachable.
std::vector<bool> live_states(const Dfa& dfa);

std::set<std::size_t> robust_successors(const Dfa& dfa, const RegionMap& map, std::size_t q,
                                        const Vector& y, double eps);

/// Package delivery: q0 -P1-> q1 -P3 & !P2-> qF, q1 -P2-> q0.
Dfa builtin_package_delivery();
/// safe U target, with an absorbing dead state for leaving `safe` early.
Dfa builtin_reach_avoid(const std::string& safe, const std::string& target);

/// JSON with `states` (count or list of names), `initial`, `accepting`, and
/// `edges` [{from, guard, to}]; states may be referenced by index or name.
Dfa load_dfa(const std::filesystem::path& path);

/// Transition table of a DFA bound to a region map: entry [q * 2^R + mask]
/// for every letter mask over the map's R regions.
class DfaTable {
 public:
  DfaTable(const Dfa& dfa, const RegionMap& map);

  std::size_t num_states() const { return num_states_; }
  std::size_t next(std::size_t q, LetterMask mask) const { return table_[q * masks_ + mask]; }
  bool accepting(std::size_t q) const { return accepting_[q]; }
  std::size_t initial() const { return q0_; }

 private:
  std::size_t num_states_;
  std::size_t masks_;
  std::size_t q0_;
  std::vector<std::size_t> table_;
  std::vector<bool> accepting_;
};

}  // namespace stochsyn
