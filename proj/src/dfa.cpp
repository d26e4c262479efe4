#include "stochsyn/dfa.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

namespace stochsyn {

bool Guard::holds(const Letter& letter) const {
  for (const auto& p : positive) {
    if (!letter.count(p)) return false;
  }
  for (const auto& p : negative) {
    if (letter.count(p)) return false;
  }
  return true;
}

bool Guard::overlaps(const Guard& other) const {
  for (const auto& p : positive) {
    if (other.negative.count(p)) return false;
  }
  for (const auto& p : negative) {
    if (other.positive.count(p)) return false;
  }
  return true;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isalnum(c) || c == '_'; });
}

}  // namespace

Guard parse_guard(const std::string& text) {
  Guard g;
  const std::string body = trim(text);
  if (body == "true" || body == "1") return g;
  if (body.empty()) throw ParseError("empty guard");
  std::size_t pos = 0;
  while (pos <= body.size()) {
    std::size_t amp = body.find('&', pos);
    if (amp == std::string::npos) amp = body.size();
    std::string lit = trim(body.substr(pos, amp - pos));
    bool negated = false;
    while (!lit.empty() && (lit[0] == '!' || lit[0] == '~')) {
      negated = !negated;
      lit = trim(lit.substr(1));
    }
    if (!valid_name(lit)) throw ParseError("malformed guard '" + text + "'");
    (negated ? g.negative : g.positive).insert(lit);
    if (amp >= body.size()) break;
    pos = amp + 1;
    if (pos < body.size() && body[pos] == '&') ++pos;
  }
  for (const auto& p : g.positive) {
    if (g.negative.count(p)) throw ParseError("guard '" + text + "' is unsatisfiable");
  }
  return g;
}

Dfa make_dfa(std::size_t num_states, std::size_t q0, const std::vector<std::size_t>& accepting,
             std::vector<DfaEdge> edges, bool default_self_loop, std::vector<std::string> state_names) {
  if (num_states == 0) throw ArgumentError("DFA needs at least one state");
  if (q0 >= num_states) throw ArgumentError("DFA initial state out of range");
  Dfa dfa;
  dfa.num_states = num_states;
  dfa.q0 = q0;
  dfa.accepting.assign(num_states, false);
  for (auto q : accepting) {
    if (q >= num_states) throw ArgumentError("DFA accepting state out of range");
    dfa.accepting[q] = true;
  }
  for (const auto& e : edges) {
    if (e.from >= num_states || e.to >= num_states) throw ArgumentError("DFA edge refers to an unknown state");
  }
  for (std::size_t i = 0; i < edges.size(); ++i) {
    for (std::size_t j = i + 1; j < edges.size(); ++j) {
      if (edges[i].from == edges[j].from && edges[i].to != edges[j].to &&
          edges[i].guard.overlaps(edges[j].guard)) {
        throw ParseError("DFA is not deterministic: overlapping guards leave state " +
                         std::to_string(edges[i].from));
      }
    }
  }
  if (state_names.empty()) {
    for (std::size_t q = 0; q < num_states; ++q) state_names.push_back("q" + std::to_string(q));
  }
  if (state_names.size() != num_states) throw ArgumentError("DFA state names do not match the state count");
  dfa.edges = std::move(edges);
  dfa.state_names = std::move(state_names);
  dfa.default_self_loop = default_self_loop;
  return dfa;
}

std::size_t dfa_step(const Dfa& dfa, std::size_t q, const Letter& letter) {
  if (q >= dfa.num_states) throw ArgumentError("DFA state out of range");
  for (const auto& e : dfa.edges) {
    if (e.from == q && e.guard.holds(letter)) return e.to;
  }
  if (dfa.default_self_loop) return q;
  std::string word;
  for (const auto& p : letter) word += (word.empty() ? "" : ",") + p;
  throw MissingTransitionError("no transition from state " + dfa.state_names[q] + " on letter {" + word + "}");
}

bool accepts(const Dfa& dfa, const std::vector<Letter>& word) {
  std::size_t q = dfa.q0;
  if (dfa.is_accepting(q)) return true;
  for (const auto& letter : word) {
    q = dfa_step(dfa, q, letter);
    if (dfa.is_accepting(q)) return true;
  }
  return false;
}

std::vector<bool> live_states(const Dfa& dfa) {
  std::vector<bool> live = dfa.accepting;
  for (bool changed = true; changed;) {
    changed = false;
    for (const DfaEdge& e : dfa.edges) {
      if (live[e.to] && !live[e.from] && e.guard.overlaps(e.guard)) {
        live[e.from] = true;
        changed = true;
      }
    }
  }
  return live;
}

std::set<std::size_t> robust_successors(const Dfa& dfa, const RegionMap& map, std::size_t q,
                                        const Vector& y, double eps) {
  std::set<std::size_t> out;
  for (const auto& letter : possible_letters(map, y, eps)) out.insert(dfa_step(dfa, q, letter));
  return out;
}

Dfa builtin_package_delivery() {
  std::vector<DfaEdge> edges = {
      {0, parse_guard("!P1"), 0},
      {0, parse_guard("P1 & !P3"), 1},
      {0, parse_guard("P1 & P3"), 2},
      {1, parse_guard("!P2 & !P3"), 1},
      {1, parse_guard("P2"), 0},
      {1, parse_guard("P3 & !P2"), 2},
      {2, parse_guard("true"), 2},
  };
  return make_dfa(3, 0, {2}, std::move(edges), false, {"q0", "q1", "qF"});
}

Dfa builtin_reach_avoid(const std::string& safe, const std::string& target) {
  if (!valid_name(safe) || !valid_name(target) || safe == target) {
    throw ArgumentError("reach-avoid needs two distinct proposition names");
  }
  std::vector<DfaEdge> edges = {
      {0, parse_guard(target), 1},
      {0, parse_guard(safe + " & !" + target), 0},
      {0, parse_guard("!" + safe + " & !" + target), 2},
      {1, parse_guard("true"), 1},
      {2, parse_guard("true"), 2},
  };
  return make_dfa(3, 0, {1}, std::move(edges), false, {"q0", "qF", "dead"});
}

Dfa load_dfa(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open DFA file '" + path.string() + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    std::vector<std::string> names;
    std::size_t count = 0;
    const auto& states = j.at("states");
    if (states.is_number_unsigned()) {
      count = states.get<std::size_t>();
    } else {
      names = states.get<std::vector<std::string>>();
      count = names.size();
    }
    std::map<std::string, std::size_t> by_name;
    for (std::size_t q = 0; q < names.size(); ++q) by_name[names[q]] = q;
    auto state_ref = [&](const nlohmann::json& v) -> std::size_t {
      if (v.is_number_unsigned()) return v.get<std::size_t>();
      const auto it = by_name.find(v.get<std::string>());
      if (it == by_name.end()) throw ParseError("DFA file: unknown state '" + v.get<std::string>() + "'");
      return it->second;
    };
    std::vector<std::size_t> accepting;
    for (const auto& a : j.at("accepting")) accepting.push_back(state_ref(a));
    std::vector<DfaEdge> edges;
    for (const auto& e : j.at("edges")) {
      edges.push_back({state_ref(e.at("from")), parse_guard(e.at("guard").get<std::string>()), state_ref(e.at("to"))});
    }
    const bool self_loop = j.value("default_self_loop", false);
    return make_dfa(count, state_ref(j.at("initial")), accepting, std::move(edges), self_loop, names);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("DFA file '" + path.string() + "': " + e.what());
  }
}

DfaTable::DfaTable(const Dfa& dfa, const RegionMap& map)
    : num_states_(dfa.num_states), q0_(dfa.q0), accepting_(dfa.accepting) {
  if (map.regions.size() > 16) throw ArgumentError("DFA table supports at most 16 regions");
  masks_ = std::size_t{1} << map.regions.size();
  table_.resize(num_states_ * masks_);
  for (std::size_t q = 0; q < num_states_; ++q) {
    for (std::size_t mask = 0; mask < masks_; ++mask) {
      table_[q * masks_ + mask] = dfa_step(dfa, q, mask_to_letter(map, static_cast<LetterMask>(mask)));
    }
  }
}

}  // namespace stochsyn
