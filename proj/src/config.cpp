#include "stochsyn/config.hpp"

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace stochsyn {

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

RegionSpec region(const std::string& name, std::initializer_list<double> lo, std::initializer_list<double> hi) {
  return RegionSpec{name, vec(lo), vec(hi)};
}

RunConfig package_delivery() {
  RunConfig cfg;
  cfg.preset = "package_delivery";
  cfg.output_dir = "out/package_delivery";
  auto& s = cfg.system;
  s.features = "linear";
  s.state_dim = 2;
  s.input_dim = 2;
  s.theta.resize(4, 2);
  s.theta << 0.6, 0.2,
             0.3, 0.7,
             1.2, 0.0,
             0.0, 1.4;
  s.sigma = std::sqrt(0.1) * Matrix::Identity(2, 2);
  s.state_lo = vec({-6, -6});
  s.state_hi = vec({6, 6});
  s.input_lo = vec({-1, -1});
  s.input_hi = vec({1, 1});
  cfg.estimation.samples = 100000;
  cfg.abstraction.grid = {60, 60};
  cfg.abstraction.inputs_per_dim = 5;
  cfg.spec.dfa = "package_delivery";
  cfg.spec.regions = {region("P1", {3, -2.5}, {6, 1}), region("P2", {-1, -4}, {1, 3}),
                      region("P3", {-6, -6}, {-3, -3})};
  cfg.simulate.initial_states = {vec({4.5, -1.0}), vec({2.0, -1.0}), vec({-4.0, 4.0}), vec({4.0, 4.0}),
                                 vec({-4.0, 0.0}), vec({0.0, -5.0}), vec({5.0, -5.0}), vec({-2.0, -2.0}),
                                 vec({2.0, 4.0}),  vec({-5.0, -1.5})};
  return cfg;
}

RunConfig van_der_pol() {
  RunConfig cfg;
  cfg.preset = "van_der_pol";
  cfg.output_dir = "out/van_der_pol";
  const double tau = 0.1;
  const double a = 0.9;
  auto& s = cfg.system;
  s.features = "van_der_pol";
  s.state_dim = 2;
  s.input_dim = 1;
  s.theta.resize(4, 2);
  s.theta << 1.0, -tau,
             tau, 1.0 + tau * a,
             0.0, -tau * a,
             0.0, 1.0;
  s.sigma = 0.2 * Matrix::Identity(2, 2);
  s.state_lo = vec({-3, -3});
  s.state_hi = vec({3, 3});
  s.input_lo = vec({-1});
  s.input_hi = vec({1});
  cfg.estimation.samples = 100000;
  cfg.abstraction.grid = {100, 100};
  cfg.abstraction.inputs_per_dim = 5;
  cfg.spec.dfa = "reach_avoid";
  cfg.spec.safe = "PS";
  cfg.spec.target = "PT";
  cfg.spec.regions = {region("PS", {-3, -3}, {3, 3}), region("PT", {2, -1}, {3, 1})};
  cfg.simulate.initial_states = {vec({0.0, 0.0}),  vec({1.0, 0.0}),   vec({-1.0, 1.0}), vec({1.5, -0.5}),
                                 vec({2.5, 0.0}),  vec({0.0, 2.0}),   vec({-2.0, -2.0}), vec({1.0, 1.0}),
                                 vec({-1.0, -1.0}), vec({2.0, 2.0})};
  return cfg;
}

// --- TOML reading -----------------------------------------------------------

[[noreturn]] void fail(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

double as_double(const toml::node& node, const std::string& field) {
  if (auto v = node.value<double>()) return *v;
  fail(field, "expected a number");
}

std::size_t as_count(const toml::node& node, const std::string& field) {
  if (auto v = node.value<std::int64_t>()) {
    if (*v < 0) fail(field, "must be nonnegative");
    return static_cast<std::size_t>(*v);
  }
  fail(field, "expected an integer");
}

Vector as_vector(const toml::node& node, const std::string& field) {
  const auto* arr = node.as_array();
  if (!arr) fail(field, "expected an array of numbers");
  Vector out(static_cast<Eigen::Index>(arr->size()));
  for (std::size_t i = 0; i < arr->size(); ++i) out[static_cast<Eigen::Index>(i)] = as_double(*arr->get(i), field);
  return out;
}

Matrix as_matrix(const toml::node& node, const std::string& field) {
  const auto* arr = node.as_array();
  if (!arr || arr->empty()) fail(field, "expected a non-empty array of rows");
  std::vector<Vector> rows;
  for (std::size_t i = 0; i < arr->size(); ++i) rows.push_back(as_vector(*arr->get(i), field));
  Matrix out(static_cast<Eigen::Index>(rows.size()), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != out.cols()) fail(field, "rows have different lengths");
    out.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  }
  return out;
}

template <class F>
void with(const toml::table& tbl, const char* key, const std::string& prefix, F&& f) {
  if (const toml::node* node = tbl.get(key)) f(*node, prefix.empty() ? std::string(key) : prefix + "." + key);
}

const toml::table& sub_table(const toml::table& root, const char* key) {
  static const toml::table empty;
  const toml::node* node = root.get(key);
  if (!node) return empty;
  const auto* t = node->as_table();
  if (!t) fail(key, "expected a table");
  return *t;
}

void check_keys(const toml::table& tbl, const std::string& prefix, const std::set<std::string>& known) {
  for (const auto& [k, v] : tbl) {
    const std::string key(k.str());
    if (!known.count(key)) fail(prefix.empty() ? key : prefix + "." + key, "unknown key");
  }
}

void read_system(const toml::table& t, SystemConfig& s) {
  check_keys(t, "system", {"features", "state_dim", "input_dim", "theta", "A", "B", "c", "sigma", "state_lo",
                           "state_hi", "input_lo", "input_hi", "output_map"});
  with(t, "features", "system", [&](const toml::node& n, const std::string& f) {
    auto v = n.value<std::string>();
    if (!v) fail(f, "expected a string");
    s.features = *v;
  });
  with(t, "state_dim", "system", [&](const toml::node& n, const std::string& f) { s.state_dim = as_count(n, f); });
  with(t, "input_dim", "system", [&](const toml::node& n, const std::string& f) { s.input_dim = as_count(n, f); });
  with(t, "theta", "system", [&](const toml::node& n, const std::string& f) { s.theta = as_matrix(n, f); });
  if (t.get("A") || t.get("B")) {
    if (!t.get("A") || !t.get("B")) fail("system.A", "A and B must be given together");
    if (t.get("theta")) fail("system.theta", "give either theta or A/B, not both");
    const Matrix a = as_matrix(*t.get("A"), "system.A");
    const Matrix b = as_matrix(*t.get("B"), "system.B");
    if (a.rows() != a.cols() || b.rows() != a.rows()) fail("system.B", "A must be n x n and B n x p");
    const bool affine = t.get("c") != nullptr;
    Vector c;
    if (affine) {
      c = as_vector(*t.get("c"), "system.c");
      if (c.size() != a.rows()) fail("system.c", "must have n entries");
    }
    s.state_dim = static_cast<std::size_t>(a.rows());
    s.input_dim = static_cast<std::size_t>(b.cols());
    s.features = affine ? "affine" : "linear";
    s.theta.resize(a.cols() + b.cols() + (affine ? 1 : 0), a.rows());
    s.theta.topRows(a.cols()) = a.transpose();
    s.theta.middleRows(a.cols(), b.cols()) = b.transpose();
    if (affine) s.theta.bottomRows(1) = c.transpose();
  }
  with(t, "sigma", "system", [&](const toml::node& n, const std::string& f) { s.sigma = as_matrix(n, f); });
  with(t, "state_lo", "system", [&](const toml::node& n, const std::string& f) { s.state_lo = as_vector(n, f); });
  with(t, "state_hi", "system", [&](const toml::node& n, const std::string& f) { s.state_hi = as_vector(n, f); });
  with(t, "input_lo", "system", [&](const toml::node& n, const std::string& f) { s.input_lo = as_vector(n, f); });
  with(t, "input_hi", "system", [&](const toml::node& n, const std::string& f) { s.input_hi = as_vector(n, f); });
  with(t, "output_map", "system", [&](const toml::node& n, const std::string& f) { s.output_map = as_matrix(n, f); });
}

void read_estimation(const toml::table& t, EstimationConfig& e) {
  check_keys(t, "estimation", {"samples", "alpha", "prior_variance"});
  with(t, "samples", "estimation", [&](const toml::node& n, const std::string& f) { e.samples = as_count(n, f); });
  with(t, "alpha", "estimation", [&](const toml::node& n, const std::string& f) { e.alpha = as_double(n, f); });
  with(t, "prior_variance", "estimation",
       [&](const toml::node& n, const std::string& f) { e.prior_variance = as_double(n, f); });
}

void read_abstraction(const toml::table& t, AbstractionConfig& a, std::size_t dim) {
  check_keys(t, "abstraction", {"grid", "inputs_per_dim", "prune_threshold", "corner_samples", "cache"});
  with(t, "grid", "abstraction", [&](const toml::node& n, const std::string& f) {
    if (n.is_integer()) {
      a.grid.assign(dim, as_count(n, f));
      return;
    }
    const auto* arr = n.as_array();
    if (!arr) fail(f, "expected an integer or an array of integers");
    a.grid.clear();
    for (std::size_t i = 0; i < arr->size(); ++i) a.grid.push_back(as_count(*arr->get(i), f));
  });
  with(t, "inputs_per_dim", "abstraction",
       [&](const toml::node& n, const std::string& f) { a.inputs_per_dim = as_count(n, f); });
  with(t, "prune_threshold", "abstraction",
       [&](const toml::node& n, const std::string& f) { a.prune_threshold = as_double(n, f); });
  with(t, "corner_samples", "abstraction",
       [&](const toml::node& n, const std::string& f) { a.corner_samples = as_count(n, f); });
  with(t, "cache", "abstraction", [&](const toml::node& n, const std::string& f) {
    auto v = n.value<bool>();
    if (!v) fail(f, "expected a boolean");
    a.cache = *v;
  });
}

void read_spec(const toml::table& t, SpecConfig& s) {
  check_keys(t, "spec", {"dfa", "safe", "target", "regions", "bounds_lo", "bounds_hi"});
  auto str = [&](const char* key, std::string& out) {
    with(t, key, "spec", [&](const toml::node& n, const std::string& f) {
      auto v = n.value<std::string>();
      if (!v) fail(f, "expected a string");
      out = *v;
    });
  };
  str("dfa", s.dfa);
  str("safe", s.safe);
  str("target", s.target);
  with(t, "bounds_lo", "spec", [&](const toml::node& n, const std::string& f) { s.bounds_lo = as_vector(n, f); });
  with(t, "bounds_hi", "spec", [&](const toml::node& n, const std::string& f) { s.bounds_hi = as_vector(n, f); });
  with(t, "regions", "spec", [&](const toml::node& n, const std::string& f) {
    const auto* arr = n.as_array();
    if (!arr) fail(f, "expected an array of tables");
    s.regions.clear();
    for (std::size_t i = 0; i < arr->size(); ++i) {
      const auto* r = arr->get(i)->as_table();
      const std::string field = f + "[" + std::to_string(i) + "]";
      if (!r) fail(field, "expected a table");
      check_keys(*r, field, {"name", "lo", "hi"});
      RegionSpec spec;
      auto name = (*r)["name"].value<std::string>();
      if (!name) fail(field + ".name", "expected a string");
      spec.name = *name;
      if (!r->get("lo") || !r->get("hi")) fail(field, "needs lo and hi");
      spec.lo = as_vector(*r->get("lo"), field + ".lo");
      spec.hi = as_vector(*r->get("hi"), field + ".hi");
      s.regions.push_back(std::move(spec));
    }
  });
}

void read_synthesis(const toml::table& t, SynthesisConfig& s) {
  check_keys(t, "synthesis", {"tol", "max_iter", "horizon", "delta_mode"});
  with(t, "tol", "synthesis", [&](const toml::node& n, const std::string& f) { s.tol = as_double(n, f); });
  with(t, "max_iter", "synthesis", [&](const toml::node& n, const std::string& f) { s.max_iter = as_count(n, f); });
  with(t, "horizon", "synthesis", [&](const toml::node& n, const std::string& f) { s.horizon = as_count(n, f); });
  with(t, "delta_mode", "synthesis", [&](const toml::node& n, const std::string& f) {
    auto v = n.value<std::string>();
    if (!v || (*v != "bound" && *v != "exact")) fail(f, "expected \"bound\" or \"exact\"");
    s.delta_mode = *v == "exact" ? DeltaMode::exact : DeltaMode::bound;
  });
}

void read_simulate(const toml::table& t, SimulateConfig& s) {
  check_keys(t, "simulate", {"runs", "horizon", "confidence", "initial_states"});
  with(t, "runs", "simulate", [&](const toml::node& n, const std::string& f) { s.runs = as_count(n, f); });
  with(t, "horizon", "simulate", [&](const toml::node& n, const std::string& f) { s.horizon = as_count(n, f); });
  with(t, "confidence", "simulate", [&](const toml::node& n, const std::string& f) { s.confidence = as_double(n, f); });
  with(t, "initial_states", "simulate", [&](const toml::node& n, const std::string& f) {
    const auto* arr = n.as_array();
    if (!arr) fail(f, "expected an array of points");
    s.initial_states.clear();
    for (std::size_t i = 0; i < arr->size(); ++i) s.initial_states.push_back(as_vector(*arr->get(i), f));
  });
}

// --- TOML writing -----------------------------------------------------------

std::string num(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string vec_str(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
  return s + "]";
}

std::string mat_str(const Matrix& m) {
  std::string s = "[";
  for (Eigen::Index r = 0; r < m.rows(); ++r) s += std::string(r ? ", " : "") + vec_str(m.row(r).transpose());
  return s + "]";
}

std::string quoted(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::vector<std::string> preset_names() { return {"package_delivery", "van_der_pol"}; }

RunConfig preset_config(const std::string& name) {
  if (name == "package_delivery") return package_delivery();
  if (name == "van_der_pol") return van_der_pol();
  throw ConfigError("unknown preset '" + name + "' (expected package_delivery or van_der_pol)");
}

RunConfig parse_config(const std::string& toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }
  check_keys(root, "", {"preset", "output_dir", "seed", "system", "estimation", "abstraction", "spec", "synthesis",
                        "simulate"});
  RunConfig cfg;
  if (auto preset = root["preset"].value<std::string>()) cfg = preset_config(*preset);
  if (const toml::node* n = root.get("output_dir")) {
    auto v = n->value<std::string>();
    if (!v) fail("output_dir", "expected a string");
    cfg.output_dir = *v;
  }
  if (const toml::node* n = root.get("seed")) cfg.seed = as_count(*n, "seed");
  read_system(sub_table(root, "system"), cfg.system);
  read_estimation(sub_table(root, "estimation"), cfg.estimation);
  read_abstraction(sub_table(root, "abstraction"), cfg.abstraction, cfg.system.state_dim);
  read_spec(sub_table(root, "spec"), cfg.spec);
  read_synthesis(sub_table(root, "synthesis"), cfg.synthesis);
  read_simulate(sub_table(root, "simulate"), cfg.simulate);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.string());
}

void validate(const RunConfig& cfg) {
  const auto& s = cfg.system;
  const auto n = static_cast<Eigen::Index>(s.state_dim);
  const auto p = static_cast<Eigen::Index>(s.input_dim);
  if (n < 1) fail("system.state_dim", "must be >= 1");
  if (p < 1) fail("system.input_dim", "must be >= 1");
  FeatureLibrary lib;
  try {
    lib = features_by_name(s.features, s.state_dim, s.input_dim);
  } catch (const ArgumentError& e) {
    fail("system.features", e.what());
  }
  if (s.theta.rows() != static_cast<Eigen::Index>(lib.m) || s.theta.cols() != n) {
    fail("system.theta", "must be " + std::to_string(lib.m) + " x " + std::to_string(n));
  }
  if (s.sigma.rows() != n || s.sigma.cols() != n) fail("system.sigma", "must be n x n");
  try {
    check_covariance(s.sigma, "system.sigma");
  } catch (const Error& e) {
    fail("system.sigma", e.what());
  }
  auto box = [&](const Vector& lo, const Vector& hi, Eigen::Index dim, const std::string& field) {
    if (lo.size() != dim || hi.size() != dim) fail(field, "bounds must have " + std::to_string(dim) + " entries");
    for (Eigen::Index d = 0; d < dim; ++d) {
      if (!(lo[d] < hi[d])) fail(field, "need lo < hi in every dimension");
    }
  };
  box(s.state_lo, s.state_hi, n, "system.state_lo");
  box(s.input_lo, s.input_hi, p, "system.input_lo");
  if (s.output_map.size() > 0 && s.output_map.cols() != n) fail("system.output_map", "must have n columns");

  const auto& e = cfg.estimation;
  if (!(e.alpha > 0.0 && e.alpha < 1.0)) fail("estimation.alpha", "must lie in (0, 1), got " + num(e.alpha));
  if (e.samples < 1) fail("estimation.samples", "must be >= 1");
  if (!(e.prior_variance > 0.0)) fail("estimation.prior_variance", "must be positive");

  const auto& a = cfg.abstraction;
  if (a.grid.size() != s.state_dim) fail("abstraction.grid", "needs one count per state dimension");
  for (auto c : a.grid) {
    if (c < 1) fail("abstraction.grid", "counts must be >= 1");
  }
  if (a.inputs_per_dim < 1) fail("abstraction.inputs_per_dim", "must be >= 1");
  if (!(a.prune_threshold >= 0.0 && a.prune_threshold < 1.0)) fail("abstraction.prune_threshold", "must lie in [0, 1)");
  if (a.corner_samples < 2) fail("abstraction.corner_samples", "must be >= 2");

  const auto& sp = cfg.spec;
  if (sp.dfa != "package_delivery" && sp.dfa != "reach_avoid" && !std::filesystem::exists(sp.dfa)) {
    fail("spec.dfa", "unknown preset and no such file: '" + sp.dfa + "'");
  }
  const Eigen::Index k = s.output_map.size() > 0 ? s.output_map.rows() : n;
  std::set<std::string> names;
  for (std::size_t i = 0; i < sp.regions.size(); ++i) {
    const std::string field = "spec.regions[" + std::to_string(i) + "]";
    if (!names.insert(sp.regions[i].name).second) fail(field + ".name", "duplicate region name");
    if (sp.regions[i].lo.size() != k || sp.regions[i].hi.size() != k) fail(field, "bounds must match the output dimension");
    for (Eigen::Index d = 0; d < k; ++d) {
      if (!(sp.regions[i].lo[d] <= sp.regions[i].hi[d])) fail(field, "need lo <= hi");
    }
  }
  if (sp.bounds_lo.size() > 0 || sp.bounds_hi.size() > 0) {
    if (sp.bounds_lo.size() != k || sp.bounds_hi.size() != k) fail("spec.bounds_lo", "must match the output dimension");
  }

  const auto& sy = cfg.synthesis;
  if (!(sy.tol > 0.0)) fail("synthesis.tol", "must be positive");
  if (sy.max_iter < 1) fail("synthesis.max_iter", "must be >= 1");

  const auto& sim = cfg.simulate;
  if (sim.runs < 1) fail("simulate.runs", "must be >= 1");
  if (sim.horizon < 1) fail("simulate.horizon", "must be >= 1");
  if (!(sim.confidence > 0.0 && sim.confidence < 1.0)) fail("simulate.confidence", "must lie in (0, 1)");
  for (const auto& x0 : sim.initial_states) {
    if (x0.size() != n) fail("simulate.initial_states", "points must have n entries");
  }
  try {
    (void)config_dfa(cfg);
    (void)config_region_map(cfg);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& err) {
    fail("spec", err.what());
  }
}

std::string config_to_toml(const RunConfig& cfg) {
  std::ostringstream out;
  const auto& s = cfg.system;
  if (!cfg.preset.empty()) out << "preset = " << quoted(cfg.preset) << "\n";
  out << "output_dir = " << quoted(cfg.output_dir.string()) << "\n";
  out << "seed = " << cfg.seed << "\n\n";
  out << "[system]\n";
  out << "features = " << quoted(s.features) << "\n";
  out << "state_dim = " << s.state_dim << "\n";
  out << "input_dim = " << s.input_dim << "\n";
  out << "# m x n, column j holds the parameters of state component j\n";
  out << "theta = " << mat_str(s.theta) << "\n";
  out << "sigma = " << mat_str(s.sigma) << "\n";
  out << "state_lo = " << vec_str(s.state_lo) << "\n";
  out << "state_hi = " << vec_str(s.state_hi) << "\n";
  out << "input_lo = " << vec_str(s.input_lo) << "\n";
  out << "input_hi = " << vec_str(s.input_hi) << "\n";
  if (s.output_map.size() > 0) out << "output_map = " << mat_str(s.output_map) << "\n";
  out << "\n[estimation]\n";
  out << "samples = " << cfg.estimation.samples << "\n";
  out << "alpha = " << num(cfg.estimation.alpha) << "\n";
  out << "prior_variance = " << num(cfg.estimation.prior_variance) << "\n";
  out << "\n[abstraction]\n";
  out << "grid = [";
  for (std::size_t i = 0; i < cfg.abstraction.grid.size(); ++i) out << (i ? ", " : "") << cfg.abstraction.grid[i];
  out << "]\n";
  out << "inputs_per_dim = " << cfg.abstraction.inputs_per_dim << "\n";
  out << "prune_threshold = " << num(cfg.abstraction.prune_threshold) << "\n";
  out << "corner_samples = " << cfg.abstraction.corner_samples << "\n";
  out << "cache = " << (cfg.abstraction.cache ? "true" : "false") << "\n";
  out << "\n[spec]\n";
  out << "dfa = " << quoted(cfg.spec.dfa) << "\n";
  if (cfg.spec.dfa == "reach_avoid") {
    out << "safe = " << quoted(cfg.spec.safe) << "\n";
    out << "target = " << quoted(cfg.spec.target) << "\n";
  }
  if (cfg.spec.bounds_lo.size() > 0) {
    out << "bounds_lo = " << vec_str(cfg.spec.bounds_lo) << "\n";
    out << "bounds_hi = " << vec_str(cfg.spec.bounds_hi) << "\n";
  }
  for (const auto& r : cfg.spec.regions) {
    out << "\n[[spec.regions]]\n";
    out << "name = " << quoted(r.name) << "\n";
    out << "lo = " << vec_str(r.lo) << "\n";
    out << "hi = " << vec_str(r.hi) << "\n";
  }
  out << "\n[synthesis]\n";
  out << "tol = " << num(cfg.synthesis.tol) << "\n";
  out << "max_iter = " << cfg.synthesis.max_iter << "\n";
  out << "# 0 iterates to convergence\n";
  out << "horizon = " << cfg.synthesis.horizon << "\n";
  out << "delta_mode = " << quoted(cfg.synthesis.delta_mode == DeltaMode::exact ? "exact" : "bound") << "\n";
  out << "\n[simulate]\n";
  out << "runs = " << cfg.simulate.runs << "\n";
  out << "horizon = " << cfg.simulate.horizon << "\n";
  out << "confidence = " << num(cfg.simulate.confidence) << "\n";
  out << "initial_states = [";
  for (std::size_t i = 0; i < cfg.simulate.initial_states.size(); ++i) {
    out << (i ? ", " : "") << vec_str(cfg.simulate.initial_states[i]);
  }
  out << "]\n";
  return out.str();
}

FeatureLibrary config_features(const RunConfig& cfg) {
  return features_by_name(cfg.system.features, cfg.system.state_dim, cfg.system.input_dim);
}

Matrix config_output_map(const RunConfig& cfg) {
  if (cfg.system.output_map.size() > 0) return cfg.system.output_map;
  const auto n = static_cast<Eigen::Index>(cfg.system.state_dim);
  return Matrix::Identity(n, n);
}

ParametricSystem config_true_system(const RunConfig& cfg) {
  return ParametricSystem(cfg.system.state_dim, cfg.system.input_dim, config_features(cfg), cfg.system.theta,
                          cfg.system.sigma, config_output_map(cfg));
}

Box config_state_box(const RunConfig& cfg) { return make_box(cfg.system.state_lo, cfg.system.state_hi); }
Box config_input_box(const RunConfig& cfg) { return make_box(cfg.system.input_lo, cfg.system.input_hi); }

RegionMap config_region_map(const RunConfig& cfg) {
  Box bounds;
  if (cfg.spec.bounds_lo.size() > 0) {
    bounds = make_box(cfg.spec.bounds_lo, cfg.spec.bounds_hi);
  } else {
    const Matrix h = config_output_map(cfg);
    const Vector center = 0.5 * (cfg.system.state_lo + cfg.system.state_hi);
    const Vector half = 0.5 * (cfg.system.state_hi - cfg.system.state_lo);
    const Vector reach = h.cwiseAbs() * half;
    bounds = make_box(h * center - reach, h * center + reach);
  }
  std::vector<Region> regions;
  for (const auto& r : cfg.spec.regions) regions.push_back(Region{r.name, make_box(r.lo, r.hi)});
  return make_region_map(std::move(regions), bounds);
}

Dfa config_dfa(const RunConfig& cfg) {
  if (cfg.spec.dfa == "package_delivery") return builtin_package_delivery();
  if (cfg.spec.dfa == "reach_avoid") return builtin_reach_avoid(cfg.spec.safe, cfg.spec.target);
  return load_dfa(cfg.spec.dfa);
}

}  // namespace stochsyn
