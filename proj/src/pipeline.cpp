#include "stochsyn/pipeline.hpp"

#include "stochsyn/stats.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace stochsyn {

namespace fs = std::filesystem;

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::generate: return "generate-data";
    case Stage::estimate: return "estimate";
    case Stage::abstract: return "abstract";
    case Stage::synthesize: return "synthesize";
    case Stage::simulate: return "simulate";
  }
  return "unknown";
}

OutputLock::OutputLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    throw Error("output directory '" + dir.string() + "' is locked by another run (remove " + path_.string() +
                " if no other process is using it)");
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputLock::~OutputLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::uint64_t stage_seed(std::uint64_t root, const std::string& stage) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix_seed(root, h);
}

namespace {

void log(Stage stage, const std::string& msg) { std::cerr << "[" << stage_name(stage) << "] " << msg << std::endl; }

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << j.dump(2) << "\n";
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

template <class T>
T parse_field(const std::string& s, const fs::path& path, std::size_t line) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": bad field '" + s + "'");
  }
  return v;
}

Grid config_grid(const RunConfig& cfg) { return build_grid(config_state_box(cfg), cfg.abstraction.grid); }

std::vector<Vector> config_inputs(const RunConfig& cfg) {
  return grid_inputs(config_input_box(cfg), cfg.abstraction.inputs_per_dim);
}

Posterior read_posterior(const RunConfig& cfg) {
  return posterior_from_json(read_json(cfg.output_dir / artifact::posterior));
}

std::vector<const char*> required_artifacts(Stage stage) {
  switch (stage) {
    case Stage::generate: return {};
    case Stage::estimate: return {artifact::dataset};
    case Stage::abstract: return {artifact::posterior};
    case Stage::synthesize: return {artifact::posterior, artifact::delta, artifact::abstraction};
    case Stage::simulate: return {artifact::posterior, artifact::value_policy, artifact::bounds};
  }
  return {};
}

Stage producer(const std::string& name) {
  if (name == artifact::dataset) return Stage::generate;
  if (name == artifact::posterior) return Stage::estimate;
  if (name == artifact::delta || name == artifact::abstraction) return Stage::abstract;
  return Stage::synthesize;
}

// --- stages -----------------------------------------------------------------

void stage_generate(const RunConfig& cfg) {
  Timer t;
  const ParametricSystem sys = config_true_system(cfg);
  NoiseSource noise(stage_seed(cfg.seed, "generate"));
  const Dataset ds = generate_dataset(sys, config_state_box(cfg), config_input_box(cfg), cfg.estimation.samples, noise);
  save_dataset(ds, cfg.output_dir / artifact::dataset);
  log(Stage::generate, std::to_string(ds.size()) + " samples written (" + fmt(t.seconds()) + " s)");
}

void stage_estimate(const RunConfig& cfg) {
  Timer t;
  const Dataset ds = load_dataset(cfg.output_dir / artifact::dataset);
  const FeatureLibrary lib = config_features(cfg);
  const Prior prior = default_prior(lib.m, cfg.system.state_dim, cfg.estimation.prior_variance);
  const Posterior post = posterior(prior, ds, cfg.system.sigma, lib, cfg.estimation.alpha);
  write_json(posterior_to_json(post), cfg.output_dir / artifact::posterior);
  const double err = (post.theta_hat - cfg.system.theta).cwiseAbs().maxCoeff();
  log(Stage::estimate, "N = " + std::to_string(ds.size()) + ", trace(sigma_N) = " + fmt(post.sigma_n.trace()) +
                           ", max |theta_hat - theta| = " + fmt(err) + " (" + fmt(t.seconds()) + " s)");
}

void stage_abstract(const RunConfig& cfg) {
  Timer t;
  const Posterior post = read_posterior(cfg);
  const AbstractMdp mdp = nominal_abstraction(cfg, post);
  if (cfg.abstraction.cache) {
    const auto key = abstraction_key(post.theta_hat, cfg.system.sigma, mdp.grid(), mdp.inputs(),
                                     cfg.abstraction.prune_threshold);
    save_transition_cache(mdp, key, cfg.output_dir / artifact::transitions);
  }
  const RelationTables rel = relation_tables(cfg, post, mdp);
  const auto& delta = std::get<DeltaTable>(rel.composed.delta);
  save_delta_table(delta, cfg.output_dir / artifact::delta);
  save_delta_table(rel.delta1, cfg.output_dir / artifact::delta_parametric);
  save_delta_table(rel.delta2, cfg.output_dir / artifact::delta_discretization);
  nlohmann::json j;
  j["cells"] = mdp.num_cells();
  j["inputs"] = mdp.num_inputs();
  j["eps1"] = rel.eps1;
  j["eps2"] = rel.eps2;
  j["eps"] = rel.composed.eps;
  j["delta1_max"] = rel.delta1.maxCoeff();
  j["delta2_max"] = rel.delta2.maxCoeff();
  j["delta_max"] = delta.maxCoeff();
  j["delta_min"] = delta.minCoeff();
  j["delta_mode"] = cfg.synthesis.delta_mode == DeltaMode::exact ? "exact" : "bound";
  j["delta2_sampled"] = mdp.delta2_sampled;
  j["deviation_radius"] = deviation_radius(post, cfg.system.sigma);
  write_json(j, cfg.output_dir / artifact::abstraction);
  log(Stage::abstract, std::to_string(mdp.num_cells()) + " cells x " + std::to_string(mdp.num_inputs()) +
                           " inputs, eps = " + fmt(rel.composed.eps) + ", delta in [" + fmt(delta.minCoeff()) +
                           ", " + fmt(delta.maxCoeff()) + "] (" + fmt(t.seconds()) + " s)");
}

void write_bounds(const SynthesisResult& res, const Grid& grid, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << "cell_index";
  for (std::size_t d = 0; d < grid.dim(); ++d) out << ",c" << d + 1;
  out << ",s_star,final_bound\n";
  for (std::size_t c = 0; c < grid.size(); ++c) {
    const Vector center = grid.center(c);
    out << c;
    for (Eigen::Index d = 0; d < center.size(); ++d) out << ',' << fmt(center[d]);
    const auto ci = static_cast<Eigen::Index>(c);
    out << ',' << fmt(res.satisfaction_bound_per_cell[ci]) << ',' << fmt(res.final_bound_per_cell[ci]) << '\n';
  }
}

void stage_synthesize(const RunConfig& cfg) {
  Timer t;
  const Posterior post = read_posterior(cfg);
  const AbstractMdp mdp = nominal_abstraction(cfg, post);
  const DeltaTable delta = load_delta_table(cfg.output_dir / artifact::delta);
  if (delta.rows() != static_cast<Eigen::Index>(mdp.num_cells()) ||
      delta.cols() != static_cast<Eigen::Index>(mdp.num_inputs())) {
    throw ArgumentError("delta table shape does not match the abstraction; rerun the abstract stage");
  }
  const double eps = read_json(cfg.output_dir / artifact::abstraction).at("eps").get<double>();
  const Dfa dfa = config_dfa(cfg);
  const RegionMap map = config_region_map(cfg);
  const RobustProduct product(mdp, dfa, map, eps);
  SynthesisOptions opts;
  opts.tol = cfg.synthesis.tol;
  opts.max_iter = cfg.synthesis.max_iter;
  opts.alpha = cfg.estimation.alpha;
  if (cfg.synthesis.horizon > 0) opts.horizon = cfg.synthesis.horizon;
  const SynthesisResult res = value_iteration(product, delta, opts);
  if (!res.converged) {
    log(Stage::synthesize, "warning: no convergence after " + std::to_string(res.iterations) +
                               " sweeps (residual " + fmt(res.residual) + "); values remain lower bounds");
  }
  save_value_policy(res, mdp, cfg.output_dir / artifact::value_policy);
  auto summary = synthesis_summary(res);
  summary["delta_max"] = delta.maxCoeff();
  summary["cells"] = mdp.num_cells();
  summary["final_bound_min"] = res.final_bound_per_cell.minCoeff();
  summary["positive_cells"] = (res.final_bound_per_cell.array() > 0.0).count();
  write_json(summary, cfg.output_dir / artifact::summary);
  write_bounds(res, mdp.grid(), cfg.output_dir / artifact::bounds);
  if (mdp.grid().dim() <= 2) write_heatmap(mdp.grid(), res.final_bound_per_cell, cfg.output_dir / artifact::heatmap);
  log(Stage::synthesize, std::to_string(res.iterations) + " sweeps, residual " + fmt(res.residual) +
                             ", final bound max " + fmt(res.final_bound_per_cell.maxCoeff()) + " (" +
                             fmt(t.seconds()) + " s)");
}

Policy read_policy(const RunConfig& cfg, std::size_t cells, std::size_t states) {
  const fs::path path = cfg.output_dir / artifact::value_policy;
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  const std::size_t n = cfg.system.state_dim;
  std::string line;
  std::getline(in, line);
  Policy policy{IndexMatrix::Constant(static_cast<Eigen::Index>(cells), static_cast<Eigen::Index>(states), -1)};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != n + 4) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    const auto c = parse_field<std::size_t>(f[0], path, line_no);
    const auto q = parse_field<std::size_t>(f[n + 1], path, line_no);
    const auto u = parse_field<int>(f[n + 3], path, line_no);
    if (c >= cells || q >= states) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": index out of range");
    policy.choice(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(q)) = u;
  }
  if (policy.choice.minCoeff() < 0) throw ParseError(path.string() + ": policy table is incomplete");
  return policy;
}

Vector read_final_bounds(const RunConfig& cfg, std::size_t cells) {
  const fs::path path = cfg.output_dir / artifact::bounds;
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  Vector bounds = Vector::Constant(static_cast<Eigen::Index>(cells), -1.0);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_csv(line);
    const auto c = parse_field<std::size_t>(f.front(), path, line_no);
    if (c >= cells) throw ParseError(path.string() + ":" + std::to_string(line_no) + ": cell out of range");
    bounds[static_cast<Eigen::Index>(c)] = parse_field<double>(f.back(), path, line_no);
  }
  if (bounds.minCoeff() < 0.0) throw ParseError(path.string() + ": bounds table is incomplete");
  return bounds;
}

void stage_simulate(const RunConfig& cfg) {
  Timer t;
  const Posterior post = read_posterior(cfg);
  const Grid grid = config_grid(cfg);
  const Dfa dfa = config_dfa(cfg);
  const Policy policy = read_policy(cfg, grid.size(), dfa.num_states);
  const Vector bounds = read_final_bounds(cfg, grid.size());
  const RefinedController ctrl(policy, grid, config_inputs(cfg), dfa, config_region_map(cfg), config_output_map(cfg),
                               post.theta_hat);
  const ParametricSystem sys = config_true_system(cfg);
  const std::uint64_t seed = stage_seed(cfg.seed, "simulate");
  nlohmann::json reports = nlohmann::json::array();
  std::size_t flagged = 0;
  for (std::size_t i = 0; i < cfg.simulate.initial_states.size(); ++i) {
    const Vector& x0 = cfg.simulate.initial_states[i];
    const double certified = bounds[static_cast<Eigen::Index>(grid.cell_of(x0))];
    const McReport rep = monte_carlo(sys, ctrl, x0, cfg.simulate.runs, cfg.simulate.horizon, cfg.simulate.confidence,
                                     mix_seed(seed, i), certified);
    flagged += rep.flagged ? 1 : 0;
    reports.push_back(mc_report_json(rep));
    log(Stage::simulate, "x0 = (" + fmt(x0[0]) + (x0.size() > 1 ? ", " + fmt(x0[1]) : std::string()) +
                             (x0.size() > 2 ? ", ..." : "") + "): rate " + fmt(rep.empirical_rate) + " in [" +
                             fmt(rep.conf_low) + ", " + fmt(rep.conf_high) + "], certified " + fmt(certified));
  }
  write_json(reports, cfg.output_dir / artifact::mc_report);
  log(Stage::simulate, std::to_string(cfg.simulate.initial_states.size()) + " initial states, " +
                           std::to_string(flagged) + " flagged (" + fmt(t.seconds()) + " s)");
}

void dispatch(const RunConfig& cfg, Stage stage) {
  switch (stage) {
    case Stage::generate: stage_generate(cfg); break;
    case Stage::estimate: stage_estimate(cfg); break;
    case Stage::abstract: stage_abstract(cfg); break;
    case Stage::synthesize: stage_synthesize(cfg); break;
    case Stage::simulate: stage_simulate(cfg); break;
  }
}

void run_unlocked(const RunConfig& cfg, Stage stage, bool chain) {
  for (const char* name : required_artifacts(stage)) {
    if (fs::exists(cfg.output_dir / name)) continue;
    if (!chain) {
      throw StageError(stage, std::string("missing artifact '") + name + "' from stage '" +
                                  stage_name(producer(name)) + "' in " + cfg.output_dir.string() +
                                  " (run that stage first or pass --chain)");
    }
    run_unlocked(cfg, producer(name), true);
  }
  try {
    dispatch(cfg, stage);
  } catch (const StageError&) {
    throw;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

}  // namespace

void run_stage(const RunConfig& cfg, Stage stage, bool chain) {
  validate(cfg);
  OutputLock lock(cfg.output_dir);
  run_unlocked(cfg, stage, chain);
}

void run_pipeline(const RunConfig& cfg) {
  validate(cfg);
  OutputLock lock(cfg.output_dir);
  for (Stage s : {Stage::generate, Stage::estimate, Stage::abstract, Stage::synthesize, Stage::simulate}) {
    run_unlocked(cfg, s, false);
  }
}

AbstractMdp nominal_abstraction(const RunConfig& cfg, const Posterior& post) {
  const Grid grid = config_grid(cfg);
  std::vector<Vector> inputs = config_inputs(cfg);
  AbstractionOptions opts;
  opts.prune_threshold = cfg.abstraction.prune_threshold;
  opts.corner_samples = cfg.abstraction.corner_samples;
  const FeatureLibrary lib = config_features(cfg);
  if (cfg.abstraction.cache) {
    const auto key = abstraction_key(post.theta_hat, cfg.system.sigma, grid, inputs, opts.prune_threshold);
    auto rows = load_transition_cache(cfg.output_dir / artifact::transitions, key, grid, inputs.size());
    if (!rows.empty()) {
      const Matrix h = config_output_map(cfg);
      Matrix outputs(static_cast<Eigen::Index>(grid.size()), h.rows());
      for (std::size_t c = 0; c < grid.size(); ++c) {
        outputs.row(static_cast<Eigen::Index>(c)) = (h * grid.center(c)).transpose();
      }
      auto errors = discretization_errors(post.theta_hat, lib, cfg.system.sigma, h, grid, inputs,
                                          opts.corner_samples);
      AbstractMdp mdp(grid, std::move(inputs), std::move(outputs), std::move(rows));
      mdp.eps2 = errors.eps2;
      mdp.delta2 = std::move(errors.delta2);
      mdp.delta2_sampled = errors.sampled;
      return mdp;
    }
  }
  return build_abstraction(post.theta_hat, lib, cfg.system.sigma, config_output_map(cfg), grid, std::move(inputs),
                           opts);
}

RelationTables relation_tables(const RunConfig& cfg, const Posterior& post, const AbstractMdp& mdp) {
  RelationTables rel;
  rel.delta1 = parametric_deltas(post, cfg.system.sigma, config_features(cfg), mdp.grid(), mdp.inputs(),
                                 cfg.abstraction.corner_samples, cfg.synthesis.delta_mode);
  rel.delta2 = mdp.delta2;
  rel.eps2 = mdp.eps2;
  const SimRelation parametric{rel.eps1, rel.delta1, RelationKind::parametric};
  const SimRelation discretization{rel.eps2, rel.delta2, RelationKind::discretization};
  rel.composed = compose_relations(parametric, discretization);
  return rel;
}

void write_heatmap(const Grid& grid, const Vector& values, const fs::path& path) {
  if (grid.dim() > 2) throw ArgumentError("heatmap needs a 1-D or 2-D grid");
  if (values.size() != static_cast<Eigen::Index>(grid.size())) throw ArgumentError("heatmap needs one value per cell");
  const std::size_t w = grid.counts()[0];
  const std::size_t h = grid.dim() == 2 ? grid.counts()[1] : 1;
  const std::size_t scale = std::max<std::size_t>(1, 400 / std::max(w, h));
  // Dark blue -> teal -> yellow.
  static constexpr std::array<std::array<double, 3>, 3> anchors = {{{68, 1, 84}, {33, 145, 140}, {253, 231, 37}}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  out << "P6\n" << w * scale << " " << h * scale << "\n255\n";
  std::vector<unsigned char> row(w * scale * 3);
  for (std::size_t py = 0; py < h * scale; ++py) {
    const std::size_t cy = h - 1 - py / scale;
    for (std::size_t px = 0; px < w * scale; ++px) {
      const std::size_t cell = px / scale + cy * w;
      const double v = std::clamp(values[static_cast<Eigen::Index>(cell)], 0.0, 1.0);
      const double pos = v * 2.0;
      const std::size_t k = std::min<std::size_t>(1, static_cast<std::size_t>(pos));
      const double t = pos - static_cast<double>(k);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const double c = anchors[k][ch] + t * (anchors[k + 1][ch] - anchors[k][ch]);
        row[px * 3 + ch] = static_cast<unsigned char>(std::lround(c));
      }
    }
    out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

CouplingVerification verify_coupling(const Vector& gamma, const Vector& stddev, double step, double mass_tol) {
  if (gamma.size() != stddev.size() || gamma.size() < 1 || gamma.size() > 2) {
    throw ArgumentError("verify_coupling supports 1-D and 2-D gamma with matching sigma");
  }
  if ((stddev.array() <= 0.0).any() || !(step > 0.0)) throw ArgumentError("sigma and step must be positive");
  const Eigen::Index dim = gamma.size();
  // Per-dimension cell masses of p_hat = N(0, s^2) and p = N(-gamma, s^2).
  std::vector<std::vector<double>> a(static_cast<std::size_t>(dim));
  std::vector<std::vector<double>> b(static_cast<std::size_t>(dim));
  CouplingVerification out;
  double tail_keep = 1.0;
  for (Eigen::Index d = 0; d < dim; ++d) {
    const double s = stddev[d];
    const double lo = std::min(0.0, -gamma[d]) - 8.0 * s;
    const double hi = std::max(0.0, -gamma[d]) + 8.0 * s;
    const auto cells = static_cast<std::size_t>(std::ceil((hi - lo) / step));
    double kept = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double x0 = lo + static_cast<double>(i) * step;
      const double x1 = x0 + step;
      a[static_cast<std::size_t>(d)].push_back(normal_interval(x0 / s, x1 / s));
      b[static_cast<std::size_t>(d)].push_back(normal_interval((x0 + gamma[d]) / s, (x1 + gamma[d]) / s));
      kept += a[static_cast<std::size_t>(d)].back();
    }
    tail_keep *= kept;
  }
  out.truncated_tail = std::max(0.0, 1.0 - tail_keep);
  const std::size_t nx = a[0].size();
  const std::size_t ny = dim == 2 ? a[1].size() : 1;
  out.points = nx * ny;
  Vector p_hat(static_cast<Eigen::Index>(out.points));
  Vector p(static_cast<Eigen::Index>(out.points));
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const auto k = static_cast<Eigen::Index>(i + j * nx);
      p_hat[k] = a[0][i] * (dim == 2 ? a[1][j] : 1.0);
      p[k] = b[0][i] * (dim == 2 ? b[1][j] : 1.0);
    }
  }
  // Identity relation on the common grid: diagonal sub-coupling.
  const Vector v = p_hat.cwiseMin(p);
  out.coupled_mass = v.sum();
  out.expected_mass = coupling_mass(gamma, Matrix(stddev.array().square().matrix().asDiagonal()));
  out.mass_ok = std::abs(out.coupled_mass - out.expected_mass) <= mass_tol + out.truncated_tail;
  out.def3_violation = std::max({0.0, (v - p_hat).maxCoeff(), (v - p).maxCoeff(), -v.minCoeff()});
  out.def3_ok = out.def3_violation <= 1e-12;
  // Completion W = v + r_hat r^T / residual, marginals evaluated in closed form.
  const Vector r_hat = p_hat - v;
  const Vector r = p - v;
  const double residual = r_hat.sum();
  Vector rows = v;
  Vector cols = v;
  if (residual > 1e-15) {
    rows += r_hat * (r.sum() / residual);
    cols += r * (r_hat.sum() / residual);
  }
  out.completion_error = std::max((rows - p_hat).cwiseAbs().maxCoeff(), (cols - p).cwiseAbs().maxCoeff());
  out.completion_ok = out.completion_error <= 1e-12;
  if (out.points <= 2500) {
    out.dense_checked = true;
    Matrix support(static_cast<Eigen::Index>(out.points), 1);
    for (Eigen::Index k = 0; k < support.rows(); ++k) support(k, 0) = static_cast<double>(k);
    const DiscreteMeasure mh{support, p_hat};
    const DiscreteMeasure m{support, p};
    const auto [coupling, mass] = build_sub_coupling(mh, m, [](Eigen::Index i, Eigen::Index j) { return i == j; });
    const auto check = check_sub_coupling(coupling, mh, m);
    const Matrix w = complete_coupling(coupling, mh, m);
    const double marg = std::max((w.rowwise().sum() - p_hat).cwiseAbs().maxCoeff(),
                                 (w.colwise().sum().transpose() - p).cwiseAbs().maxCoeff());
    out.dense_ok = check.ok() && std::abs(mass - out.coupled_mass) <= 1e-12 && marg <= 1e-12;
  }
  return out;
}

}  // namespace stochsyn
