#include "stochsyn/model.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace stochsyn {

Vector evaluate(const FeatureLibrary& lib, const Vector& x, const Vector& u) {
  Vector f = lib.eval(x, u);
  if (static_cast<std::size_t>(f.size()) != lib.m) {
    throw EvaluationError("feature library returned " + std::to_string(f.size()) +
                          " entries, expected " + std::to_string(lib.m));
  }
  if (!f.allFinite()) throw EvaluationError("feature library returned a non-finite value");
  return f;
}

FeatureLibrary linear_features(std::size_t n, std::size_t p) {
  FeatureLibrary lib;
  lib.m = n + p;
  lib.preset = "linear";
  for (std::size_t i = 0; i < n; ++i) lib.names.push_back("x" + std::to_string(i + 1));
  for (std::size_t i = 0; i < p; ++i) lib.names.push_back("u" + std::to_string(i + 1));
  lib.eval = [n, p](const Vector& x, const Vector& u) {
    Vector f(n + p);
    f << x, u;
    return f;
  };
  return lib;
}

FeatureLibrary affine_features(std::size_t n, std::size_t p) {
  FeatureLibrary lib = linear_features(n, p);
  lib.m = n + p + 1;
  lib.preset = "affine";
  lib.names.push_back("1");
  lib.eval = [n, p](const Vector& x, const Vector& u) {
    Vector f(n + p + 1);
    f << x, u, 1.0;
    return f;
  };
  return lib;
}

FeatureLibrary van_der_pol_features() {
  FeatureLibrary lib;
  lib.m = 4;
  lib.preset = "van_der_pol";
  lib.names = {"x1", "x2", "x1^2*x2", "u"};
  lib.eval = [](const Vector& x, const Vector& u) {
    Vector f(4);
    f << x[0], x[1], x[0] * x[0] * x[1], u[0];
    return f;
  };
  return lib;
}

FeatureLibrary features_by_name(const std::string& name, std::size_t n, std::size_t p) {
  if (name == "linear") return linear_features(n, p);
  if (name == "affine") return affine_features(n, p);
  if (name == "van_der_pol") {
    if (n != 2 || p != 1) throw ArgumentError("van_der_pol features need n = 2, p = 1");
    return van_der_pol_features();
  }
  throw ArgumentError("unknown feature library '" + name + "'");
}

Vector NoiseSource::standard_normal(Eigen::Index n) {
  Vector z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = standard_normal();
  return z;
}

Vector NoiseSource::uniform(const Box& box) {
  Vector v(box.dim());
  for (Eigen::Index d = 0; d < box.dim(); ++d) {
    std::uniform_real_distribution<double> dist(box.lo[d], box.hi[d]);
    v[d] = dist(engine_);
  }
  return v;
}

void check_covariance(const Matrix& sigma, const std::string& what) {
  if (sigma.rows() != sigma.cols()) throw ArgumentError(what + " must be square");
  if (!sigma.allFinite()) throw ArgumentError(what + " has non-finite entries");
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ArgumentError(what + " is not symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(sigma, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw LinAlgError(what + ": eigendecomposition failed");
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw ArgumentError(what + " is not positive definite");
}

ParametricSystem::ParametricSystem(std::size_t n, std::size_t p, FeatureLibrary lib, Matrix theta,
                                   Matrix sigma, Matrix output_map)
    : n_(n),
      p_(p),
      lib_(std::move(lib)),
      theta_(std::move(theta)),
      sigma_(std::move(sigma)),
      output_map_(std::move(output_map)) {
  if (static_cast<std::size_t>(theta_.rows()) != lib_.m ||
      static_cast<std::size_t>(theta_.cols()) != n_) {
    throw ArgumentError("theta must have shape m x n = " + std::to_string(lib_.m) + " x " +
                        std::to_string(n_));
  }
  if (static_cast<std::size_t>(sigma_.rows()) != n_) throw ArgumentError("sigma must be n x n");
  check_covariance(sigma_, "sigma");
  if (static_cast<std::size_t>(output_map_.cols()) != n_) {
    throw ArgumentError("output map must have n columns");
  }
  noise_factor_ = sigma_.llt().matrixL();
}

ParametricSystem::ParametricSystem(std::size_t n, std::size_t p, FeatureLibrary lib, Matrix theta,
                                   Matrix sigma)
    : ParametricSystem(n, p, std::move(lib), std::move(theta), std::move(sigma),
                       Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n))) {}

Vector ParametricSystem::mean(const Vector& x, const Vector& u) const {
  return theta_.transpose() * evaluate(lib_, x, u);
}

ParametricSystem ParametricSystem::with_theta(Matrix theta) const {
  return ParametricSystem(n_, p_, lib_, std::move(theta), sigma_, output_map_);
}

Vector step(const ParametricSystem& sys, const Vector& x, const Vector& u, NoiseSource& noise) {
  Vector next = sys.mean(x, u);
  if (!noise.is_silent()) {
    next += sys.noise_factor() * noise.standard_normal(static_cast<Eigen::Index>(sys.n()));
  }
  return next;
}

Dataset generate_dataset(const ParametricSystem& sys, const Box& state_box, const Box& input_box,
                         std::size_t n_samples, NoiseSource& noise) {
  if (n_samples == 0) throw ArgumentError("generate_dataset: N must be >= 1");
  const auto n = static_cast<Eigen::Index>(sys.n());
  const auto p = static_cast<Eigen::Index>(sys.p());
  if (state_box.dim() != n || input_box.dim() != p) {
    throw ArgumentError("generate_dataset: box dimensions do not match the system");
  }
  if (!((state_box.hi - state_box.lo).array() > 0).all() ||
      !((input_box.hi - input_box.lo).array() > 0).all()) {
    throw ArgumentError("generate_dataset: sampling boxes must be non-degenerate");
  }
  const auto rows = static_cast<Eigen::Index>(n_samples);
  Dataset ds{Matrix(rows, n), Matrix(rows, p), Matrix(rows, n)};
  for (Eigen::Index i = 0; i < rows; ++i) {
    const Vector x = noise.uniform(state_box);
    const Vector u = noise.uniform(input_box);
    ds.x.row(i) = x.transpose();
    ds.u.row(i) = u.transpose();
    ds.x_plus.row(i) = step(sys, x, u, noise).transpose();
  }
  return ds;
}

namespace {

void append_number(std::string& out, double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open '" + path.string() + "' for writing");
  const Eigen::Index n = ds.state_dim();
  const Eigen::Index p = ds.input_dim();
  std::string line;
  for (Eigen::Index i = 0; i < n; ++i) line += (i ? ",x" : "x") + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < p; ++i) line += ",u" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < n; ++i) line += ",xp" + std::to_string(i + 1);
  out << line << '\n';
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    line.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i) line.push_back(',');
      append_number(line, ds.x(r, i));
    }
    for (Eigen::Index i = 0; i < p; ++i) {
      line.push_back(',');
      append_number(line, ds.u(r, i));
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      line.push_back(',');
      append_number(line, ds.x_plus(r, i));
    }
    line.push_back('\n');
    out << line;
  }
  if (!out) throw ArgumentError("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string() + ":1: missing header");
  const auto header = split_csv(line);
  Eigen::Index n = 0;
  Eigen::Index p = 0;
  Eigen::Index np = 0;
  for (const auto& raw : header) {
    const std::string h = trim(raw);
    const auto expect = [&](const std::string& name) {
      if (h != name) {
        throw ParseError(path.string() + ":1: unexpected header column '" + h + "', expected '" +
                         name + "'");
      }
    };
    if (p == 0 && np == 0 && h.rfind("xp", 0) != 0 && h.rfind("x", 0) == 0) {
      expect("x" + std::to_string(++n));
    } else if (np == 0 && h.rfind("u", 0) == 0) {
      expect("u" + std::to_string(++p));
    } else {
      expect("xp" + std::to_string(++np));
    }
  }
  if (n == 0 || np != n) throw ParseError(path.string() + ":1: header needs x1..xn,u1..up,xp1..xpn");

  const Eigen::Index width = 2 * n + p;
  std::vector<double> values;
  std::size_t line_no = 1;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv(line);
    if (static_cast<Eigen::Index>(fields.size()) != width) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(width) + " fields, got " + std::to_string(fields.size()));
    }
    for (const auto& raw : fields) {
      const std::string f = trim(raw);
      double v = 0.0;
      const char* first = f.data();
      const char* last = f.data() + f.size();
      if (!f.empty() && *first == '+') ++first;
      auto [ptr, ec] = std::from_chars(first, last, v);
      if (f.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + f + "'");
      }
      values.push_back(v);
    }
    ++rows;
  }
  Dataset ds{Matrix(rows, n), Matrix(rows, p), Matrix(rows, n)};
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double* row = values.data() + r * width;
    for (Eigen::Index i = 0; i < n; ++i) ds.x(r, i) = row[i];
    for (Eigen::Index i = 0; i < p; ++i) ds.u(r, i) = row[n + i];
    for (Eigen::Index i = 0; i < n; ++i) ds.x_plus(r, i) = row[n + p + i];
  }
  return ds;
}

RegionMap make_region_map(std::vector<Region> regions, Box bounds) {
  if (regions.size() > 31) throw ArgumentError("at most 31 regions are supported");
  std::set<std::string> names;
  for (const auto& r : regions) {
    if (r.name.empty()) throw ArgumentError("region names must be non-empty");
    if (!names.insert(r.name).second) throw ArgumentError("duplicate region name '" + r.name + "'");
    if (r.box.dim() != bounds.dim()) {
      throw ArgumentError("region '" + r.name + "' has the wrong dimension");
    }
    make_box(r.box.lo, r.box.hi);
  }
  make_box(bounds.lo, bounds.hi);
  return RegionMap{std::move(regions), std::move(bounds)};
}

LetterMask label_mask(const RegionMap& map, const Vector& y) {
  LetterMask mask = 0;
  for (std::size_t i = 0; i < map.regions.size(); ++i) {
    if (map.regions[i].box.contains(y)) mask |= LetterMask{1} << i;
  }
  return mask;
}

Letter mask_to_letter(const RegionMap& map, LetterMask mask) {
  Letter letter;
  for (std::size_t i = 0; i < map.regions.size(); ++i) {
    if (mask & (LetterMask{1} << i)) letter.insert(map.regions[i].name);
  }
  return letter;
}

Letter label(const RegionMap& map, const Vector& y) { return mask_to_letter(map, label_mask(map, y)); }

std::vector<LetterMask> possible_masks(const RegionMap& map, const Vector& y, double eps) {
  if (eps < 0.0) throw ArgumentError("possible_letters: eps must be nonnegative");
  LetterMask decided = 0;
  std::vector<std::size_t> undecided;
  for (std::size_t i = 0; i < map.regions.size(); ++i) {
    const Box& box = map.regions[i].box;
    // Squared distance from y to the box; zero inside.
    const Vector below = (box.lo - y).cwiseMax(0.0);
    const Vector above = (y - box.hi).cwiseMax(0.0);
    const double dist2 = below.squaredNorm() + above.squaredNorm();
    const bool maybe_true = dist2 <= eps * eps;
    bool maybe_false = dist2 > 0.0;
    if (!maybe_false) {
      // Inside: the open complement is reached iff a face lies strictly within eps.
      const double margin = std::min((y - box.lo).minCoeff(), (box.hi - y).minCoeff());
      maybe_false = margin < eps;
    }
    if (maybe_true && maybe_false) {
      undecided.push_back(i);
    } else if (maybe_true) {
      decided |= LetterMask{1} << i;
    }
  }
  std::vector<LetterMask> out;
  out.reserve(std::size_t{1} << undecided.size());
  for (std::size_t combo = 0; combo < (std::size_t{1} << undecided.size()); ++combo) {
    LetterMask mask = decided;
    for (std::size_t b = 0; b < undecided.size(); ++b) {
      if (combo & (std::size_t{1} << b)) mask |= LetterMask{1} << undecided[b];
    }
    out.push_back(mask);
  }
  return out;
}

std::set<Letter> possible_letters(const RegionMap& map, const Vector& y, double eps) {
  std::set<Letter> out;
  for (LetterMask mask : possible_masks(map, y, eps)) out.insert(mask_to_letter(map, mask));
  return out;
}

}  // namespace stochsyn
