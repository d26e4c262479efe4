#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace stochsyn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file (dataset CSV, DFA JSON, cache, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Cholesky / eigendecomposition failure.
class LinAlgError : public Error {
 public:
  using Error::Error;
};

/// Non-finite feature evaluation or wrong feature count.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// A numeric invariant was violated beyond tolerance.
class InvariantError : public Error {
 public:
  using Error::Error;
};

/// Object used in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

class UnsupportedCovarianceError : public Error {
 public:
  using Error::Error;
};

/// DFA has no transition for the given letter and default self-loops are off.
class MissingTransitionError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned closed box [lo, hi] in R^d.
struct Box {
  Vector lo;
  Vector hi;

  Eigen::Index dim() const { return lo.size(); }
  bool contains(const Vector& y) const {
    return ((y.array() >= lo.array()) && (y.array() <= hi.array())).all();
  }
};

inline Box make_box(const Vector& lo, const Vector& hi) {
  if (lo.size() != hi.size()) throw ArgumentError("box bounds have different dimensions");
  for (Eigen::Index d = 0; d < lo.size(); ++d) {
    if (!(lo[d] <= hi[d])) throw ArgumentError("box has lo > hi in dimension " + std::to_string(d));
  }
  return Box{lo, hi};
}

}  // namespace stochsyn
