#pragma once

#include <complex>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace warnlab {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on a model or argument does not hold.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The computation is numerically impossible (singular solve, unstable spectrum,
/// under-resolved grid).
class NumericalError : public Error {
 public:
  using Error::Error;
};

enum class Provenance { analytic, empirical };

inline const char* to_string(Provenance p) {
  return p == Provenance::analytic ? "analytic" : "empirical";
}

/// Largest absolute entry; the norm used for residual checks throughout.
template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

}  // namespace warnlab
