#pragma once

#include <Eigen/Dense>

#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace blasso {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
/// A point of the parameter domain (d coordinates).
using Point = Eigen::VectorXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// A position lies outside the model's domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Normalized feature evaluated where the raw feature vector vanishes.
class DegenerateFeatureError : public Error {
 public:
  using Error::Error;
};

/// The curvature-corrected normal matrix is numerically singular, which
/// happens when the observation sits on (or near) the degenerate set where
/// the solution path is not differentiable.
class SingularMError : public Error {
 public:
  SingularMError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

/// Certificate values sit within tolerance of 1 without isolated contact points.
class DegenerateCertificateError : public Error {
 public:
  using Error::Error;
};

/// A validation oracle could not complete one of its inner solves.
class OracleFailure : public Error {
 public:
  using Error::Error;
};

inline void log_warning(const std::string& msg) {
  std::clog << "[blasso] warning: " << msg << '\n';
}

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double sign_of(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace blasso
