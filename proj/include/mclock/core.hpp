#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace mclock {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using RMatrix = Eigen::MatrixXd;

inline constexpr cplx kI{0.0, 1.0};

/// Bad user input: malformed config, out-of-range parameter, unsupported combination.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// The model is well-formed but a requested quantity is undefined for it
/// (e.g. a correlator normalised by a vanishing variance).
class ModelError : public std::domain_error {
 public:
  explicit ModelError(const std::string& what) : std::domain_error(what) {}
};

/// Integration or sampling left its accuracy envelope.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

enum class Basis { position, momentum };

inline const char* to_string(Basis b) {
  return b == Basis::position ? "position" : "momentum";
}

}  // namespace mclock
