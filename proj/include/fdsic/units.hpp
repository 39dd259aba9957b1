#pragma once
// Unit conversions and the error vocabulary shared by every module.

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fdsic {

using cd = std::complex<double>;
using cvec = Eigen::VectorXcd;
using cmat = Eigen::MatrixXcd;
using rvec = Eigen::VectorXd;
using rmat = Eigen::MatrixXd;

struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
// Input is well-formed but numerically degenerate (e.g. singular covariance).
struct DegenerateInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidState : std::logic_error {
  using std::logic_error::logic_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// value_dB = 10*log10(linear). Powers are in mW internally.
inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) {
  return lin > 0.0 ? 10.0 * std::log10(lin) : -kInf;
}

inline double norm2(const cvec& v) { return v.squaredNorm(); }

}  // namespace fdsic
