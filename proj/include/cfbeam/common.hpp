#pragma once

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cfbeam {

using Index = Eigen::Index;
using cplx = std::complex<double>;

using VectorXd = Eigen::VectorXd;
using MatrixXd = Eigen::MatrixXd;
using VectorXcd = Eigen::VectorXcd;
using MatrixXcd = Eigen::MatrixXcd;

template <typename Scalar>
using CVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;
template <typename Scalar>
using CMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

// Bad configuration or inconsistent sizes supplied by the caller.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor or layer dimensions that do not compose.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A beam assignment that repeats a beam within one BS.
class InvalidAction : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Equivalent channel too rank deficient for zero forcing, even after loading.
class DegenerateChannel : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Pruning removed every action of a BS.
class InfeasibleActionSpace : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// NaN or divergence during training.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cfbeam
