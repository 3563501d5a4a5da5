#pragma once

#include <complex>
#include <cstddef>

#include <Eigen/Dense>

namespace magtomo {

using cplx = std::complex<double>;
using CMat = Eigen::MatrixXcd;
using CVec = Eigen::VectorXcd;
using RMat = Eigen::MatrixXd;
using RVec = Eigen::VectorXd;

inline constexpr double pi = 3.14159265358979323846;

}  // namespace magtomo
