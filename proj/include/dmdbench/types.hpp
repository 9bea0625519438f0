#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace dmdbench {

using Complex = std::complex<double>;
using ComplexList = std::vector<Complex>;

using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

}  // namespace dmdbench
