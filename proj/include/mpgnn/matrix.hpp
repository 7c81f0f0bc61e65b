#pragma once

#include <Eigen/Core>

namespace mpgnn {

// Row-major so per-node / per-edge rows are contiguous for gathers and scatters.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = Eigen::VectorXd;

}  // namespace mpgnn
