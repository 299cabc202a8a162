#pragma once

#include <Eigen/Core>

namespace gazescreen {

/// Row-major so that one sample is contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

}  // namespace gazescreen
