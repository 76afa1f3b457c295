#pragma once

#include <Eigen/Dense>

namespace flowobs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

}  // namespace flowobs
