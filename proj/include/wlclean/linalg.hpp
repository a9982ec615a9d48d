#pragma once

#include <Eigen/Dense>

namespace wlclean {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

}  // namespace wlclean
