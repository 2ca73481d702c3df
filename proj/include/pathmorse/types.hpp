#pragma once

#include <Eigen/Dense>

#include <numbers>

namespace pathmorse {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;

}  // namespace pathmorse
