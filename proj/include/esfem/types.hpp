#pragma once

#include <Eigen/Dense>

namespace esfem {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

} // namespace esfem
