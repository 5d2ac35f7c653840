#pragma once

#include <Eigen/Dense>

namespace nerd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

/// One multivoxel pattern (z-scored amplitudes, one entry per voxel).
using VoxelState = Eigen::VectorXd;

}  // namespace nerd
