#pragma once

#include <Eigen/Core>

namespace mpgemmfi {

// Column-major dense matrices: binary32 for everything the simulated unit
// touches, binary64 for reference teachers and difference arithmetic.
using Matrix32 = Eigen::MatrixXf;
using Matrix64 = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace mpgemmfi
