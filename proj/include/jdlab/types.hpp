#pragma once

#include <Eigen/Core>

namespace jdlab {

/// Largest spatial dimension supported by the path simulator. Vectors and
/// matrices below are stack-allocated up to this size.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec zero_vec(int d) { return Vec::Zero(d); }

}  // namespace jdlab
