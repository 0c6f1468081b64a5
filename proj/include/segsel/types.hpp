#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace segsel {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Vector<Scalar, Eigen::Dynamic>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Raster planes are row-major so that (row, col) indexing walks memory the
// same way the on-disk pixel streams do.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using PlaneF = Plane<float>;
using PlaneU8 = Plane<std::uint8_t>;
using MaskPlane = Plane<std::uint8_t>;  // 0/1 region masks

using VectorD = Vector<double>;
using MatrixD = Matrix<double>;

using AlgorithmId = std::string;

}  // namespace segsel
