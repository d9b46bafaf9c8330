#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace ccnn {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;
using RowMatrix = RowMatrixX<double>;

using Seed = std::uint64_t;

} // namespace ccnn
