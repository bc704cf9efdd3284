#pragma once

#include <Eigen/Core>

#include "moil/tensor.hpp"

namespace moil::detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, Eigen::Unaligned, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, Eigen::Unaligned, Eigen::OuterStride<>>;
using VectorMap = Eigen::Map<Eigen::RowVectorXd>;
using ConstVectorMap = Eigen::Map<const Eigen::RowVectorXd>;

/// View of a tensor as [rows x cols] with cols = last dimension.
inline MatrixMap as_matrix(Tensor& t) {
    return {t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline ConstMatrixMap as_matrix(const Tensor& t) {
    return {t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
/// View of a 2-D parameter tensor as [dim0 x dim1].
inline MatrixMap as_matrix2(Tensor& t) {
    return {t.data.data(), static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1])};
}
inline ConstMatrixMap as_matrix2(const Tensor& t) {
    return {t.data.data(), static_cast<Eigen::Index>(t.shape[0]), static_cast<Eigen::Index>(t.shape[1])};
}
inline VectorMap as_vector(Tensor& t) { return {t.data.data(), static_cast<Eigen::Index>(t.size())}; }
inline ConstVectorMap as_vector(const Tensor& t) {
    return {t.data.data(), static_cast<Eigen::Index>(t.size())};
}

/// out[c] += sum over rows of m[r, c], accumulated row by row in fixed order.
inline void add_column_sums(Tensor& out, const Tensor& m) {
    const std::size_t rows = m.rows(), cols = m.cols();
    double* dst = out.data.data();
    const double* src = m.data.data();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) dst[c] += src[r * cols + c];
    }
}

}  // namespace moil::detail
