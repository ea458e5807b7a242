// Copyright (c) 2026, SDANet contributors
// SPDX-License-Identifier: Apache-2.0
//
// Row-major GEMM kernels on raw spans, backed by Eigen maps.
// All of them accumulate into C.

#pragma once

#include <cstddef>

#include <Eigen/Core>

namespace sdanet::detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

inline auto idx(std::size_t n) { return static_cast<Eigen::Index>(n); }

/// C[m x n] += A[m x k] * B[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  Map(c, idx(m), idx(n)).noalias() += MapC(a, idx(m), idx(k)) * MapC(b, idx(k), idx(n));
}

/// C[m x n] += A[m x k] * B[n x k]^T
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  Map(c, idx(m), idx(n)).noalias() += MapC(a, idx(m), idx(k)) * MapC(b, idx(n), idx(k)).transpose();
}

/// C[m x n] += A[k x m]^T * B[k x n]
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  Map(c, idx(m), idx(n)).noalias() += MapC(a, idx(k), idx(m)).transpose() * MapC(b, idx(k), idx(n));
}

}  // namespace sdanet::detail
