#pragma once

// Dense products used by the regression and MLP code paths.
//
// `ref` holds plain serial loops; `par` holds the OpenMP versions. Both
// variants partition work by output row and accumulate every output element
// in the same order, so `par` results are bit-identical to `ref` for any
// thread count. The rest of the library calls `par`; tests check it against
// `ref` and bench/ measures the speedup.

#include <span>

#include "latprobe/matrix.hpp"

namespace latprobe::kernels {

namespace ref {

/// a (n x k) * b (k x m)
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T (k x n) * b (n x m), a is n x k
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a^T a
Matrix gram(const Matrix& a);
/// a^T y
Vector gemv_t(const Matrix& a, std::span<const double> y);
/// a x
Vector gemv(const Matrix& a, std::span<const double> x);

}  // namespace ref

namespace par {

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix gram(const Matrix& a);
Vector gemv_t(const Matrix& a, std::span<const double> y);
Vector gemv(const Matrix& a, std::span<const double> x);

}  // namespace par

/// Sets the OpenMP thread count used by `par` and by the task-parallel loops
/// elsewhere in the library. n <= 0 leaves the runtime default.
void set_threads(int n);
int max_threads();

}  // namespace latprobe::kernels
