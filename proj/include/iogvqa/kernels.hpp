#pragma once

#include "iogvqa/matrix.hpp"

// Dense kernels used by the autograd ops. The default entry points are
// OpenMP-parallel over output rows; every output element is still reduced by a
// single thread in ascending index order, so results do not depend on the
// thread count. The `reference` namespace keeps plain serial loops that the
// tests and benchmarks compare against.

namespace iog::kernels {

/// out = a * b
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);
/// out += a^T * b
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
/// out += a * b^T
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);

/// Row-wise softmax in place. Entries equal to -inf get exactly zero weight.
void softmax_rows(Matrix& m);

/// Number of threads the parallel kernels will use.
int max_threads();

namespace reference {
void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);
void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);
void softmax_rows(Matrix& m);
}  // namespace reference

}  // namespace iog::kernels
