#include "iogvqa/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "iogvqa/errors.hpp"

namespace iog::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1u << 15;

void check_nn(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows())
    throw ShapeError("gemm_nn: " + a.shape_string() + " * " + b.shape_string());
}
void check_tn(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    throw ShapeError("gemm_tn: " + a.shape_string() + "^T * " + b.shape_string() + " -> " +
                     out.shape_string());
}
void check_nt(const Matrix& a, const Matrix& b, const Matrix& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows())
    throw ShapeError("gemm_nt: " + a.shape_string() + " * " + b.shape_string() + "^T -> " +
                     out.shape_string());
}

inline void softmax_row(double* row, std::size_t n) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
  if (!std::isfinite(mx)) {
    // fully masked row
    for (std::size_t j = 0; j < n; ++j) row[j] = 0.0;
    return;
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    row[j] = std::exp(row[j] - mx);
    sum += row[j];
  }
  for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nn(a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (out.rows() != m || out.cols() != n) out = Matrix(m, n);
  else out.fill(0.0);
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
  const bool par = m * n * k >= kParallelWork && m > 1;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    double* crow = C + i * n;
    const double* arow = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_tn(a, b, out);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
  const bool par = m * n * k >= kParallelWork && k > 1;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t p = 0; p < static_cast<std::ptrdiff_t>(k); ++p) {
    double* crow = C + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = A[i * k + p];
      if (av == 0.0) continue;
      const double* brow = B + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nt(a, b, out);
  const std::size_t m = a.rows(), n = a.cols(), k = b.rows();
  const double* A = a.data();
  const double* B = b.data();
  double* C = out.data();
  const bool par = m * n * k >= kParallelWork && m > 1;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(m); ++i) {
    const double* arow = A + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = B + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += arow[j] * brow[j];
      C[i * k + p] += s;
    }
  }
}

void softmax_rows(Matrix& m) {
  const std::size_t rows = m.rows(), cols = m.cols();
  const bool par = rows * cols >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(rows); ++r)
    softmax_row(m.data() + r * cols, cols);
}

namespace reference {

void gemm_nn(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nn(a, b);
  out = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < a.cols(); ++p) s += a(i, p) * b(p, j);
      out(i, j) = s;
    }
}

void gemm_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_tn(a, b, out);
  for (std::size_t p = 0; p < a.cols(); ++p)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, p) * b(i, j);
      out(p, j) += s;
    }
}

void gemm_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  check_nt(a, b, out);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t p = 0; p < b.rows(); ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols(); ++j) s += a(i, j) * b(p, j);
      out(i, p) += s;
    }
}

void softmax_rows(Matrix& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) softmax_row(m.data() + r * m.cols(), m.cols());
}

}  // namespace reference
}  // namespace iog::kernels
