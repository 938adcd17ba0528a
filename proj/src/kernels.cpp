#include "latprobe/kernels.hpp"

#include <algorithm>

#include <omp.h>

#include "latprobe/errors.hpp"

namespace latprobe::kernels {

namespace {

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) y[j] += alpha * x[j];
}

void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::DimensionMismatch, what);
}

// out row i = sum_k a(i,k) * b row k
void matmul_rows(const Matrix& a, const Matrix& b, Matrix& out, std::size_t r0, std::size_t r1) {
  const std::size_t k = a.cols(), m = b.cols();
  for (std::size_t i = r0; i < r1; ++i) {
    double* o = out.row(i).data();
    const double* ai = a.row(i).data();
    for (std::size_t p = 0; p < k; ++p) axpy(ai[p], b.row(p).data(), o, m);
  }
}

// out row p (p in [p0,p1)) = sum_i a(i,p) * b row i
void matmul_tn_rows(const Matrix& a, const Matrix& b, Matrix& out, std::size_t p0, std::size_t p1) {
  const std::size_t n = a.rows(), m = b.cols();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a.row(i).data();
    const double* bi = b.row(i).data();
    for (std::size_t p = p0; p < p1; ++p) axpy(ai[p], bi, out.row(p).data(), m);
  }
}

void gemv_t_range(const Matrix& a, std::span<const double> y, Vector& out, std::size_t p0,
                  std::size_t p1) {
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.row(i).data();
    const double yi = y[i];
    for (std::size_t p = p0; p < p1; ++p) out[p] += ai[p] * yi;
  }
}

// Splits [0, n) into one contiguous block per OpenMP thread.
template <class Fn>
void for_blocks(std::size_t n, Fn&& fn) {
#pragma omp parallel
  {
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t chunk = (n + nt - 1) / nt;
    const std::size_t lo = std::min(n, t * chunk);
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo < hi) fn(lo, hi);
  }
}

}  // namespace

namespace ref {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  matmul_rows(a, b, out, 0, a.rows());
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check(a.rows() == b.rows(), "matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  matmul_tn_rows(a, b, out, 0, a.cols());
  return out;
}

Matrix gram(const Matrix& a) { return matmul_tn(a, a); }

Vector gemv_t(const Matrix& a, std::span<const double> y) {
  check(a.rows() == y.size(), "gemv_t: length mismatch");
  Vector out(a.cols(), 0.0);
  gemv_t_range(a, y, out, 0, a.cols());
  return out;
}

Vector gemv(const Matrix& a, std::span<const double> x) {
  check(a.cols() == x.size(), "gemv: length mismatch");
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
  return out;
}

}  // namespace ref

namespace par {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    matmul_rows(a, b, out, static_cast<std::size_t>(i), static_cast<std::size_t>(i) + 1);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  check(a.rows() == b.rows(), "matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for_blocks(a.cols(), [&](std::size_t p0, std::size_t p1) { matmul_tn_rows(a, b, out, p0, p1); });
  return out;
}

Matrix gram(const Matrix& a) { return matmul_tn(a, a); }

Vector gemv_t(const Matrix& a, std::span<const double> y) {
  check(a.rows() == y.size(), "gemv_t: length mismatch");
  Vector out(a.cols(), 0.0);
  for_blocks(a.cols(), [&](std::size_t p0, std::size_t p1) { gemv_t_range(a, y, out, p0, p1); });
  return out;
}

Vector gemv(const Matrix& a, std::span<const double> x) {
  check(a.cols() == x.size(), "gemv: length mismatch");
  Vector out(a.rows());
  const auto n = static_cast<std::ptrdiff_t>(a.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = dot(a.row(i), x);
  return out;
}

}  // namespace par

void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int max_threads() { return omp_get_max_threads(); }

}  // namespace latprobe::kernels
