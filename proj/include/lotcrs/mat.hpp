#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace lotcrs {

// Dense row-major matrix of doubles. Small and boring on purpose: every
// training step runs through these loops, and gradient checks need
// bit-reproducible arithmetic.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const { return {a.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }

  std::size_t size() const { return a.size(); }
  void zero() { a.assign(a.size(), 0.0); }
};

// C = A * B
Mat matmul(const Mat& A, const Mat& B);
// C = A * B^T
Mat matmul_nt(const Mat& A, const Mat& B);
// C = A^T * B
Mat matmul_tn(const Mat& A, const Mat& B);

// Y += alpha * X (same shape).
void axpy(Mat& Y, double alpha, const Mat& X);
void axpy(std::span<double> y, double alpha, std::span<const double> x);

double dot(std::span<const double> x, std::span<const double> y);
double norm(std::span<const double> x);

// cos(x, y); throws NumericError on a zero-norm input.
double cosine(std::span<const double> x, std::span<const double> y);

// In-place, numerically stable softmax of x[0..n).
void softmax_inplace(std::span<double> x);

// dL/dz given softmax output p and dL/dp, written into dz (may alias dp).
// dz_k = p_k * (g_k - sum_i g_i p_i).
void softmax_backward(std::span<const double> p, std::span<const double> g,
                      std::span<double> dz);

bool all_finite(const Mat& m);

}  // namespace lotcrs
