#include "lotcrs/mat.hpp"

#include <cassert>
#include <cmath>

#include "lotcrs/errors.hpp"

namespace lotcrs {

Mat matmul(const Mat& A, const Mat& B) {
  assert(A.cols == B.rows);
  Mat C(A.rows, B.cols);
  for (int i = 0; i < A.rows; ++i) {
    for (int k = 0; k < A.cols; ++k) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      const double* brow = B.a.data() + static_cast<std::size_t>(k) * B.cols;
      double* crow = C.a.data() + static_cast<std::size_t>(i) * C.cols;
      for (int j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return C;
}

Mat matmul_nt(const Mat& A, const Mat& B) {
  assert(A.cols == B.cols);
  Mat C(A.rows, B.rows);
  for (int i = 0; i < A.rows; ++i) {
    for (int j = 0; j < B.rows; ++j) {
      C(i, j) = dot(A.row(i), B.row(j));
    }
  }
  return C;
}

Mat matmul_tn(const Mat& A, const Mat& B) {
  assert(A.rows == B.rows);
  Mat C(A.cols, B.cols);
  for (int k = 0; k < A.rows; ++k) {
    const double* arow = A.a.data() + static_cast<std::size_t>(k) * A.cols;
    const double* brow = B.a.data() + static_cast<std::size_t>(k) * B.cols;
    for (int i = 0; i < A.cols; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = C.a.data() + static_cast<std::size_t>(i) * C.cols;
      for (int j = 0; j < B.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return C;
}

void axpy(Mat& Y, double alpha, const Mat& X) {
  assert(Y.rows == X.rows && Y.cols == X.cols);
  for (std::size_t i = 0; i < Y.a.size(); ++i) Y.a[i] += alpha * X.a[i];
}

void axpy(std::span<double> y, double alpha, std::span<const double> x) {
  assert(y.size() == x.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double cosine(std::span<const double> x, std::span<const double> y) {
  const double nx = norm(x);
  const double ny = norm(y);
  if (nx == 0.0 || ny == 0.0) {
    throw NumericError("cosine: zero-norm vector");
  }
  return dot(x, y) / (nx * ny);
}

void softmax_inplace(std::span<double> x) {
  if (x.empty()) return;
  double mx = x[0];
  for (double v : x) mx = std::max(mx, v);
  double z = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : x) v /= z;
}

void softmax_backward(std::span<const double> p, std::span<const double> g,
                      std::span<double> dz) {
  assert(p.size() == g.size() && p.size() == dz.size());
  double gp = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) gp += g[i] * p[i];
  for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (g[i] - gp);
}

bool all_finite(const Mat& m) {
  for (double v : m.a) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace lotcrs
