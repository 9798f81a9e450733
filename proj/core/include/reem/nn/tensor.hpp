#pragma once

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace reem::nn {

using Vec = std::vector<double>;

/// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  static Mat zeros(std::size_t r, std::size_t c) {
    Mat m;
    m.rows = r;
    m.cols = c;
    m.data.assign(r * c, 0.0);
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
};

/// y = W x
inline Vec matvec(const Mat& w, const Vec& x) {
  Vec y(w.rows, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    double acc = 0.0;
    const double* row = &w.data[r * w.cols];
    for (std::size_t c = 0; c < w.cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
  return y;
}

/// x = Wᵀ y
inline Vec matvec_transposed(const Mat& w, const Vec& y) {
  Vec x(w.cols, 0.0);
  for (std::size_t r = 0; r < w.rows; ++r) {
    const double* row = &w.data[r * w.cols];
    const double g = y[r];
    for (std::size_t c = 0; c < w.cols; ++c) x[c] += row[c] * g;
  }
  return x;
}

/// dW += dy ⊗ x
inline void add_outer(Mat& dw, const Vec& dy, const Vec& x) {
  for (std::size_t r = 0; r < dw.rows; ++r) {
    double* row = &dw.data[r * dw.cols];
    const double g = dy[r];
    for (std::size_t c = 0; c < dw.cols; ++c) row[c] += g * x[c];
  }
}

inline double dot(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

/// Mutable view of one named parameter array and its gradient buffer.
/// Blocks hand these out so the optimizer, the gradient checker, and the
/// checkpoint writer all see the same storage.
struct ParamView {
  std::string name;
  std::vector<double>* value = nullptr;
  std::vector<double>* grad = nullptr;
  std::vector<std::size_t> shape;

  std::size_t size() const { return value ? value->size() : 0; }
};

}  // namespace reem::nn
