#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace offpol {

// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 tensors.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative shape");
  }
  Tensor(int r, int c, std::vector<double> data) : rows(r), cols(c), v(std::move(data)) {
    if (static_cast<size_t>(r) * c != v.size())
      throw std::invalid_argument("Tensor: data size does not match shape");
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double x) {
    Tensor t(r, c);
    std::fill(t.v.begin(), t.v.end(), x);
    return t;
  }
  static Tensor row_vector(std::vector<double> data) {
    const int n = static_cast<int>(data.size());
    return Tensor(1, n, std::move(data));
  }
  static Tensor scalar(double x) { return Tensor(1, 1, {x}); }

  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

  int size() const { return rows * cols; }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }

  void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

}  // namespace offpol
