#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "bonekin/errors.hpp"

namespace bonekin {

// Dense row-major double tensor, rank 1..3.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(count(shape), 0.0);
  }
  Tensor(std::vector<int> s, std::vector<double> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != count(shape))
      throw ShapeError("tensor data size does not match shape");
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  double& at(int i) { return data[static_cast<size_t>(i)]; }
  double at(int i) const { return data[static_cast<size_t>(i)]; }
  // rank-2 access [r, c]
  double& at(int r, int c) { return data[static_cast<size_t>(r) * dim(1) + c]; }
  double at(int r, int c) const {
    return data[static_cast<size_t>(r) * dim(1) + c];
  }
  // rank-3 access [b, c, t]
  double& at(int b, int c, int t) {
    return data[(static_cast<size_t>(b) * dim(1) + c) * dim(2) + t];
  }
  double at(int b, int c, int t) const {
    return data[(static_cast<size_t>(b) * dim(1) + c) * dim(2) + t];
  }
};

inline bool same_shape(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

}  // namespace bonekin
