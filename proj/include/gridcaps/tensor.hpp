#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "gridcaps/errors.hpp"

namespace gridcaps {

/// Dense row-major array. Batched activations use NHWC order.
template <class T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(count(shape), fill);
  }

  static std::size_t count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw StructuralError("negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t size() const { return data.size(); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
  /// Elements per leading index (per batch item).
  std::size_t stride0() const { return shape.empty() || shape[0] == 0 ? 0 : size() / static_cast<std::size_t>(shape[0]); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T& operator[](std::size_t i) { return data[i]; }
  T operator[](std::size_t i) const { return data[i]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  Tensor reshaped(std::vector<int> s) const {
    if (count(s) != size()) throw StructuralError("reshape: element count mismatch");
    Tensor out;
    out.shape = std::move(s);
    out.data = data;
    return out;
  }
  void reshape(std::vector<int> s) {
    if (count(s) != size()) throw StructuralError("reshape: element count mismatch");
    shape = std::move(s);
  }
  bool all_finite() const {
    for (const auto& v : data) {
      if (!(v == v) || v - v != T(0)) return false;
    }
    return true;
  }
};

std::string shape_string(const std::vector<int>& shape);

/// Trainable array with its gradient accumulator.
template <class T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> shape) : name(std::move(n)), value(shape), grad(shape) {}
  void zero_grad() { grad.fill(T(0)); }
};

}  // namespace gridcaps
