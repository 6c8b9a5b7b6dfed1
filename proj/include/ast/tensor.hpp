#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "ast/error.hpp"

namespace ast {

// Dense row-major tensor. Almost everything in this codebase is a matrix
// (rows x cols) or a vector, so 2-D accessors are first class.
template <class T>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    require(static_cast<int64_t>(data.size()) == numel_of(shape), "tensor",
            "data length does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor row(std::initializer_list<T> vals) {
    Tensor t;
    t.shape = {1, static_cast<int64_t>(vals.size())};
    t.data.assign(vals.begin(), vals.end());
    return t;
  }
  static Tensor vec(std::initializer_list<T> vals) {
    Tensor t;
    t.shape = {static_cast<int64_t>(vals.size())};
    t.data.assign(vals.begin(), vals.end());
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }

  T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  const T& at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
  T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }
  T* row_ptr(int64_t r) { return data.data() + r * cols(); }
  const T* row_ptr(int64_t r) const { return data.data() + r * cols(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <class T>
inline bool operator==(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape && a.data == b.data;
}

template <class T>
inline double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape == b.shape, "tensor", "shape mismatch in max_abs_diff");
  double m = 0;
  for (size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace ast
