#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ainv/error.hpp"

namespace ainv {

// Dense N-dimensional array, row-major with the last axis fastest.
// Invariant: product(shape) == data.size(), every shape entry positive.
template <class Real>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<Real> data;

  TensorT() = default;

  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(checked_numel(shape)), Real(0));
  }

  TensorT(std::vector<int64_t> s, std::vector<Real> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (checked_numel(shape) != static_cast<int64_t>(data.size()))
      throw DimensionError("tensor data length does not match shape product");
  }

  static TensorT zeros(std::vector<int64_t> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int64_t> s, Real value) {
    TensorT t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), value);
    return t;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  int64_t dim(int i) const {
    if (i < 0 || i >= rank()) throw DimensionError("tensor axis out of range");
    return shape[static_cast<size_t>(i)];
  }

  Real* ptr() { return data.data(); }
  const Real* ptr() const { return data.data(); }

  Real& operator[](size_t i) { return data[i]; }
  const Real& operator[](size_t i) const { return data[i]; }

  // Reinterprets the buffer under a new shape of equal element count.
  TensorT& reshape(std::vector<int64_t> s) {
    if (checked_numel(s) != numel())
      throw DimensionError("reshape changes element count");
    shape = std::move(s);
    return *this;
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (const Real v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  static int64_t checked_numel(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d <= 0) throw DimensionError("tensor dimensions must be positive");
      n *= d;
    }
    return n;
  }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <class Real>
std::string shape_string(const TensorT<Real>& t) {
  std::string s = "(";
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.dim(i));
  }
  return s + ")";
}

template <class Real>
void require_rank(const TensorT<Real>& t, int r, const char* what) {
  if (t.rank() != r)
    throw DimensionError(std::string(what) + ": expected rank " +
                         std::to_string(r) + ", got " + shape_string(t));
}

}  // namespace ainv
