#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "isgan/error.hpp"

namespace isgan {

/// Rank-4 array in (batch, channels, height, width) layout, contiguous row-major.
template <class T>
struct Tensor {
  std::array<int, 4> shape{0, 0, 0, 0};
  std::vector<T> v;

  Tensor() = default;
  Tensor(int n, int c, int h, int w) : shape{n, c, h, w}, v(static_cast<size_t>(n) * c * h * w, T(0)) {}

  static Tensor zeros(int n, int c, int h, int w) { return Tensor(n, c, h, w); }
  static Tensor zeros_like(const Tensor& o) { return Tensor(o.shape[0], o.shape[1], o.shape[2], o.shape[3]); }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  int batch() const { return shape[0]; }
  int channels() const { return shape[1]; }
  int height() const { return shape[2]; }
  int width() const { return shape[3]; }

  T& at(int n, int c, int y, int x) {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  T at(int n, int c, int y, int x) const {
    return v[((static_cast<size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }

  T* plane(int n, int c) { return v.data() + (static_cast<size_t>(n) * shape[1] + c) * shape[2] * shape[3]; }
  const T* plane(int n, int c) const {
    return v.data() + (static_cast<size_t>(n) * shape[1] + c) * shape[2] * shape[3];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape[0], shape[1], shape[2], shape[3]);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

inline std::string shape_str(const std::array<int, 4>& s) {
  return "(" + std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," +
         std::to_string(s[3]) + ")";
}

template <class T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    fail(ErrorCode::ShapeMismatch,
         std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace isgan
