#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "attrenh/errors.hpp"

namespace attrenh {

/// NCHW dimensions. Vectors are stored as (N, C, 1, 1).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 1 || shape.c < 1 || shape.h < 1 || shape.w < 1) {
      throw ArgumentError("tensor dimensions must be >= 1, got " + shape.str());
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& at(int n, int c, int h, int w) { return data_[index(n, c, h, w)]; }
  const T& at(int n, int c, int h, int w) const { return data_[index(n, c, h, w)]; }

  /// Pointer to the start of sample n.
  T* sample(int n) { return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane(); }
  const T* sample(int n) const {
    return data_.data() + static_cast<std::size_t>(n) * shape_.c * shape_.plane();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  /// Reinterpret with the same element count.
  void reshape(Shape s) {
    if (s.numel() != data_.size()) {
      throw ArgumentError("reshape " + shape_.str() + " -> " + s.str() + " changes element count");
    }
    shape_ = s;
  }

  Tensor& operator+=(const Tensor& o) {
    if (!(o.shape_ == shape_)) throw ArgumentError("shape mismatch " + shape_.str() + " vs " + o.shape_.str());
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

/// Copy rows [row0, row0 + rows) of every sample/channel.
template <typename T>
Tensor<T> crop_rows(const Tensor<T>& x, int row0, int rows) {
  const Shape s = x.shape();
  if (row0 < 0 || rows < 1 || row0 + rows > s.h) {
    throw ArgumentError("row crop [" + std::to_string(row0) + "," + std::to_string(row0 + rows) +
                        ") outside height " + std::to_string(s.h));
  }
  Tensor<T> out({s.n, s.c, rows, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      std::copy_n(&x.at(n, c, row0, 0), static_cast<std::size_t>(rows) * s.w, &out.at(n, c, 0, 0));
  return out;
}

/// Gather samples by index into a new batch.
template <typename T>
Tensor<T> gather_samples(const Tensor<T>& x, std::span<const std::size_t> idx) {
  Shape s = x.shape();
  const std::size_t per = static_cast<std::size_t>(s.c) * s.plane();
  s.n = static_cast<int>(idx.size());
  Tensor<T> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(x.sample(static_cast<int>(idx[i])), per, out.sample(static_cast<int>(i)));
  return out;
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& x) {
  Tensor<To> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<To>(x[i]);
  return out;
}

}  // namespace attrenh
