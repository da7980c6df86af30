#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "uniconv/errors.hpp"

namespace uniconv {

// Extents of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape4 {
  int b = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(b) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }

  bool operator==(const Shape4 &other) const = default;

  std::string to_string() const {
    std::ostringstream os;
    os << "(" << b << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

// Dense rank-4 tensor, row-major in (B,C,H,W) order. Values are immutable by
// convention once a tensor is handed to the tape; mutation is only used while
// assembling data.
template <typename T> class Tensor4 {
public:
  Tensor4() = default;

  explicit Tensor4(Shape4 shape) : shape_(shape), data_(check_shape(shape), T(0)) {}

  Tensor4(Shape4 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    std::size_t expect = check_shape(shape_);
    if (data_.size() != expect) {
      std::ostringstream os;
      os << "tensor data length " << data_.size() << " does not match shape "
         << shape_.to_string() << " (expected " << expect << ")";
      throw ShapeError(os.str());
    }
  }

  static Tensor4 filled(Shape4 shape, T value) {
    Tensor4 t(shape);
    for (auto &v : t.data_)
      v = value;
    return t;
  }

  const Shape4 &shape() const { return shape_; }
  std::size_t numel() const { return data_.size(); }

  T *data() { return data_.data(); }
  const T *data() const { return data_.data(); }
  std::vector<T> &vec() { return data_; }
  const std::vector<T> &vec() const { return data_; }

  std::size_t index(int b, int c, int h, int w) const {
    return ((static_cast<std::size_t>(b) * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }

  T &at(int b, int c, int h, int w) { return data_[index(b, c, h, w)]; }
  const T &at(int b, int c, int h, int w) const { return data_[index(b, c, h, w)]; }

  bool all_finite() const {
    for (const T &v : data_)
      if (!std::isfinite(static_cast<double>(v)))
        return false;
    return true;
  }

  // Elementwise casting copy, used when moving between f32 and f64 stacks.
  template <typename U> Tensor4<U> cast() const {
    Tensor4<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

private:
  static std::size_t check_shape(const Shape4 &s) {
    if (s.b <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0)
      throw ShapeError("tensor extents must be positive, got " + s.to_string());
    return s.numel();
  }

  Shape4 shape_;
  std::vector<T> data_;
};

} // namespace uniconv
