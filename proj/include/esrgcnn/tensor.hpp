#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "esrgcnn/error.hpp"

namespace esrgcnn {

/// Extents of an NCHW tensor. `w` varies fastest in memory, then `h`, `c`, `n`.
struct Dims {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t count() const noexcept { return n * c * h * w; }
  constexpr std::size_t plane() const noexcept { return h * w; }
  constexpr std::size_t sample() const noexcept { return c * h * w; }

  friend constexpr bool operator==(const Dims&, const Dims&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

/// Dense 4-D NCHW array. A plain value type: copies are deep.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T(0)) : dims_(dims), data_(dims.count(), fill) {}
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w, T fill = T(0))
      : Tensor(Dims{n, c, h, w}, fill) {}
  Tensor(Dims dims, std::vector<T> data) : dims_(dims), data_(std::move(data)) {
    detail::require(data_.size() == dims_.count(), "Tensor: data length does not match dims");
  }

  const Dims& dims() const noexcept { return dims_; }
  std::size_t n() const noexcept { return dims_.n; }
  std::size_t c() const noexcept { return dims_.c; }
  std::size_t h() const noexcept { return dims_.h; }
  std::size_t w() const noexcept { return dims_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& vec() noexcept { return data_; }
  const std::vector<T>& vec() const noexcept { return data_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return ((n * dims_.c + c) * dims_.h + y) * dims_.w + x;
  }
  T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[index(n, c, y, x)];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[index(n, c, y, x)];
  }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  Dims dims_{};
  std::vector<T> data_;
};

/// Weights of one 3x3 convolution: `weight` is (out, in, 3, 3), `bias` has `out` entries.
template <typename T>
struct ConvParams {
  Tensor<T> weight;
  std::vector<T> bias;

  ConvParams() = default;
  ConvParams(std::size_t in_channels, std::size_t out_channels)
      : weight(out_channels, in_channels, 3, 3), bias(out_channels, T(0)) {}

  std::size_t in_channels() const noexcept { return weight.c(); }
  std::size_t out_channels() const noexcept { return weight.n(); }
  std::size_t weight_count() const noexcept { return weight.size(); }

  template <typename U>
  ConvParams<U> cast() const {
    ConvParams<U> out;
    out.weight = weight.template cast<U>();
    out.bias.assign(bias.begin(), bias.end());
    return out;
  }

  friend bool operator==(const ConvParams&, const ConvParams&) = default;
};

template <typename T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.dims());
}

}  // namespace esrgcnn
