#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "esrgcnn/error.hpp"
#include "esrgcnn/parallel.hpp"
#include "esrgcnn/tensor.hpp"

namespace esrgcnn {

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Valid output columns [lo, hi) for a horizontal tap offset dx in {-1, 0, 1}.
inline std::pair<std::size_t, std::size_t> tap_columns(long dx, std::size_t w) {
  const std::size_t lo = dx < 0 ? 1 : 0;
  const std::size_t hi = dx > 0 ? w - 1 : w;
  return {std::min(lo, w), hi};
}

// Unfolds one (c, h, w) sample into a (c*9, h*w) matrix with zero padding 1.
template <typename T>
void im2col3x3(const T* src, std::size_t channels, std::size_t h, std::size_t w, T* col) {
  const std::size_t hw = h * w;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = src + c * hw;
    for (std::size_t k = 0; k < 9; ++k) {
      const long dy = static_cast<long>(k / 3) - 1;
      const long dx = static_cast<long>(k % 3) - 1;
      const auto [lo, hi] = tap_columns(dx, w);
      T* row = col + (c * 9 + k) * hw;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        T* out = row + y * w;
        if (sy < 0 || sy >= static_cast<long>(h) || lo >= hi) {
          std::fill(out, out + w, T(0));
          continue;
        }
        const T* in = plane + static_cast<std::size_t>(sy) * w;
        std::fill(out, out + lo, T(0));
        std::copy(in + static_cast<long>(lo) + dx, in + static_cast<long>(hi) + dx, out + lo);
        std::fill(out + hi, out + w, T(0));
      }
    }
  }
}

// Adjoint of im2col3x3: scatters a (c*9, h*w) matrix back onto (c, h, w).
template <typename T>
void col2im3x3(const T* col, std::size_t channels, std::size_t h, std::size_t w, T* dst) {
  const std::size_t hw = h * w;
  std::fill(dst, dst + channels * hw, T(0));
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = dst + c * hw;
    for (std::size_t k = 0; k < 9; ++k) {
      const long dy = static_cast<long>(k / 3) - 1;
      const long dx = static_cast<long>(k % 3) - 1;
      const auto [lo, hi] = tap_columns(dx, w);
      const T* row = col + (c * 9 + k) * hw;
      for (std::size_t y = 0; y < h; ++y) {
        const long sy = static_cast<long>(y) + dy;
        if (sy < 0 || sy >= static_cast<long>(h)) continue;
        T* out = plane + static_cast<std::size_t>(sy) * w;
        const T* in = row + y * w;
        for (std::size_t x = lo; x < hi; ++x) out[static_cast<std::size_t>(static_cast<long>(x) + dx)] += in[x];
      }
    }
  }
}

}  // namespace detail

/// 3x3 convolution, stride 1, zero padding 1. Spatial size is preserved.
/// `weight` is (out, in, 3, 3); `bias` has `out` entries.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias) {
  if (x.c() != weight.c())
    detail::contract_fail("conv2d_forward: input has " + std::to_string(x.c()) +
                          " channels, kernel expects " + std::to_string(weight.c()));
  detail::require(x.h() > 0 && x.w() > 0, "conv2d_forward: zero-sized spatial dims");
  detail::require(weight.h() == 3 && weight.w() == 3, "conv2d_forward: kernel must be 3x3");
  detail::require(bias.size() == weight.n(), "conv2d_forward: bias length mismatch");

  const std::size_t cin = x.c(), cout = weight.n(), hw = x.h() * x.w();
  Tensor<T> out(x.n(), cout, x.h(), x.w());
  Eigen::Map<const detail::RowMatrix<T>> wm(weight.data(), cout, cin * 9);

  parallel_for(x.n(), [&](std::size_t n) {
    detail::RowMatrix<T> col(cin * 9, hw);
    detail::im2col3x3(x.data() + n * x.dims().sample(), cin, x.h(), x.w(), col.data());
    Eigen::Map<detail::RowMatrix<T>> om(out.data() + n * out.dims().sample(), cout, hw);
    om.noalias() = wm * col;
    for (std::size_t o = 0; o < cout; ++o) om.row(o).array() += bias[o];
  });
  return out;
}

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const ConvParams<T>& p) {
  return conv2d_forward(x, p.weight, std::span<const T>(p.bias));
}

template <typename T>
struct ConvGrads {
  Tensor<T> grad_x;
  Tensor<T> grad_w;
  std::vector<T> grad_b;
};

/// Exact adjoints of conv2d_forward with respect to input, weights and bias.
template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  detail::require(x.c() == weight.c(), "conv2d_backward: channel mismatch");
  const Dims expect{x.n(), weight.n(), x.h(), x.w()};
  if (grad_out.dims() != expect)
    detail::contract_fail("conv2d_backward: grad_out dims " + grad_out.dims().str() +
                          " != " + expect.str());

  const std::size_t cin = x.c(), cout = weight.n(), hw = x.h() * x.w();
  const std::size_t batch = x.n();
  ConvGrads<T> g{Tensor<T>(x.dims()), Tensor<T>(weight.dims()), std::vector<T>(cout, T(0))};
  Eigen::Map<const detail::RowMatrix<T>> wm(weight.data(), cout, cin * 9);

  // Per-sample partials, summed afterwards in sample order.
  std::vector<detail::RowMatrix<T>> gw_parts(batch);
  parallel_for(batch, [&](std::size_t n) {
    detail::RowMatrix<T> col(cin * 9, hw);
    detail::im2col3x3(x.data() + n * x.dims().sample(), cin, x.h(), x.w(), col.data());
    Eigen::Map<const detail::RowMatrix<T>> gm(grad_out.data() + n * grad_out.dims().sample(), cout,
                                              hw);
    gw_parts[n].noalias() = gm * col.transpose();
    col.noalias() = wm.transpose() * gm;
    detail::col2im3x3(col.data(), cin, x.h(), x.w(), g.grad_x.data() + n * x.dims().sample());
  });

  Eigen::Map<detail::RowMatrix<T>> gwm(g.grad_w.data(), cout, cin * 9);
  for (std::size_t n = 0; n < batch; ++n) gwm += gw_parts[n];
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      const T* row = grad_out.data() + grad_out.index(n, o, 0, 0);
      T acc = T(0);
      for (std::size_t i = 0; i < hw; ++i) acc += row[i];
      g.grad_b[o] += acc;
    }
  }
  return g;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& x, const ConvParams<T>& p, const Tensor<T>& grad_out) {
  detail::require(p.bias.size() == p.out_channels(), "conv2d_backward: bias length mismatch");
  return conv2d_backward(x, p.weight, grad_out);
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.dims());
  std::transform(x.vec().begin(), x.vec().end(), out.data(),
                 [](T v) { return v > T(0) ? v : T(0); });
  return out;
}

/// Gradient flows only where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  detail::require(x.dims() == grad_out.dims(), "relu_backward: dims mismatch");
  Tensor<T> out(x.dims());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.dims() != b.dims())
    detail::contract_fail("add: dims " + a.dims().str() + " vs " + b.dims().str());
  Tensor<T> out(a.dims());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
  detail::require(acc.dims() == b.dims(), "add_inplace: dims mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    detail::contract_fail("concat_channels: batch/spatial mismatch " + a.dims().str() + " vs " +
                          b.dims().str());
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t sa = a.dims().sample(), sb = b.dims().sample();
  for (std::size_t n = 0; n < a.n(); ++n) {
    T* dst = out.data() + n * out.dims().sample();
    std::copy_n(a.data() + n * sa, sa, dst);
    std::copy_n(b.data() + n * sb, sb, dst + sa);
  }
  return out;
}

/// Copies channels [begin, begin + count).
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require(begin <= x.c() && count <= x.c() - begin, "slice_channels: range out of bounds");
  Tensor<T> out(x.n(), count, x.h(), x.w());
  const std::size_t plane = x.dims().plane();
  for (std::size_t n = 0; n < x.n(); ++n)
    std::copy_n(x.data() + x.index(n, begin, 0, 0), count * plane,
                out.data() + n * out.dims().sample());
  return out;
}

/// Writes `src` into channels [begin, begin + src.c()) of `dst`, accumulating.
template <typename T>
void accumulate_into_channels(Tensor<T>& dst, const Tensor<T>& src, std::size_t begin) {
  detail::require(dst.n() == src.n() && dst.h() == src.h() && dst.w() == src.w() &&
                      begin + src.c() <= dst.c(),
                  "accumulate_into_channels: shape mismatch");
  const std::size_t len = src.dims().sample();
  for (std::size_t n = 0; n < src.n(); ++n) {
    T* d = dst.data() + dst.index(n, begin, 0, 0);
    const T* s = src.data() + n * len;
    for (std::size_t i = 0; i < len; ++i) d[i] += s[i];
  }
}

/// Returns (channels [0, k), channels [k, c)).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, std::size_t k) {
  if (k > x.c())
    detail::contract_fail("split_channels: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(x.c()) + " channels");
  return {slice_channels(x, 0, k), slice_channels(x, k, x.c() - k)};
}

/// (n, c*r*r, h, w) -> (n, c, h*r, w*r).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, std::size_t r) {
  detail::require(r >= 1, "pixel_shuffle: scale must be >= 1");
  if (x.c() % (r * r) != 0)
    detail::contract_fail("pixel_shuffle: " + std::to_string(x.c()) +
                          " channels not divisible by " + std::to_string(r * r));
  const std::size_t oc = x.c() / (r * r);
  Tensor<T> out(x.n(), oc, x.h() * r, x.w() * r);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < oc; ++o)
      for (std::size_t dy = 0; dy < r; ++dy)
        for (std::size_t dx = 0; dx < r; ++dx) {
          const std::size_t ic = o * r * r + dy * r + dx;
          for (std::size_t y = 0; y < x.h(); ++y)
            for (std::size_t xx = 0; xx < x.w(); ++xx)
              out(n, o, y * r + dy, xx * r + dx) = x(n, ic, y, xx);
        }
  return out;
}

/// Inverse rearrangement of pixel_shuffle; also its adjoint.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, std::size_t r) {
  detail::require(r >= 1, "pixel_unshuffle: scale must be >= 1");
  if (x.h() % r != 0 || x.w() % r != 0)
    detail::contract_fail("pixel_unshuffle: spatial dims not divisible by scale");
  const std::size_t h = x.h() / r, w = x.w() / r;
  Tensor<T> out(x.n(), x.c() * r * r, h, w);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t o = 0; o < x.c(); ++o)
      for (std::size_t dy = 0; dy < r; ++dy)
        for (std::size_t dx = 0; dx < r; ++dx) {
          const std::size_t oc = o * r * r + dy * r + dx;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx)
              out(n, oc, y, xx) = x(n, o, y * r + dy, xx * r + dx);
        }
  return out;
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  Tensor<T> out(x.dims());
  std::transform(x.vec().begin(), x.vec().end(), out.data(),
                 [=](T v) { return std::clamp(v, lo, hi); });
  return out;
}

// ---------------------------------------------------------------------------
// Bicubic resampling

/// Keys cubic convolution kernel with a = -0.5.
inline double cubic_kernel(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return (((t - 5.0) * t + 8.0) * t - 4.0) * a;
  return 0.0;
}

/// Taps for one output coordinate along one axis: source indices (already
/// clamped to the input range) and normalized weights.
struct ResampleTaps {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

inline std::vector<ResampleTaps> bicubic_taps(std::size_t in_size, std::size_t out_size) {
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  // Downscaling stretches the kernel by the scale ratio (antialiasing).
  const double stretch = std::max(scale, 1.0);
  const double support = 2.0 * stretch;
  std::vector<ResampleTaps> taps(out_size);
  for (std::size_t d = 0; d < out_size; ++d) {
    const double center = (static_cast<double>(d) + 0.5) * scale - 0.5;
    const long lo = static_cast<long>(std::floor(center - support));
    const long hi = static_cast<long>(std::ceil(center + support));
    ResampleTaps& t = taps[d];
    double total = 0.0;
    for (long i = lo; i <= hi; ++i) {
      const double wgt = cubic_kernel((static_cast<double>(i) - center) / stretch);
      if (wgt == 0.0) continue;
      const long clamped = std::clamp<long>(i, 0, static_cast<long>(in_size) - 1);
      t.index.push_back(static_cast<std::size_t>(clamped));
      t.weight.push_back(wgt);
      total += wgt;
    }
    for (double& wgt : t.weight) wgt /= total;
  }
  return taps;
}

/// Separable bicubic resize of every (n, c) plane to out_h x out_w.
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
  detail::require(out_h >= 1 && out_w >= 1, "bicubic_resize: output dims must be >= 1");
  detail::require(x.h() >= 1 && x.w() >= 1, "bicubic_resize: input dims must be >= 1");
  const auto tx = bicubic_taps(x.w(), out_w);
  const auto ty = bicubic_taps(x.h(), out_h);
  Tensor<T> out(x.n(), x.c(), out_h, out_w);
  std::vector<double> rows(x.h() * out_w);
  for (std::size_t n = 0; n < x.n(); ++n) {
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = x.data() + x.index(n, c, 0, 0);
      for (std::size_t y = 0; y < x.h(); ++y) {
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const ResampleTaps& t = tx[ox];
          double acc = 0.0;
          for (std::size_t k = 0; k < t.index.size(); ++k)
            acc += t.weight[k] * static_cast<double>(src[y * x.w() + t.index[k]]);
          rows[y * out_w + ox] = acc;
        }
      }
      T* dst = out.data() + out.index(n, c, 0, 0);
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const ResampleTaps& t = ty[oy];
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          double acc = 0.0;
          for (std::size_t k = 0; k < t.index.size(); ++k)
            acc += t.weight[k] * rows[t.index[k] * out_w + ox];
          dst[oy * out_w + ox] = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

}  // namespace esrgcnn
