#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "esrgcnn/autodiff.hpp"
#include "esrgcnn/error.hpp"
#include "esrgcnn/ops.hpp"
#include "esrgcnn/tensor.hpp"

namespace esrgcnn {

struct ModelConfig {
  std::size_t channels = 64;  // s
  std::size_t num_gebs = 6;
  std::vector<int> scales{2, 3, 4};
  bool disable_wff = false;
  bool disable_last_cr = false;
  bool disable_distilling = false;
  // Takes precedence over disable_distilling when both are set.
  bool disable_group_split = false;
  std::uint64_t seed = 0;

  bool has_scale(int scale) const {
    return std::find(scales.begin(), scales.end(), scale) != scales.end();
  }

  std::size_t remaining() const noexcept { return 3 * channels / 4; }
  std::size_t distilling() const noexcept { return channels / 4; }

  void validate() const {
    detail::require(channels > 0 && channels % 4 == 0, "ModelConfig: channels must be a positive multiple of 4");
    detail::require(num_gebs >= 1, "ModelConfig: num_gebs must be >= 1");
    detail::require(!scales.empty(), "ModelConfig: scales must be non-empty");
    for (int s : scales)
      detail::require(s == 2 || s == 3 || s == 4, "ModelConfig: scales must be drawn from {2,3,4}");
    for (std::size_t i = 0; i < scales.size(); ++i)
      for (std::size_t j = i + 1; j < scales.size(); ++j)
        detail::require(scales[i] != scales[j], "ModelConfig: duplicate scale");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

enum class GebVariant { Grouped, NoDistilling, NoGroupSplit };

inline GebVariant geb_variant(const ModelConfig& cfg) {
  if (cfg.disable_group_split) return GebVariant::NoGroupSplit;
  if (cfg.disable_distilling) return GebVariant::NoDistilling;
  return GebVariant::Grouped;
}

/// Input/output channels of one convolution.
struct ConvShape {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weights() const noexcept { return in * out * 9; }
};

/// Shapes of the six convolutions in a GEB: conv_in, conv_mid[3], conv_tail[2].
inline std::array<ConvShape, 6> geb_shapes(const ModelConfig& cfg) {
  const std::size_t s = cfg.channels, r = cfg.remaining();
  switch (geb_variant(cfg)) {
    case GebVariant::Grouped: return {{{s, s}, {r, s}, {r, s}, {r, s}, {s, s}, {s, s}}};
    case GebVariant::NoDistilling: return {{{s, r}, {r, r}, {r, r}, {r, r}, {r, s}, {s, s}}};
    case GebVariant::NoGroupSplit: return {{{s, s}, {s, s}, {s, s}, {s, s}, {s, s}, {s, s}}};
  }
  return {};
}

template <typename T>
struct GebParams {
  ConvParams<T> conv_in;
  std::array<ConvParams<T>, 3> conv_mid;
  std::array<ConvParams<T>, 2> conv_tail;

  friend bool operator==(const GebParams&, const GebParams&) = default;
};

template <typename T>
struct ModelParams {
  ModelConfig config;
  ConvParams<T> head;
  std::vector<GebParams<T>> gebs;
  std::optional<ConvParams<T>> last_cr;
  std::optional<ConvParams<T>> up2;
  std::optional<ConvParams<T>> up3;
  std::optional<std::array<ConvParams<T>, 2>> up4;
  ConvParams<T> recon;

  /// Visits every convolution in a fixed order with its canonical name.
  template <typename Fn>
  void for_each_conv(Fn&& fn) {
    visit(*this, fn);
  }
  template <typename Fn>
  void for_each_conv(Fn&& fn) const {
    visit(*this, fn);
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    out.config = config;
    out.head = head.template cast<U>();
    for (const auto& g : gebs) {
      GebParams<U> gu;
      gu.conv_in = g.conv_in.template cast<U>();
      for (std::size_t i = 0; i < 3; ++i) gu.conv_mid[i] = g.conv_mid[i].template cast<U>();
      for (std::size_t i = 0; i < 2; ++i) gu.conv_tail[i] = g.conv_tail[i].template cast<U>();
      out.gebs.push_back(std::move(gu));
    }
    if (last_cr) out.last_cr = last_cr->template cast<U>();
    if (up2) out.up2 = up2->template cast<U>();
    if (up3) out.up3 = up3->template cast<U>();
    if (up4) out.up4 = std::array<ConvParams<U>, 2>{(*up4)[0].template cast<U>(), (*up4)[1].template cast<U>()};
    out.recon = recon.template cast<U>();
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn(std::string("head"), self.head);
    for (std::size_t j = 0; j < self.gebs.size(); ++j) {
      auto& g = self.gebs[j];
      const std::string p = "geb" + std::to_string(j) + ".";
      fn(p + "conv_in", g.conv_in);
      for (std::size_t i = 0; i < 3; ++i) fn(p + "conv_mid" + std::to_string(i), g.conv_mid[i]);
      for (std::size_t i = 0; i < 2; ++i) fn(p + "conv_tail" + std::to_string(i), g.conv_tail[i]);
    }
    if (self.last_cr) fn(std::string("last_cr"), *self.last_cr);
    if (self.up2) fn(std::string("up2"), *self.up2);
    if (self.up3) fn(std::string("up3"), *self.up3);
    if (self.up4) {
      fn(std::string("up4.0"), (*self.up4)[0]);
      fn(std::string("up4.1"), (*self.up4)[1]);
    }
    fn(std::string("recon"), self.recon);
  }
};

/// A named flat view of one trainable tensor.
template <typename T>
struct ParamView {
  std::string name;
  std::span<T> data;
};

/// Flat views `<conv>.weight` / `<conv>.bias` for every parameter, in visit order.
template <typename T>
std::vector<ParamView<T>> param_views(ModelParams<T>& params) {
  std::vector<ParamView<T>> out;
  params.for_each_conv([&](const std::string& name, ConvParams<T>& p) {
    out.push_back({name + ".weight", p.weight.span()});
    out.push_back({name + ".bias", std::span<T>(p.bias)});
  });
  return out;
}

/// Allocates every layer the configuration calls for, with zero weights.
template <typename T>
ModelParams<T> zero_model(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t s = cfg.channels;
  ModelParams<T> m;
  m.config = cfg;
  m.head = ConvParams<T>(3, s);
  const auto shapes = geb_shapes(cfg);
  for (std::size_t j = 0; j < cfg.num_gebs; ++j) {
    GebParams<T> g;
    g.conv_in = ConvParams<T>(shapes[0].in, shapes[0].out);
    for (std::size_t i = 0; i < 3; ++i) g.conv_mid[i] = ConvParams<T>(shapes[1 + i].in, shapes[1 + i].out);
    for (std::size_t i = 0; i < 2; ++i) g.conv_tail[i] = ConvParams<T>(shapes[4 + i].in, shapes[4 + i].out);
    m.gebs.push_back(std::move(g));
  }
  if (!cfg.disable_last_cr) m.last_cr = ConvParams<T>(s, s);
  if (cfg.has_scale(2)) m.up2 = ConvParams<T>(s, 4 * s);
  if (cfg.has_scale(3)) m.up3 = ConvParams<T>(s, 9 * s);
  if (cfg.has_scale(4)) m.up4 = std::array<ConvParams<T>, 2>{ConvParams<T>(s, 4 * s), ConvParams<T>(s, 4 * s)};
  m.recon = ConvParams<T>(s, 3);
  return m;
}

/// He-normal weights (std sqrt(2 / (in * 9))), zero biases, drawn from a
/// single mt19937_64 stream seeded by cfg.seed in visit order.
template <typename T>
ModelParams<T> init_model(const ModelConfig& cfg) {
  ModelParams<T> m = zero_model<T>(cfg);
  std::mt19937_64 rng(cfg.seed);
  m.for_each_conv([&](const std::string&, ConvParams<T>& p) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(p.in_channels() * 9)));
    for (T& v : p.weight.vec()) v = static_cast<T>(dist(rng));
  });
  return m;
}

// ---------------------------------------------------------------------------
// Forward graph, generic over EagerBuilder and Tape.

template <typename Builder, typename T>
typename Builder::Value geb_forward(Builder& b, const GebParams<T>& p, const typename Builder::Value& x,
                                    const ModelConfig& cfg, const std::string& name = "geb") {
  using V = typename Builder::Value;
  if (b.value(x).c() != cfg.channels)
    detail::contract_fail("geb_forward: input has " + std::to_string(b.value(x).c()) +
                          " channels, expected " + std::to_string(cfg.channels));
  const std::string pre = name + ".";
  V ef;
  if (geb_variant(cfg) == GebVariant::Grouped) {
    const std::size_t r = cfg.remaining(), d = cfg.distilling();
    V t = b.conv(x, pre + "conv_in", p.conv_in);
    V remain = b.slice(t, 0, r);
    V distil = b.slice(t, r, d);
    V fused = distil;
    for (std::size_t i = 0; i < 3; ++i) {
      V u = b.conv(b.relu(remain), pre + "conv_mid" + std::to_string(i), p.conv_mid[i]);
      remain = b.add(remain, b.slice(u, 0, r));
      distil = b.slice(u, r, d);
      if (!cfg.disable_wff) fused = b.add(fused, distil);
    }
    if (cfg.disable_wff) fused = distil;
    ef = b.relu(b.concat(remain, fused));
  } else {
    // Ungrouped variants keep only the residual chain of lead convolutions.
    V remain = b.conv(x, pre + "conv_in", p.conv_in);
    for (std::size_t i = 0; i < 3; ++i)
      remain = b.add(remain, b.conv(b.relu(remain), pre + "conv_mid" + std::to_string(i), p.conv_mid[i]));
    ef = b.relu(remain);
  }
  V df = b.relu(b.conv(b.relu(b.conv(ef, pre + "conv_tail0", p.conv_tail[0])), pre + "conv_tail1",
                       p.conv_tail[1]));
  return b.add(df, x);
}

/// Head, GEB chain and the last Conv+ReLU; the scale-independent trunk.
template <typename Builder, typename T>
typename Builder::Value trunk_forward(Builder& b, const ModelParams<T>& m, const typename Builder::Value& x) {
  using V = typename Builder::Value;
  if (b.value(x).c() != 3)
    detail::contract_fail("model_forward: expected a 3-channel input, got " + std::to_string(b.value(x).c()));
  V h = b.relu(b.conv(x, "head", m.head));
  for (std::size_t j = 0; j < m.gebs.size(); ++j) h = geb_forward(b, m.gebs[j], h, m.config, "geb" + std::to_string(j));
  if (m.last_cr) h = b.relu(b.conv(h, "last_cr", *m.last_cr));
  return h;
}

inline void check_valve(const ModelConfig& cfg, int scale) {
  if (!cfg.has_scale(scale)) throw ValveError("upsampling mode x" + std::to_string(scale) + " is not configured");
}

template <typename Builder, typename T>
typename Builder::Value upsample_forward(Builder& b, const ModelParams<T>& m, const typename Builder::Value& o_cr,
                                         int scale) {
  check_valve(m.config, scale);
  switch (scale) {
    case 2: return b.pixel_shuffle(b.conv(o_cr, "up2", *m.up2), 2);
    case 3: return b.pixel_shuffle(b.conv(o_cr, "up3", *m.up3), 3);
    case 4: {
      auto stage = b.pixel_shuffle(b.conv(o_cr, "up4.0", (*m.up4)[0]), 2);
      return b.pixel_shuffle(b.conv(stage, "up4.1", (*m.up4)[1]), 2);
    }
    default: break;
  }
  throw ValveError("unsupported scale " + std::to_string(scale));
}

template <typename Builder, typename T>
typename Builder::Value model_forward(Builder& b, const ModelParams<T>& m, const typename Builder::Value& x,
                                      int scale) {
  check_valve(m.config, scale);
  auto o_cr = trunk_forward(b, m, x);
  return b.conv(upsample_forward(b, m, o_cr, scale), "recon", m.recon);
}

/// Eager super-resolution of a (n, 3, h, w) batch.
template <typename T>
Tensor<T> model_forward(const ModelParams<T>& m, const Tensor<T>& x, int scale) {
  EagerBuilder<T> b;
  return model_forward(b, m, x, scale);
}

template <typename T>
Tensor<T> trunk_forward(const ModelParams<T>& m, const Tensor<T>& x) {
  EagerBuilder<T> b;
  return trunk_forward(b, m, x);
}

// ---------------------------------------------------------------------------
// Complexity accounting

enum class CountConvention {
  Actual,  // every weight and bias of the x2 path
  Nominal, // weights only, x2 upsampling conv counted as s -> s
};

struct LayerInfo {
  std::string name;
  ConvShape shape;
  std::size_t resolution = 1;  // output side length relative to the LR input
};

/// Convolutions executed for one forward pass at `scale`, in execution order.
inline std::vector<LayerInfo> layer_table(const ModelConfig& cfg, int scale) {
  cfg.validate();
  const std::size_t s = cfg.channels;
  std::vector<LayerInfo> out;
  out.push_back({"head", {3, s}, 1});
  const auto shapes = geb_shapes(cfg);
  static constexpr std::array<const char*, 6> names{"conv_in", "conv_mid0", "conv_mid1",
                                                    "conv_mid2", "conv_tail0", "conv_tail1"};
  for (std::size_t j = 0; j < cfg.num_gebs; ++j)
    for (std::size_t i = 0; i < 6; ++i) out.push_back({"geb" + std::to_string(j) + "." + names[i], shapes[i], 1});
  if (!cfg.disable_last_cr) out.push_back({"last_cr", {s, s}, 1});
  switch (scale) {
    case 2: out.push_back({"up2", {s, 4 * s}, 1}); break;
    case 3: out.push_back({"up3", {s, 9 * s}, 1}); break;
    case 4:
      out.push_back({"up4.0", {s, 4 * s}, 1});
      out.push_back({"up4.1", {s, 4 * s}, 2});
      break;
    default: throw ValveError("unsupported scale " + std::to_string(scale));
  }
  out.push_back({"recon", {s, 3}, static_cast<std::size_t>(scale)});
  return out;
}

inline std::uint64_t count_params(const ModelConfig& cfg, CountConvention convention) {
  std::uint64_t total = 0;
  for (const LayerInfo& l : layer_table(cfg, 2)) {
    if (convention == CountConvention::Nominal) {
      const ConvShape shape = l.name == "up2" ? ConvShape{cfg.channels, cfg.channels} : l.shape;
      total += shape.weights();
    } else {
      total += l.shape.weights() + l.shape.out;
    }
  }
  return total;
}

/// Weights and biases actually stored for the configuration (all scale heads).
inline std::uint64_t count_stored_params(const ModelConfig& cfg) {
  std::uint64_t total = 0;
  zero_model<float>(cfg).for_each_conv([&](const std::string&, const ConvParams<float>& p) {
    total += p.weight.size() + p.bias.size();
  });
  return total;
}

/// Multiply-accumulates of one forward pass on an lr_h x lr_w input, biases excluded.
inline std::uint64_t count_flops(const ModelConfig& cfg, std::size_t lr_h, std::size_t lr_w, int scale) {
  check_valve(cfg, scale);
  std::uint64_t total = 0;
  for (const LayerInfo& l : layer_table(cfg, scale))
    total += static_cast<std::uint64_t>(l.shape.weights()) * (lr_h * l.resolution) * (lr_w * l.resolution);
  return total;
}

}  // namespace esrgcnn
