#pragma once

#include <cstddef>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "esrgcnn/error.hpp"
#include "esrgcnn/ops.hpp"
#include "esrgcnn/tensor.hpp"

namespace esrgcnn {

enum class OpKind {
  Input,
  Param,
  Conv,
  Relu,
  Add,
  Concat,
  Slice,
  PixelShuffle,
  PixelUnshuffle,
  // Forward-only kernels; recording them is rejected.
  BicubicResize,
  Clamp,
};

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Input: return "input";
    case OpKind::Param: return "param";
    case OpKind::Conv: return "conv";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::PixelShuffle: return "pixel_shuffle";
    case OpKind::PixelUnshuffle: return "pixel_unshuffle";
    case OpKind::BicubicResize: return "bicubic_resize";
    case OpKind::Clamp: return "clamp";
  }
  return "?";
}

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

template <typename T>
using GradientMap = std::map<std::string, Tensor<T>>;

/// Records a forward graph over tensor kernels and differentiates it in
/// reverse. Nodes are appended in evaluation order, so creation order is a
/// topological order and backward simply walks the node list from the end.
///
/// Parameters are registered by name; referencing the same name twice yields
/// the same leaf, so gradients from every use are summed.
template <typename T>
class Tape {
 public:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    std::size_t attr = 0;  // slice begin / shuffle factor
    Tensor<T> value;
    std::string name;  // parameters only
  };

  using Value = Var;

  Var input(Tensor<T> value) { return push({OpKind::Input, {}, 0, std::move(value), {}}); }

  Var param(const std::string& name, const Tensor<T>& value) {
    if (auto it = params_.find(name); it != params_.end()) {
      if (nodes_[it->second].value.dims() != value.dims())
        detail::contract_fail("Tape::param: '" + name + "' re-registered with different dims");
      return Var{it->second};
    }
    Var v = push({OpKind::Param, {}, 0, value, name});
    params_.emplace(name, v.id);
    return v;
  }

  /// Registers `<name>.weight` and `<name>.bias` and applies the convolution.
  Var conv(Var x, const std::string& name, const ConvParams<T>& p) {
    Var w = param(name + ".weight", p.weight);
    Var b = param(name + ".bias", Tensor<T>(Dims{p.out_channels(), 1, 1, 1}, p.bias));
    return conv(x, w, b);
  }

  Var conv(Var x, Var w, Var b) {
    const Tensor<T>& bv = value(b);
    Tensor<T> out = conv2d_forward(value(x), value(w), std::span<const T>(bv.data(), bv.size()));
    return push({OpKind::Conv, {x.id, w.id, b.id}, 0, std::move(out), {}});
  }

  Var relu(Var x) { return push({OpKind::Relu, {x.id}, 0, esrgcnn::relu(value(x)), {}}); }

  Var add(Var a, Var b) {
    return push({OpKind::Add, {a.id, b.id}, 0, esrgcnn::add(value(a), value(b)), {}});
  }

  Var concat(Var a, Var b) {
    return push({OpKind::Concat, {a.id, b.id}, 0, concat_channels(value(a), value(b)), {}});
  }

  Var slice(Var x, std::size_t begin, std::size_t count) {
    return push({OpKind::Slice, {x.id}, begin, slice_channels(value(x), begin, count), {}});
  }

  std::pair<Var, Var> split(Var x, std::size_t k) {
    const std::size_t c = value(x).c();
    if (k > c) detail::contract_fail("Tape::split: k exceeds channel count");
    return {slice(x, 0, k), slice(x, k, c - k)};
  }

  Var pixel_shuffle(Var x, std::size_t r) {
    return push({OpKind::PixelShuffle, {x.id}, r, esrgcnn::pixel_shuffle(value(x), r), {}});
  }

  Var pixel_unshuffle(Var x, std::size_t r) {
    return push({OpKind::PixelUnshuffle, {x.id}, r, esrgcnn::pixel_unshuffle(value(x), r), {}});
  }

  /// Generic entry point used by graph builders that dispatch on an op id.
  Var apply(OpKind kind, std::initializer_list<Var> in, std::size_t attr = 0) {
    const std::vector<Var> args(in);
    auto arity = [&](std::size_t n) {
      if (args.size() != n)
        detail::contract_fail(std::string("Tape::apply: ") + op_name(kind) + " expects " +
                              std::to_string(n) + " inputs");
    };
    switch (kind) {
      case OpKind::Conv: arity(3); return conv(args[0], args[1], args[2]);
      case OpKind::Relu: arity(1); return relu(args[0]);
      case OpKind::Add: arity(2); return add(args[0], args[1]);
      case OpKind::Concat: arity(2); return concat(args[0], args[1]);
      case OpKind::PixelShuffle: arity(1); return pixel_shuffle(args[0], attr);
      case OpKind::PixelUnshuffle: arity(1); return pixel_unshuffle(args[0], attr);
      default: break;
    }
    detail::contract_fail(std::string("Tape::apply: unsupported operation '") + op_name(kind) +
                          "'");
  }

  const Tensor<T>& value(Var v) const {
    detail::require(v.id < nodes_.size(), "Tape: unknown variable");
    return nodes_[v.id].value;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::vector<std::string> param_names() const {
    std::vector<std::string> out;
    for (const auto& [name, id] : params_) out.push_back(name);
    return out;
  }

  /// Re-evaluates every recorded node from its leaves. Returns the output
  /// values in node order; used to confirm the tape replays exactly.
  std::vector<Tensor<T>> replay() const {
    std::vector<Tensor<T>> vals;
    vals.reserve(nodes_.size());
    for (const Node& nd : nodes_) {
      auto in = [&](std::size_t i) -> const Tensor<T>& { return vals[nd.inputs[i]]; };
      switch (nd.kind) {
        case OpKind::Input:
        case OpKind::Param: vals.push_back(nd.value); break;
        case OpKind::Conv: {
          const Tensor<T>& b = in(2);
          vals.push_back(conv2d_forward(in(0), in(1), std::span<const T>(b.data(), b.size())));
          break;
        }
        case OpKind::Relu: vals.push_back(esrgcnn::relu(in(0))); break;
        case OpKind::Add: vals.push_back(esrgcnn::add(in(0), in(1))); break;
        case OpKind::Concat: vals.push_back(concat_channels(in(0), in(1))); break;
        case OpKind::Slice: vals.push_back(slice_channels(in(0), nd.attr, nd.value.c())); break;
        case OpKind::PixelShuffle: vals.push_back(esrgcnn::pixel_shuffle(in(0), nd.attr)); break;
        case OpKind::PixelUnshuffle:
          vals.push_back(esrgcnn::pixel_unshuffle(in(0), nd.attr));
          break;
        default: detail::contract_fail("Tape::replay: unsupported node");
      }
    }
    return vals;
  }

  /// Propagates `grad_output` from `output` to every node. Returns gradients
  /// for all registered parameters; ones the output does not depend on are zero.
  GradientMap<T> backward(Var output, const Tensor<T>& grad_output) {
    const Tensor<T>& out = value(output);
    if (grad_output.dims() != out.dims())
      detail::contract_fail("Tape::backward: gradient dims " + grad_output.dims().str() +
                            " != output dims " + out.dims().str());
    grads_.assign(nodes_.size(), std::nullopt);
    grads_[output.id] = grad_output;

    for (std::size_t id = output.id + 1; id-- > 0;) {
      if (!grads_[id]) continue;
      const Node& nd = nodes_[id];
      const Tensor<T>& g = *grads_[id];
      switch (nd.kind) {
        case OpKind::Input:
        case OpKind::Param: break;
        case OpKind::Conv: {
          ConvGrads<T> cg = conv2d_backward(nodes_[nd.inputs[0]].value,
                                            nodes_[nd.inputs[1]].value, g);
          accumulate(nd.inputs[0], std::move(cg.grad_x));
          accumulate(nd.inputs[1], std::move(cg.grad_w));
          const Dims bias_dims{cg.grad_b.size(), 1, 1, 1};
          accumulate(nd.inputs[2], Tensor<T>(bias_dims, std::move(cg.grad_b)));
          break;
        }
        case OpKind::Relu:
          accumulate(nd.inputs[0], relu_backward(nodes_[nd.inputs[0]].value, g));
          break;
        case OpKind::Add:
          accumulate(nd.inputs[0], g);
          accumulate(nd.inputs[1], g);
          break;
        case OpKind::Concat: {
          const std::size_t ca = nodes_[nd.inputs[0]].value.c();
          accumulate(nd.inputs[0], slice_channels(g, 0, ca));
          accumulate(nd.inputs[1], slice_channels(g, ca, g.c() - ca));
          break;
        }
        case OpKind::Slice: {
          std::optional<Tensor<T>>& dst = grads_[nd.inputs[0]];
          if (!dst) dst.emplace(nodes_[nd.inputs[0]].value.dims());
          accumulate_into_channels(*dst, g, nd.attr);
          break;
        }
        case OpKind::PixelShuffle:
          accumulate(nd.inputs[0], esrgcnn::pixel_unshuffle(g, nd.attr));
          break;
        case OpKind::PixelUnshuffle:
          accumulate(nd.inputs[0], esrgcnn::pixel_shuffle(g, nd.attr));
          break;
        default: detail::contract_fail("Tape::backward: unsupported node");
      }
      if (nd.kind != OpKind::Input && nd.kind != OpKind::Param) grads_[id].reset();
    }

    GradientMap<T> result;
    for (const auto& [name, id] : params_) {
      result.emplace(name, grads_[id] ? *grads_[id] : Tensor<T>(nodes_[id].value.dims()));
    }
    return result;
  }

  /// Gradient of the last backward() output with respect to leaf `v` (zeros
  /// when unreached). Intermediate gradients are released during backward.
  Tensor<T> grad(Var v) const {
    detail::require(v.id < nodes_.size(), "Tape: unknown variable");
    if (v.id < grads_.size() && grads_[v.id]) return *grads_[v.id];
    return Tensor<T>(nodes_[v.id].value.dims());
  }

 private:
  Var push(Node nd) {
    nodes_.push_back(std::move(nd));
    return Var{nodes_.size() - 1};
  }

  void accumulate(std::size_t id, Tensor<T> g) {
    if (!grads_[id]) {
      grads_[id] = std::move(g);
    } else {
      add_inplace(*grads_[id], g);
    }
  }

  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
  std::vector<std::optional<Tensor<T>>> grads_;
};

/// Evaluates the same builder interface as Tape directly, without recording.
template <typename T>
class EagerBuilder {
 public:
  using Value = Tensor<T>;

  Value input(Tensor<T> v) const { return v; }
  Value conv(const Value& x, const std::string&, const ConvParams<T>& p) const {
    return conv2d_forward(x, p);
  }
  Value relu(const Value& x) const { return esrgcnn::relu(x); }
  Value add(const Value& a, const Value& b) const { return esrgcnn::add(a, b); }
  Value concat(const Value& a, const Value& b) const { return concat_channels(a, b); }
  Value slice(const Value& x, std::size_t begin, std::size_t count) const {
    return slice_channels(x, begin, count);
  }
  Value pixel_shuffle(const Value& x, std::size_t r) const { return esrgcnn::pixel_shuffle(x, r); }
  const Tensor<T>& value(const Value& v) const { return v; }
};

}  // namespace esrgcnn
