#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "esrgcnn/autodiff.hpp"
#include "esrgcnn/data.hpp"
#include "esrgcnn/error.hpp"
#include "esrgcnn/model.hpp"

namespace esrgcnn {

template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
};

/// loss = 1/(2B) * sum_k ||pred_k - target_k||^2, grad = (pred - target) / B.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.dims() != target.dims())
    detail::contract_fail("mse_loss: dims " + pred.dims().str() + " vs " + target.dims().str());
  detail::require(pred.n() >= 1, "mse_loss: empty batch");
  const double batch = static_cast<double>(pred.n());
  LossResult<T> r{0.0, Tensor<T>(pred.dims())};
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    sum += d * d;
    r.grad[i] = static_cast<T>(d / batch);
  }
  r.loss = sum / (2.0 * batch);
  return r;
}

enum class ScaleStrategy { RoundRobin, RandomUniform };

struct TrainSchedule {
  double base_lr = 1e-4;
  std::uint64_t halving_period = 400000;
  std::uint64_t total_steps = 600000;
  std::size_t batch_size = 32;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patch_size = kPatchSize;
  ScaleStrategy strategy = ScaleStrategy::RoundRobin;

  void validate() const {
    detail::require(base_lr > 0.0, "TrainSchedule: base_lr must be > 0");
    detail::require(total_steps >= 1, "TrainSchedule: total_steps must be >= 1");
    detail::require(halving_period >= 1, "TrainSchedule: halving_period must be >= 1");
    detail::require(batch_size >= 1, "TrainSchedule: batch_size must be >= 1");
  }
};

/// Step-decay schedule: base_lr halves every halving_period steps.
inline double lr_at(std::uint64_t step, const TrainSchedule& s) {
  return std::ldexp(s.base_lr, -static_cast<int>(step / s.halving_period));
}

template <typename T>
struct AdamSlot {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t t = 0;
};

/// Moments keyed by parameter name. Each parameter keeps its own step count,
/// so heads that are updated only on some steps get their own bias correction.
template <typename T>
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::map<std::string, AdamSlot<T>> slots;
  std::uint64_t steps = 0;
};

/// Bias-corrected Adam update of every parameter in `params`.
template <typename T>
void adam_step(std::span<const ParamView<T>> params, const GradientMap<T>& grads, AdamState<T>& state, double lr) {
  for (const ParamView<T>& p : params) {
    auto it = grads.find(p.name);
    if (it == grads.end()) detail::contract_fail("adam_step: no gradient for '" + p.name + "'");
    if (it->second.size() != p.data.size())
      detail::contract_fail("adam_step: gradient size mismatch for '" + p.name + "'");
  }
  const double b1 = state.beta1, b2 = state.beta2, eps = state.epsilon;
  for (const ParamView<T>& p : params) {
    const Tensor<T>& g = grads.at(p.name);
    AdamSlot<T>& slot = state.slots[p.name];
    if (slot.m.empty()) {
      slot.m.assign(p.data.size(), T(0));
      slot.v.assign(p.data.size(), T(0));
    }
    ++slot.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(slot.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(slot.t));
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double m = b1 * static_cast<double>(slot.m[i]) + (1.0 - b1) * gi;
      const double v = b2 * static_cast<double>(slot.v[i]) + (1.0 - b2) * gi * gi;
      slot.m[i] = static_cast<T>(m);
      slot.v[i] = static_cast<T>(v);
      const double update = lr * (m / c1) / (std::sqrt(v / c2) + eps);
      p.data[i] = static_cast<T>(static_cast<double>(p.data[i]) - update);
    }
  }
  ++state.steps;
}

struct LossRecord {
  std::uint64_t step = 0;
  int scale = 2;
  double loss = 0.0;
  double lr = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainOptions {
  std::uint64_t data_seed = 0;
  // Called every `checkpoint_every` steps (if nonzero) and after the last step.
  std::uint64_t checkpoint_every = 0;
  std::function<void(std::uint64_t step, const ModelParams<float>&)> on_checkpoint;
  std::function<void(const LossRecord&)> on_step;
};

struct TrainResult {
  ModelParams<float> params;
  std::vector<LossRecord> log;
};

/// One optimization step at `scale`; returns the pre-update loss.
inline double train_step(ModelParams<float>& params, AdamState<float>& adam, const PatchBatch& batch, double lr) {
  Tape<float> tape;
  Var x = tape.input(batch.lr);
  Var y = model_forward(tape, params, x, batch.scale);
  LossResult<float> l = mse_loss(tape.value(y), batch.hr);
  if (!std::isfinite(l.loss)) return l.loss;
  GradientMap<float> grads = tape.backward(y, l.grad);
  std::vector<ParamView<float>> active;
  for (ParamView<float>& v : param_views(params))
    if (grads.count(v.name)) active.push_back(v);
  adam_step<float>(active, grads, adam, lr);
  return l.loss;
}

/// Minimizes the MSE objective with Adam, alternating upsampling heads.
/// Each step updates the trunk, the head for the chosen scale and the
/// reconstruction conv. Deterministic given params and options.data_seed.
inline TrainResult train(ModelParams<float> params, const TrainSchedule& schedule,
                         const std::vector<ImageRecord>& records, const TrainOptions& opts = {}) {
  schedule.validate();
  const ModelConfig& cfg = params.config;
  cfg.validate();
  AdamState<float> adam;
  adam.beta1 = schedule.beta1;
  adam.beta2 = schedule.beta2;
  adam.epsilon = schedule.epsilon;

  std::mt19937_64 rng(opts.data_seed);
  TrainResult result;
  for (std::uint64_t step = 0; step < schedule.total_steps; ++step) {
    int scale = cfg.scales[step % cfg.scales.size()];
    if (schedule.strategy == ScaleStrategy::RandomUniform)
      scale = cfg.scales[std::uniform_int_distribution<std::size_t>(0, cfg.scales.size() - 1)(rng)];
    const PatchBatch batch = sample_batch(records, scale, schedule.batch_size, rng, schedule.patch_size);
    const double lr = lr_at(step, schedule);
    const double loss = train_step(params, adam, batch, lr);
    if (!std::isfinite(loss))
      throw TrainingDiverged(static_cast<long long>(step),
                             "non-finite loss at step " + std::to_string(step) + " (scale x" + std::to_string(scale) + ")");
    LossRecord rec{step, scale, loss, lr};
    result.log.push_back(rec);
    if (opts.on_step) opts.on_step(rec);
    const bool last = step + 1 == schedule.total_steps;
    if (opts.on_checkpoint && (last || (opts.checkpoint_every && (step + 1) % opts.checkpoint_every == 0)))
      opts.on_checkpoint(step + 1, params);
  }
  result.params = std::move(params);
  return result;
}

inline std::string loss_csv(const std::vector<LossRecord>& log) {
  std::string out = "step,scale,loss,lr\n";
  char line[128];
  for (const LossRecord& r : log) {
    std::snprintf(line, sizeof line, "%llu,%d,%.9g,%.9g\n", static_cast<unsigned long long>(r.step), r.scale, r.loss,
                  r.lr);
    out += line;
  }
  return out;
}

inline void write_loss_csv(const std::filesystem::path& path, const std::vector<LossRecord>& log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << loss_csv(log);
}

}  // namespace esrgcnn
