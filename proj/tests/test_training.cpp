#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "esrgcnn/training.hpp"
#include "oracles.hpp"

using namespace esrgcnn;
namespace fs = std::filesystem;

namespace {

const std::vector<ImageRecord>& corpus() {
  static const std::vector<ImageRecord> records = ingest_corpus(fs::path(ESRG_TEST_DATA) / "corpus", {2, 3, 4}).records;
  return records;
}

ModelConfig toy(std::vector<int> scales = {2, 3, 4}) {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.num_gebs = 1;
  cfg.scales = std::move(scales);
  cfg.seed = 5;
  return cfg;
}

TrainSchedule short_schedule(std::uint64_t steps, double lr = 1e-3) {
  TrainSchedule s;
  s.base_lr = lr;
  s.total_steps = steps;
  s.batch_size = 2;
  s.patch_size = 12;
  return s;
}

}  // namespace

TEST(MseLoss, Examples) {
  const Tensor<float> a(1, 3, 2, 2, 0.5f);
  const auto same = mse_loss(a, a);
  EXPECT_EQ(same.loss, 0.0);
  for (float g : same.grad.vec()) EXPECT_EQ(g, 0.0f);

  // Two samples, every element off by 1: sum of squares 24, / (2 * 2) = 6.
  const auto l = mse_loss(Tensor<double>(2, 3, 2, 2, 1.0), Tensor<double>(2, 3, 2, 2, 0.0));
  EXPECT_DOUBLE_EQ(l.loss, 6.0);
  for (double g : l.grad.vec()) EXPECT_DOUBLE_EQ(g, 0.5);
  EXPECT_THROW(mse_loss(a, Tensor<float>(1, 3, 2, 3)), ContractViolation);
}

TEST(MseLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(1);
  auto p = oracle::random_tensor<double>({3, 2, 4, 4}, rng);
  const auto t = oracle::random_tensor<double>({3, 2, 4, 4}, rng);
  const auto r = mse_loss(p, t);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double fd = oracle::central_diff(&p[i], 1e-4, [&] { return mse_loss(p, t).loss; });
    EXPECT_LE(oracle::rel_err(r.grad[i], fd), 1e-4) << i;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> w{1.0, -2.0, 3.0};
  std::vector<ParamView<double>> views{{"w", std::span<double>(w)}};
  GradientMap<double> grads;
  grads.emplace("w", Tensor<double>(Dims{3, 1, 1, 1}, std::vector<double>{0.5, -4.0, 0.0}));
  AdamState<double> st;
  adam_step<double>(views, grads, st, 0.1);
  // m_hat = g and v_hat = g^2 after one step, so the update is lr * sign(g) up to epsilon.
  EXPECT_NEAR(w[0], 0.9, 1e-8);
  EXPECT_NEAR(w[1], -1.9, 1e-8);
  EXPECT_EQ(w[2], 3.0);
  EXPECT_EQ(st.slots.at("w").t, 1u);
}

TEST(Adam, ConstantGradientKeepsStepSize) {
  std::vector<double> w{0.0};
  std::vector<ParamView<double>> views{{"w", std::span<double>(w)}};
  GradientMap<double> grads;
  grads.emplace("w", Tensor<double>(Dims{1, 1, 1, 1}, std::vector<double>{2.0}));
  AdamState<double> st;
  for (int i = 0; i < 10; ++i) adam_step<double>(views, grads, st, 0.01);
  EXPECT_NEAR(w[0], -0.1, 1e-7);
}

TEST(Adam, PerParameterStepCounters) {
  std::vector<double> a{0.0}, b{0.0};
  GradientMap<double> grads;
  grads.emplace("a", Tensor<double>(Dims{1, 1, 1, 1}, std::vector<double>{1.0}));
  grads.emplace("b", Tensor<double>(Dims{1, 1, 1, 1}, std::vector<double>{1.0}));
  AdamState<double> st;
  std::vector<ParamView<double>> both{{"a", std::span<double>(a)}, {"b", std::span<double>(b)}};
  std::vector<ParamView<double>> only_a{{"a", std::span<double>(a)}};
  adam_step<double>(only_a, grads, st, 0.1);
  adam_step<double>(only_a, grads, st, 0.1);
  adam_step<double>(both, grads, st, 0.1);
  EXPECT_EQ(st.slots.at("a").t, 3u);
  EXPECT_EQ(st.slots.at("b").t, 1u);
  EXPECT_NEAR(b[0], -0.1, 1e-9);
}

TEST(Adam, MissingGradientIsAContractViolation) {
  std::vector<double> w{0.0};
  std::vector<ParamView<double>> views{{"w", std::span<double>(w)}};
  AdamState<double> st;
  EXPECT_THROW(adam_step<double>(views, GradientMap<double>{}, st, 0.1), ContractViolation);
}

TEST(Schedule, HalvingSteps) {
  const TrainSchedule s;
  EXPECT_DOUBLE_EQ(lr_at(0, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(399999, s), 1e-4);
  EXPECT_DOUBLE_EQ(lr_at(400000, s), 5e-5);
  EXPECT_DOUBLE_EQ(lr_at(800000, s), 2.5e-5);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 200; ++i) {
    const std::uint64_t a = rng() % 3000000, b = a + rng() % 1000000;
    EXPECT_GE(lr_at(a, s), lr_at(b, s));
  }
}

TEST(Train, OneStepUpdatesOnlyTheActiveHead) {
  const auto before = init_model<float>(toy());
  TrainSchedule s = short_schedule(1);
  const auto after = train(before, s, corpus(), {}).params;
  EXPECT_EQ(after.up3, before.up3);
  EXPECT_EQ(after.up4, before.up4);
  EXPECT_NE(after.up2, before.up2);
  EXPECT_NE(after.head, before.head);
  EXPECT_NE(after.recon, before.recon);
}

TEST(Train, RoundRobinVisitsScalesInOrder) {
  const auto r = train(init_model<float>(toy()), short_schedule(6), corpus(), {});
  std::vector<int> seen;
  for (const auto& rec : r.log) seen.push_back(rec.scale);
  EXPECT_EQ(seen, (std::vector<int>{2, 3, 4, 2, 3, 4}));
}

TEST(Train, DeterministicGivenSeeds) {
  TrainOptions opts;
  opts.data_seed = 17;
  TrainSchedule s = short_schedule(4);
  s.strategy = ScaleStrategy::RandomUniform;
  const auto a = train(init_model<float>(toy()), s, corpus(), opts);
  const auto b = train(init_model<float>(toy()), s, corpus(), opts);
  EXPECT_EQ(loss_csv(a.log), loss_csv(b.log));
  EXPECT_EQ(a.params, b.params);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto m = init_model<float>(toy({2}));
  PatchBatch batch;
  std::mt19937_64 rng(2);
  batch = sample_batch(corpus(), 2, 2, rng, 10);
  ModelParams<float> p = m;
  AdamState<float> adam;
  const double loss = train_step(p, adam, batch, 0.0);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_EQ(p, m);
}

TEST(Train, CheckpointCallbackCadence) {
  std::vector<std::uint64_t> at;
  TrainOptions opts;
  opts.checkpoint_every = 2;
  opts.on_checkpoint = [&](std::uint64_t step, const ModelParams<float>&) { at.push_back(step); };
  train(init_model<float>(toy({2})), short_schedule(5), corpus(), opts);
  EXPECT_EQ(at, (std::vector<std::uint64_t>{2, 4, 5}));
}

TEST(Train, NonFiniteLossRaisesTrainingDiverged) {
  auto m = init_model<float>(toy({2}));
  m.recon.bias[0] = std::numeric_limits<float>::infinity();
  EXPECT_THROW(train(m, short_schedule(2), corpus(), {}), TrainingDiverged);
}

TEST(Train, ToyRunReducesLoss) {
  // s=16, 2 GEBs, 2 images, x2 only, 300 steps; small patches keep it quick.
  ModelConfig cfg = toy({2});
  cfg.channels = 16;
  cfg.num_gebs = 2;
  const std::vector<ImageRecord> two{corpus()[0], corpus()[2]};
  TrainSchedule s = short_schedule(300);
  s.batch_size = 4;
  s.patch_size = 24;
  const auto r = train(init_model<float>(cfg), s, two, {});
  double tail = 0.0;
  for (std::size_t i = r.log.size() - 10; i < r.log.size(); ++i) tail += r.log[i].loss / 10.0;
  EXPECT_LT(tail, 0.25 * r.log.front().loss);
}

TEST(LossCsv, Format) {
  const std::vector<LossRecord> log{{0, 2, 0.5, 1e-4}, {1, 3, 0.25, 5e-5}};
  EXPECT_EQ(loss_csv(log), "step,scale,loss,lr\n0,2,0.5,0.0001\n1,3,0.25,5e-05\n");
}
