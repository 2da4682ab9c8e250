#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "esrgcnn/checkpoint.hpp"
#include "oracles.hpp"

using namespace esrgcnn;
namespace fs = std::filesystem;

namespace {

ModelParams<float> toy_model(bool last_cr = true) {
  ModelConfig cfg;
  cfg.channels = 8;
  cfg.num_gebs = 2;
  cfg.scales = {2, 4};
  cfg.disable_last_cr = !last_cr;
  cfg.disable_wff = true;
  cfg.seed = 4;
  ModelParams<float> m = init_model<float>(cfg);
  std::mt19937_64 rng(1);
  for (auto& v : param_views(m))
    for (float& b : v.data) b += std::uniform_real_distribution<float>(-1e-3f, 1e-3f)(rng);
  return m;
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

CheckpointErrorKind kind_of(const std::vector<std::uint8_t>& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no CheckpointError raised";
  return CheckpointErrorKind::Io;
}

}  // namespace

TEST(Checkpoint, BitwiseRoundTrip) {
  for (bool last : {true, false}) {
    const auto m = toy_model(last);
    const auto bytes = serialize_checkpoint(m);
    const auto back = deserialize_checkpoint(bytes);
    EXPECT_EQ(back, m);
    EXPECT_EQ(serialize_checkpoint(back), bytes);
  }
}

TEST(Checkpoint, FileRoundTripReproducesForward) {
  const auto m = toy_model();
  const fs::path path = fs::temp_directory_path() / "esrg_ckpt_test.esrg";
  save_checkpoint(m, path);
  const auto back = load_checkpoint(path);
  fs::remove(path);
  std::mt19937_64 rng(2);
  const auto x = oracle::random_tensor<float>({1, 3, 6, 6}, rng, 0.0, 1.0);
  EXPECT_EQ(model_forward(back, x, 4), model_forward(m, x, 4));
}

TEST(Checkpoint, HeaderLayout) {
  const auto bytes = serialize_checkpoint(toy_model());
  ASSERT_GE(bytes.size(), 12u);
  EXPECT_EQ(std::memcmp(bytes.data(), "ESRG", 4), 0);
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5] | bytes[6] | bytes[7], 0);
}

TEST(Checkpoint, BadMagic) {
  auto bytes = serialize_checkpoint(toy_model());
  bytes[0] = 'X';
  EXPECT_EQ(kind_of(bytes), CheckpointErrorKind::Magic);
  EXPECT_EQ(kind_of({}), CheckpointErrorKind::Magic);
}

TEST(Checkpoint, UnknownVersion) {
  auto bytes = serialize_checkpoint(toy_model());
  put_u32(bytes, 4, 2);
  EXPECT_EQ(kind_of(bytes), CheckpointErrorKind::Version);
}

TEST(Checkpoint, EveryTruncationIsDetected) {
  const auto bytes = serialize_checkpoint(toy_model());
  for (std::size_t len = 4; len < bytes.size(); len += 97) {
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    const auto kind = kind_of(cut);
    EXPECT_TRUE(kind == CheckpointErrorKind::Truncated || kind == CheckpointErrorKind::Config) << len;
  }
  std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 1);
  EXPECT_EQ(kind_of(cut), CheckpointErrorKind::Truncated);
}

TEST(Checkpoint, DimensionOverflow) {
  auto bytes = serialize_checkpoint(toy_model());
  const std::uint32_t blob = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | bytes[11] << 24;
  // First tensor record: u16 name length, name, u8 rank, dims.
  const std::size_t rec = 12 + blob + 4;
  const std::size_t name_len = bytes[rec] | bytes[rec + 1] << 8;
  const std::size_t dims_at = rec + 2 + name_len + 1;
  put_u32(bytes, dims_at, 0xFFFFFFFFu);
  put_u32(bytes, dims_at + 4, 0xFFFFFFFFu);
  EXPECT_EQ(kind_of(bytes), CheckpointErrorKind::DimOverflow);
}

TEST(Checkpoint, ConfigAndContentMismatch) {
  auto bytes = serialize_checkpoint(toy_model());
  bytes[12] = '#';
  EXPECT_EQ(kind_of(bytes), CheckpointErrorKind::Config);

  // Tensors from one config under another config's header.
  ModelParams<float> m = toy_model();
  m.config.disable_last_cr = true;
  m.last_cr.reset();
  const auto small = serialize_checkpoint(m);
  const auto full = serialize_checkpoint(toy_model());
  const std::uint32_t blob_small = small[8] | small[9] << 8 | small[10] << 16 | small[11] << 24;
  const std::uint32_t blob_full = full[8] | full[9] << 8 | full[10] << 16 | full[11] << 24;
  std::vector<std::uint8_t> spliced(small.begin(), small.begin() + 12 + blob_small);
  spliced.insert(spliced.end(), full.begin() + 12 + blob_full, full.end());
  EXPECT_EQ(kind_of(spliced), CheckpointErrorKind::Content);
}

TEST(Checkpoint, MissingFileIsIoError) {
  try {
    load_checkpoint("/nonexistent/dir/model.esrg");
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_EQ(e.kind(), CheckpointErrorKind::Io);
  }
}

TEST(Checkpoint, ConfigJsonRoundTrip) {
  ModelConfig cfg;
  cfg.channels = 12;
  cfg.scales = {3};
  cfg.disable_group_split = true;
  cfg.seed = 99;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  EXPECT_EQ(config_from_json(nlohmann::json::object()), ModelConfig{});
  EXPECT_THROW(config_from_json(nlohmann::json{{"channels", 6}}), ContractViolation);
}
