#pragma once

// Checkpoint file layout, little-endian, no padding:
//   "ESRG" | u32 version (1) | u32 config length | config JSON (UTF-8)
//   | u32 tensor count | per tensor: u16 name length | name | u8 rank
//   | rank x u32 dims | product(dims) x f32

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "esrgcnn/error.hpp"
#include "esrgcnn/model.hpp"

namespace esrgcnn {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::uint64_t kMaxTensorElements = std::uint64_t{1} << 32;

inline nlohmann::json config_to_json(const ModelConfig& cfg) {
  return nlohmann::json{{"channels", cfg.channels},
                        {"num_gebs", cfg.num_gebs},
                        {"scales", cfg.scales},
                        {"disable_wff", cfg.disable_wff},
                        {"disable_last_cr", cfg.disable_last_cr},
                        {"disable_distilling", cfg.disable_distilling},
                        {"disable_group_split", cfg.disable_group_split},
                        {"seed", cfg.seed}};
}

/// Missing keys keep their defaults. Throws ContractViolation on invalid values.
inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  if (!j.is_object()) detail::contract_fail("config: expected a JSON object");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  try {
    get("channels", cfg.channels);
    get("num_gebs", cfg.num_gebs);
    get("scales", cfg.scales);
    get("disable_wff", cfg.disable_wff);
    get("disable_last_cr", cfg.disable_last_cr);
    get("disable_distilling", cfg.disable_distilling);
    get("disable_group_split", cfg.disable_group_split);
    get("seed", cfg.seed);
  } catch (const nlohmann::json::exception& e) {
    detail::contract_fail(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const std::string& s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : bytes_(b) {}

  std::uint8_t u8() { return need(1), bytes_[pos_++]; }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw CheckpointError(CheckpointErrorKind::Truncated, "checkpoint truncated at byte " + std::to_string(pos_));
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::span<float> data;
};

inline std::vector<NamedTensor> named_tensors(ModelParams<float>& m) {
  std::vector<NamedTensor> out;
  m.for_each_conv([&](const std::string& name, ConvParams<float>& p) {
    const Dims& d = p.weight.dims();
    out.push_back({name + ".weight",
                   {static_cast<std::uint32_t>(d.n), static_cast<std::uint32_t>(d.c),
                    static_cast<std::uint32_t>(d.h), static_cast<std::uint32_t>(d.w)},
                   p.weight.span()});
    out.push_back({name + ".bias", {static_cast<std::uint32_t>(p.bias.size())}, std::span<float>(p.bias)});
  });
  return out;
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_checkpoint(const ModelParams<float>& params) {
  detail::ByteWriter w;
  w.raw("ESRG");
  w.u32(kCheckpointVersion);
  const std::string blob = config_to_json(params.config).dump();
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.raw(blob);
  std::uint32_t count = 0;
  params.for_each_conv([&](const std::string&, const ConvParams<float>&) { count += 2; });
  w.u32(count);
  auto record = [&](const std::string& name, std::span<const std::size_t> dims, std::span<const float> data) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.raw(name);
    w.u8(static_cast<std::uint8_t>(dims.size()));
    for (std::size_t d : dims) w.u32(static_cast<std::uint32_t>(d));
    for (float v : data) w.f32(v);
  };
  params.for_each_conv([&](const std::string& name, const ConvParams<float>& p) {
    const Dims& d = p.weight.dims();
    const std::array<std::size_t, 4> wdims{d.n, d.c, d.h, d.w};
    const std::array<std::size_t, 1> bdims{p.bias.size()};
    record(name + ".weight", wdims, p.weight.span());
    record(name + ".bias", bdims, p.bias);
  });
  return w.take();
}

inline ModelParams<float> deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "ESRG", 4) != 0)
    throw CheckpointError(CheckpointErrorKind::Magic, "not an ESRG checkpoint (bad magic)");
  r.raw(4);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::Version, "unsupported checkpoint version " + std::to_string(version));

  const std::uint32_t blob_len = r.u32();
  const std::string blob = r.raw(blob_len);
  ModelConfig cfg;
  try {
    cfg = config_from_json(nlohmann::json::parse(blob));
  } catch (const std::exception& e) {
    throw CheckpointError(CheckpointErrorKind::Config, std::string("invalid checkpoint config: ") + e.what());
  }

  ModelParams<float> m = zero_model<float>(cfg);
  auto expected = detail::named_tensors(m);
  std::map<std::string, detail::NamedTensor*> by_name;
  for (auto& t : expected) by_name[t.name] = &t;

  const std::uint32_t count = r.u32();
  if (count != expected.size())
    throw CheckpointError(CheckpointErrorKind::Content, "checkpoint holds " + std::to_string(count) +
                                                            " tensors, config expects " +
                                                            std::to_string(expected.size()));
  std::map<std::string, bool> seen;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = r.raw(r.u16());
    const std::uint8_t rank = r.u8();
    std::vector<std::uint32_t> dims(rank);
    std::uint64_t elements = 1;
    for (auto& d : dims) {
      d = r.u32();
      if (d != 0 && elements > kMaxTensorElements / d)
        throw CheckpointError(CheckpointErrorKind::DimOverflow, "tensor '" + name + "' dims overflow");
      elements *= d;
    }
    if (elements > kMaxTensorElements)
      throw CheckpointError(CheckpointErrorKind::DimOverflow, "tensor '" + name + "' is too large");
    auto it = by_name.find(name);
    if (it == by_name.end() || seen[name])
      throw CheckpointError(CheckpointErrorKind::Content, "unexpected tensor '" + name + "'");
    if (it->second->dims != dims)
      throw CheckpointError(CheckpointErrorKind::Content, "tensor '" + name + "' has unexpected dims");
    if (r.remaining() / 4 < elements)
      throw CheckpointError(CheckpointErrorKind::Truncated, "tensor '" + name + "' data truncated");
    seen[name] = true;
    for (float& v : it->second->data) v = r.f32();
  }
  return m;
}

inline void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::Io, "write failed for '" + path.string() + "'");
}

inline ModelParams<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::Io, "cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace esrgcnn
