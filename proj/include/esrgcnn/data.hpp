#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "esrgcnn/error.hpp"
#include "esrgcnn/image_io.hpp"
#include "esrgcnn/ops.hpp"
#include "esrgcnn/tensor.hpp"

namespace esrgcnn {

inline constexpr std::size_t kPatchSize = 83;

struct ImageRecord {
  std::string id;
  Tensor<float> hr;                        // (1, 3, H, W), H and W divisible by every scale
  std::map<int, Tensor<float>> lr_by_scale;  // (1, 3, H / s, W / s)
};

struct IngestResult {
  std::vector<ImageRecord> records;
  std::vector<std::pair<std::string, std::string>> errors;  // (file, message)
};

inline std::size_t scales_lcm(const std::vector<int>& scales) {
  std::size_t l = 1;
  for (int s : scales) l = std::lcm(l, static_cast<std::size_t>(s));
  return l;
}

/// Crops the bottom/right edge so both dims are multiples of `multiple`.
template <typename T>
Tensor<T> mod_crop(const Tensor<T>& img, std::size_t multiple) {
  const std::size_t h = img.h() - img.h() % multiple, w = img.w() - img.w() % multiple;
  Tensor<T> out(img.n(), img.c(), h, w);
  for (std::size_t n = 0; n < img.n(); ++n)
    for (std::size_t c = 0; c < img.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(img.data() + img.index(n, c, y, 0), w, out.data() + out.index(n, c, y, 0));
  return out;
}

/// Mod-crops `hr` and synthesizes its bicubic-downscaled counterpart per scale.
inline ImageRecord make_record(std::string id, const Tensor<float>& hr, const std::vector<int>& scales) {
  detail::require(hr.n() == 1 && hr.c() == 3, "make_record: expected a (1,3,H,W) image");
  detail::require(!scales.empty(), "make_record: no scales");
  ImageRecord rec;
  rec.id = std::move(id);
  rec.hr = mod_crop(hr, scales_lcm(scales));
  if (rec.hr.h() == 0 || rec.hr.w() == 0)
    throw IngestError("image '" + rec.id + "' is smaller than the scale multiple");
  for (int s : scales) {
    const auto su = static_cast<std::size_t>(s);
    rec.lr_by_scale[s] = bicubic_resize(rec.hr, rec.hr.h() / su, rec.hr.w() / su);
  }
  return rec;
}

/// Loads every *.png in `dir` (sorted by filename). Undecodable files are
/// reported in `errors` and skipped; a corpus with no usable image is fatal.
inline IngestResult ingest_corpus(const std::filesystem::path& dir, const std::vector<int>& scales) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IngestError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());

  IngestResult result;
  for (const auto& f : files) {
    try {
      result.records.push_back(make_record(f.stem().string(), read_png(f), scales));
    } catch (const std::exception& e) {
      result.errors.emplace_back(f.string(), e.what());
    }
  }
  if (result.records.empty())
    throw IngestError("no usable PNG images in '" + dir.string() + "' (" + std::to_string(result.errors.size()) +
                      " failed)");
  return result;
}

// ---------------------------------------------------------------------------
// Patch augmentation

/// Mirrors every plane left-right.
template <typename T>
Tensor<T> flip_horizontal(const Tensor<T>& x) {
  Tensor<T> out(x.dims());
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t y = 0; y < x.h(); ++y)
        for (std::size_t i = 0; i < x.w(); ++i) out(n, c, y, i) = x(n, c, y, x.w() - 1 - i);
  return out;
}

/// Rotates every plane by k quarter-turns counter-clockwise.
template <typename T>
Tensor<T> rotate90(const Tensor<T>& x, int k) {
  k = ((k % 4) + 4) % 4;
  Tensor<T> cur = x;
  for (int t = 0; t < k; ++t) {
    Tensor<T> next(cur.n(), cur.c(), cur.w(), cur.h());
    for (std::size_t n = 0; n < cur.n(); ++n)
      for (std::size_t c = 0; c < cur.c(); ++c)
        for (std::size_t y = 0; y < next.h(); ++y)
          for (std::size_t i = 0; i < next.w(); ++i) next(n, c, y, i) = cur(n, c, i, cur.w() - 1 - y);
    cur = std::move(next);
  }
  return cur;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  detail::require(top + h <= x.h() && left + w <= x.w(), "crop: window out of bounds");
  Tensor<T> out(x.n(), x.c(), h, w);
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c)
      for (std::size_t y = 0; y < h; ++y)
        std::copy_n(x.data() + x.index(n, c, top + y, left), w, out.data() + out.index(n, c, y, 0));
  return out;
}

/// Where and how one batch member was drawn.
struct PatchOrigin {
  std::size_t record = 0;
  std::size_t lr_top = 0;
  std::size_t lr_left = 0;
  bool flipped = false;
  int quarter_turns = 0;
};

struct PatchBatch {
  int scale = 2;
  Tensor<float> lr;  // (B, 3, P, P)
  Tensor<float> hr;  // (B, 3, P * s, P * s)
  std::vector<PatchOrigin> origins;
};

/// Draws `batch_size` aligned LR/HR patch pairs: uniform record, uniform
/// origin, then a coin-flip mirror and k ~ U{0..3} quarter-turns applied to
/// both members. Consumes `rng` in a fixed order.
inline PatchBatch sample_batch(const std::vector<ImageRecord>& records, int scale, std::size_t batch_size,
                               std::mt19937_64& rng, std::size_t patch = kPatchSize) {
  detail::require(batch_size >= 1 && patch >= 1, "sample_batch: batch size and patch must be >= 1");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = records[i].lr_by_scale.find(scale);
    if (it != records[i].lr_by_scale.end() && it->second.h() >= patch && it->second.w() >= patch)
      eligible.push_back(i);
  }
  if (eligible.empty())
    throw IngestError("no record has an x" + std::to_string(scale) + " LR image of at least " +
                      std::to_string(patch) + "x" + std::to_string(patch));

  const auto s = static_cast<std::size_t>(scale);
  const std::size_t hp = patch * s;
  PatchBatch batch;
  batch.scale = scale;
  batch.lr = Tensor<float>(batch_size, 3, patch, patch);
  batch.hr = Tensor<float>(batch_size, 3, hp, hp);
  for (std::size_t b = 0; b < batch_size; ++b) {
    PatchOrigin o;
    o.record = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
    const ImageRecord& rec = records[o.record];
    const Tensor<float>& lr = rec.lr_by_scale.at(scale);
    o.lr_top = std::uniform_int_distribution<std::size_t>(0, lr.h() - patch)(rng);
    o.lr_left = std::uniform_int_distribution<std::size_t>(0, lr.w() - patch)(rng);
    o.flipped = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    o.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);

    Tensor<float> lp = crop(lr, o.lr_top, o.lr_left, patch, patch);
    Tensor<float> hpatch = crop(rec.hr, o.lr_top * s, o.lr_left * s, hp, hp);
    if (o.flipped) {
      lp = flip_horizontal(lp);
      hpatch = flip_horizontal(hpatch);
    }
    lp = rotate90(lp, o.quarter_turns);
    hpatch = rotate90(hpatch, o.quarter_turns);
    std::copy(lp.vec().begin(), lp.vec().end(), batch.lr.data() + b * batch.lr.dims().sample());
    std::copy(hpatch.vec().begin(), hpatch.vec().end(), batch.hr.data() + b * batch.hr.dims().sample());
    batch.origins.push_back(o);
  }
  return batch;
}

}  // namespace esrgcnn
