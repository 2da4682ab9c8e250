#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "json.hpp"

#include "esrgcnn/data.hpp"
#include "esrgcnn/error.hpp"
#include "esrgcnn/model.hpp"
#include "esrgcnn/ops.hpp"
#include "esrgcnn/tensor.hpp"

namespace esrgcnn {

/// BT.601 studio-swing luma on the 0-255 scale from RGB in [0, 1]. Not rounded.
template <typename T>
Tensor<double> rgb_to_y(const Tensor<T>& rgb) {
  if (rgb.c() != 3) detail::contract_fail("rgb_to_y: expected 3 channels, got " + std::to_string(rgb.c()));
  Tensor<double> y(rgb.n(), 1, rgb.h(), rgb.w());
  for (std::size_t n = 0; n < rgb.n(); ++n)
    for (std::size_t i = 0; i < rgb.h(); ++i)
      for (std::size_t j = 0; j < rgb.w(); ++j)
        y(n, 0, i, j) = 16.0 + 65.481 * static_cast<double>(rgb(n, 0, i, j)) +
                        128.553 * static_cast<double>(rgb(n, 1, i, j)) +
                        24.966 * static_cast<double>(rgb(n, 2, i, j));
  return y;
}

namespace detail {

inline void check_metric_inputs(const Tensor<double>& a, const Tensor<double>& b, std::size_t shave,
                                const char* who) {
  if (a.dims() != b.dims())
    contract_fail(std::string(who) + ": dims " + a.dims().str() + " vs " + b.dims().str());
  if (a.c() != 1) contract_fail(std::string(who) + ": expected single-channel inputs");
  if (2 * shave >= a.h() || 2 * shave >= a.w())
    contract_fail(std::string(who) + ": shave " + std::to_string(shave) + " leaves no pixels");
}

}  // namespace detail

/// PSNR in dB over the interior left after removing `shave` pixels per border.
/// Identical inputs give +infinity.
inline double psnr(const Tensor<double>& a, const Tensor<double>& b, std::size_t shave) {
  detail::check_metric_inputs(a, b, shave, "psnr");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < a.n(); ++n)
    for (std::size_t y = shave; y < a.h() - shave; ++y)
      for (std::size_t x = shave; x < a.w() - shave; ++x) {
        const double d = a(n, 0, y, x) - b(n, 0, y, x);
        sum += d * d;
        ++count;
      }
  const double mse = sum / static_cast<double>(count);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
inline std::array<double, kSsimWindow> ssim_gaussian() {
  std::array<double, kSsimWindow> g{};
  double total = 0.0;
  const double half = static_cast<double>(kSsimWindow / 2);
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - half;
    g[i] = std::exp(-(d * d) / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

namespace detail {

// "valid" separable Gaussian filtering of one h x w plane.
inline std::vector<double> gaussian_valid(const std::vector<double>& plane, std::size_t h, std::size_t w) {
  const auto g = ssim_gaussian();
  const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * plane[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace detail

/// Single-scale SSIM (11x11 Gaussian window, sigma 1.5, K1 0.01, K2 0.03,
/// dynamic range 255) averaged over window positions fully inside the
/// shaved image.
inline double ssim(const Tensor<double>& a, const Tensor<double>& b, std::size_t shave) {
  detail::check_metric_inputs(a, b, shave, "ssim");
  const std::size_t h = a.h() - 2 * shave, w = a.w() - 2 * shave;
  if (h < kSsimWindow || w < kSsimWindow)
    detail::contract_fail("ssim: image smaller than the 11x11 window after shaving");
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);

  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < a.n(); ++n) {
    std::vector<double> pa(h * w), pb(h * w), paa(h * w), pbb(h * w), pab(h * w);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const double va = a(n, 0, y + shave, x + shave), vb = b(n, 0, y + shave, x + shave);
        const std::size_t i = y * w + x;
        pa[i] = va;
        pb[i] = vb;
        paa[i] = va * va;
        pbb[i] = vb * vb;
        pab[i] = va * vb;
      }
    const auto mu_a = detail::gaussian_valid(pa, h, w);
    const auto mu_b = detail::gaussian_valid(pb, h, w);
    const auto e_aa = detail::gaussian_valid(paa, h, w);
    const auto e_bb = detail::gaussian_valid(pbb, h, w);
    const auto e_ab = detail::gaussian_valid(pab, h, w);
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double var_a = e_aa[i] - ma * ma;
      const double var_b = e_bb[i] - mb * mb;
      const double cov = e_ab[i] - ma * mb;
      total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Dataset evaluation

struct MetricRow {
  std::string id;
  double psnr = 0.0;
  double ssim = 0.0;
  std::string error;  // non-empty when this image failed

  bool ok() const noexcept { return error.empty(); }
};

struct MetricReport {
  int scale = 2;
  std::size_t shave = 2;
  std::vector<MetricRow> rows;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  std::size_t n = 0;  // rows that succeeded
};

/// Produces an SR image (1, 3, H, W) for a record at the given scale.
using SrSource = std::function<Tensor<float>(const ImageRecord&, int scale)>;

inline SrSource bicubic_source() {
  return [](const ImageRecord& rec, int scale) {
    return bicubic_resize(rec.lr_by_scale.at(scale), rec.hr.h(), rec.hr.w());
  };
}

inline SrSource model_source(const ModelParams<float>& params) {
  return [&params](const ImageRecord& rec, int scale) { return model_forward(params, rec.lr_by_scale.at(scale), scale); };
}

/// Scores SR output against HR on the Y channel with a `scale`-pixel shave.
/// Per-image failures are recorded in the row; the run continues.
inline MetricReport evaluate(const SrSource& source, const std::vector<ImageRecord>& records, int scale) {
  MetricReport report;
  report.scale = scale;
  report.shave = static_cast<std::size_t>(scale);
  double sum_psnr = 0.0, sum_ssim = 0.0;
  for (const ImageRecord& rec : records) {
    MetricRow row;
    row.id = rec.id;
    try {
      if (!rec.lr_by_scale.count(scale))
        throw std::runtime_error("record has no x" + std::to_string(scale) + " LR image");
      const Tensor<float> sr = clamp(source(rec, scale), 0.0f, 1.0f);
      if (sr.dims() != rec.hr.dims())
        throw std::runtime_error("SR dims " + sr.dims().str() + " != HR dims " + rec.hr.dims().str());
      const Tensor<double> ys = rgb_to_y(sr), yh = rgb_to_y(rec.hr);
      row.psnr = psnr(ys, yh, report.shave);
      row.ssim = ssim(ys, yh, report.shave);
      sum_psnr += row.psnr;
      sum_ssim += row.ssim;
      ++report.n;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    report.rows.push_back(std::move(row));
  }
  if (report.n > 0) {
    report.mean_psnr = sum_psnr / static_cast<double>(report.n);
    report.mean_ssim = sum_ssim / static_cast<double>(report.n);
  }
  return report;
}

inline std::string report_csv(const MetricReport& r) {
  std::string out = "id,psnr,ssim\n";
  char buf[64];
  for (const MetricRow& row : r.rows) {
    out += row.id;
    if (row.ok()) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f\n", row.psnr, row.ssim);
      out += buf;
    } else {
      out += ",nan,nan\n";
    }
  }
  return out;
}

inline nlohmann::json report_json(const MetricReport& r) {
  return nlohmann::json{{"scale", r.scale},
                        {"shave", r.shave},
                        {"mean_psnr", r.mean_psnr},
                        {"mean_ssim", r.mean_ssim},
                        {"n", r.n}};
}

/// Writes `<stem>.csv` and `<stem>.json`.
inline void write_report(const MetricReport& r, const std::filesystem::path& stem) {
  std::filesystem::path csv = stem, json = stem;
  csv += ".csv";
  json += ".json";
  std::ofstream c(csv, std::ios::trunc);
  std::ofstream j(json, std::ios::trunc);
  if (!c || !j) throw std::runtime_error("cannot write report '" + stem.string() + "'");
  c << report_csv(r);
  j << report_json(r).dump(2) << "\n";
}

}  // namespace esrgcnn
