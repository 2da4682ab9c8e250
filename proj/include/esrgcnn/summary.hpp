#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "esrgcnn/model.hpp"

namespace esrgcnn {

/// 1238400 -> "1,238,400".
inline std::string with_commas(std::uint64_t v) {
  std::string digits = std::to_string(v), out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i > 0 && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

/// 1238400 -> "1,238K" (rounded to the nearest thousand).
inline std::string as_thousands(std::uint64_t v) { return with_commas((v + 500) / 1000) + "K"; }

/// 9328918464 -> "9.33G".
inline std::string as_giga(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2fG", static_cast<double>(v) / 1e9);
  return buf;
}

/// Human-readable complexity report: both parameter conventions, MACs for
/// one lr_h x lr_w input at `scale`, and the per-layer table.
inline std::string describe_model(const ModelConfig& cfg, std::size_t lr_h, std::size_t lr_w, int scale) {
  const std::uint64_t nominal = count_params(cfg, CountConvention::Nominal);
  const std::uint64_t actual = count_params(cfg, CountConvention::Actual);
  const std::uint64_t flops = count_flops(cfg, lr_h, lr_w, scale);
  std::string out;
  out += "params (nominal) " + with_commas(nominal) + " (" + as_thousands(nominal) + ")\n";
  out += "params (actual, x2 path) " + with_commas(actual) + "\n";
  out += "params (stored, all heads) " + with_commas(count_stored_params(cfg)) + "\n";
  out += "flops " + as_giga(flops) + " (" + with_commas(flops) + " MAC) at " + std::to_string(lr_h) + "x" +
         std::to_string(lr_w) + " x" + std::to_string(scale) + "\n";
  out += "layer              in   out    weights   out_h x out_w            MAC\n";
  char line[160];
  for (const LayerInfo& l : layer_table(cfg, scale)) {
    const std::size_t oh = lr_h * l.resolution, ow = lr_w * l.resolution;
    std::snprintf(line, sizeof line, "%-16s %4zu %5zu %10zu %7zu x %-7zu %14s\n", l.name.c_str(), l.shape.in,
                  l.shape.out, l.shape.weights(), oh, ow,
                  with_commas(static_cast<std::uint64_t>(l.shape.weights()) * oh * ow).c_str());
    out += line;
  }
  return out;
}

}  // namespace esrgcnn
