#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace depthforge {

// Affine map into normalized units: normalized = scale * depth + shift.
// `scale` carries 1/scene-units, `shift` is dimensionless.
struct NormalizationParams {
  double scale = 1.0;
  double shift = 0.0;
};

inline BitMask valid_mask(const DepthMap& d) {
  BitMask m(d.height(), d.width());
  for (std::size_t i = 0; i < d.size(); ++i) m[i] = d[i] > 0.0 ? 1 : 0;
  return m;
}

inline long count_valid(const BitMask& m) {
  long n = 0;
  for (std::size_t i = 0; i < m.size(); ++i) n += m[i] ? 1 : 0;
  return n;
}

// Ingestion guard: non-finite values, negatives and values above `cap`
// are coded as missing. Sensor dumps commonly use inf/NaN/huge sentinels
// for invalid returns.
inline DepthMap apply_depth_cap(const DepthMap& d, double cap) {
  DepthMap out = d;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = out[i];
    if (!std::isfinite(v) || v < 0.0 || v > cap) out[i] = 0.0;
  }
  return out;
}

namespace detail {

// Nearest-rank quantile over a sorted sample, q in [0, 1].
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return 0.0;
  double pos = q * static_cast<double>(sorted.size() - 1);
  auto idx = static_cast<std::size_t>(std::llround(pos));
  idx = std::min(idx, sorted.size() - 1);
  return sorted[idx];
}

}  // namespace detail

// Map valid depths affinely so the chosen low/high anchors land on -1/+1.
// With the default quantiles (0, 1) the anchors are the min and max valid
// depth. Missing pixels stay 0-coded; the paired valid mask remains the
// authoritative record of validity.
inline std::pair<DepthMap, NormalizationParams> normalize_depth(
    const DepthMap& d, double q_lo = 0.0, double q_hi = 1.0) {
  require(q_lo >= 0.0 && q_hi <= 1.0 && q_lo < q_hi, errc::invalid_range,
          "normalization quantiles must satisfy 0 <= lo < hi <= 1");
  std::vector<double> vals;
  vals.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) vals.push_back(d[i]);
  require(vals.size() >= 2, errc::too_few_valid_pixels,
          "normalization needs at least two valid pixels");
  std::sort(vals.begin(), vals.end());
  double lo = detail::sorted_quantile(vals, q_lo);
  double hi = detail::sorted_quantile(vals, q_hi);
  require(hi > lo, errc::degenerate_range,
          "valid depth range is degenerate (all values equal)");

  NormalizationParams p;
  p.scale = 2.0 / (hi - lo);
  p.shift = -(hi + lo) / (hi - lo);

  DepthMap out(d.height(), d.width());
  for (std::size_t i = 0; i < d.size(); ++i)
    out[i] = d[i] > 0.0 ? p.scale * d[i] + p.shift : 0.0;
  return {std::move(out), p};
}

// Exact affine inverse of normalize_depth on all pixels. Callers that
// track validity should re-apply their mask afterwards.
inline Grid<double> denormalize_depth(const Grid<double>& d_norm,
                                      const NormalizationParams& p) {
  Grid<double> out(d_norm.height(), d_norm.width());
  for (std::size_t i = 0; i < d_norm.size(); ++i)
    out[i] = (d_norm[i] - p.shift) / p.scale;
  return out;
}

// Masked variant: missing pixels stay 0-coded.
inline DepthMap denormalize_depth(const Grid<double>& d_norm,
                                  const NormalizationParams& p,
                                  const BitMask& m) {
  require(d_norm.same_shape_as(m), errc::dimension_mismatch,
          "denormalize: mask shape mismatch");
  DepthMap out(d_norm.height(), d_norm.width());
  for (std::size_t i = 0; i < d_norm.size(); ++i)
    out[i] = m[i] ? (d_norm[i] - p.shift) / p.scale : 0.0;
  return out;
}

// Random global affine perturbation d -> a*d + b on valid pixels, used to
// exercise scale/shift robustness. The shift is clamped so valid depths
// stay strictly positive (0 would silently flip pixels to "missing").
inline DepthMap random_scale_shift(const DepthMap& d, std::uint64_t seed,
                                   double a_lo, double a_hi, double b_lo,
                                   double b_hi) {
  require(a_lo > 0.0 && a_hi >= a_lo, errc::invalid_range,
          "scale range must be positive");
  require(b_hi >= b_lo, errc::invalid_range, "shift range must be ordered");
  double d_min = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) {
      d_min = any ? std::min(d_min, d[i]) : d[i];
      any = true;
    }
  require(any, errc::too_few_valid_pixels,
          "random_scale_shift needs at least one valid pixel");

  Rng rng(seed);
  double a = rng.uniform(a_lo, a_hi);
  double b = rng.uniform(b_lo, b_hi);
  // Keep a*d_min + b strictly positive.
  double b_floor = -a * d_min + 1e-9 * (1.0 + a * d_min);
  b = std::max(b, b_floor);

  DepthMap out = d;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (out[i] > 0.0) out[i] = a * out[i] + b;
  return out;
}

}  // namespace depthforge
