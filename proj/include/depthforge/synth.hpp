#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "depth.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "rng.hpp"

namespace depthforge {

// ---------------------------------------------------------------------------
// Analytic test scenes: an axis-aligned room (floor + back wall) populated
// with boxes and spheres, rendered by per-pixel ray casting. Depth is the
// z-distance of the first hit; RGB is Lambertian shading with a distinct
// albedo per object, so depth discontinuities always coincide with image
// edges (the property the image-guided smoothness prior relies on).
// ---------------------------------------------------------------------------

struct SceneConfig {
  int width = 64;
  int height = 64;
  int min_objects = 1;
  int max_objects = 8;
  double d_min = 1.5;  // nearest allowed scene depth
  double d_max = 6.0;  // back-wall depth
  // Distinct saturated albedos; each object draws one without replacement.
  std::vector<std::array<double, 3>> palette = {
      {{0.85, 0.20, 0.20}}, {{0.20, 0.75, 0.25}}, {{0.20, 0.30, 0.85}},
      {{0.90, 0.80, 0.15}}, {{0.80, 0.25, 0.80}}, {{0.15, 0.75, 0.75}},
      {{0.95, 0.55, 0.15}}, {{0.55, 0.30, 0.75}}};

  void validate() const {
    require(width >= 16 && height >= 16, errc::invalid_config,
            "scene dimensions must be at least 16x16");
    require(min_objects >= 0 && max_objects >= min_objects &&
                max_objects <= static_cast<int>(palette.size()),
            errc::invalid_config,
            "object count range must fit the palette size");
    require(d_min > 0.0 && d_max > d_min + 1.0, errc::invalid_config,
            "depth range must satisfy 0 < d_min < d_max - 1");
  }
};

struct SceneSample {
  RgbImage rgb;
  DepthMap depth;  // dense ground truth, all pixels valid
  int n_objects = 0;
};

namespace detail {

struct SceneObject {
  bool is_sphere = true;
  // Sphere: center c, radius r. Box: center c, half extents e.
  std::array<double, 3> c{};
  double r = 0.0;
  std::array<double, 3> e{};
  std::array<double, 3> albedo{};
};

inline double dot3(const std::array<double, 3>& a,
                   const std::array<double, 3>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline std::array<double, 3> normalize3(std::array<double, 3> v) {
  double n = std::sqrt(dot3(v, v));
  return {v[0] / n, v[1] / n, v[2] / n};
}

// Ray from the origin with unnormalized direction (u, v, 1); the ray
// parameter t is therefore exactly the z-depth of the point reached.
// Returns t > 0 on hit, 0 otherwise; writes the outward surface normal.
inline double intersect(const SceneObject& o, double u, double v,
                        std::array<double, 3>& normal) {
  std::array<double, 3> dir{u, v, 1.0};
  if (o.is_sphere) {
    double dd = dot3(dir, dir);
    double dc = dot3(dir, o.c);
    double disc = dc * dc - dd * (dot3(o.c, o.c) - o.r * o.r);
    if (disc <= 0.0) return 0.0;
    double t = (dc - std::sqrt(disc)) / dd;
    if (t <= 0.05) return 0.0;
    std::array<double, 3> p{t * u, t * v, t};
    normal = {(p[0] - o.c[0]) / o.r, (p[1] - o.c[1]) / o.r,
              (p[2] - o.c[2]) / o.r};
    return t;
  }
  // Axis-aligned box, slab test. The ray origin is 0, so slab bounds are
  // (lo/d, hi/d); IEEE infinities handle axis-parallel rays correctly.
  double t_near = -1e300, t_far = 1e300;
  int near_axis = 0;
  double near_sign = -1.0;
  for (int a = 0; a < 3; ++a) {
    double lo = o.c[a] - o.e[a], hi = o.c[a] + o.e[a];
    double inv = 1.0 / dir[a];
    double t0 = lo * inv, t1 = hi * inv;
    double sign = -1.0;
    if (t0 > t1) {
      std::swap(t0, t1);
      sign = 1.0;
    }
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
      near_sign = sign;
    }
    t_far = std::min(t_far, t1);
  }
  if (t_near > t_far || t_near <= 0.05) return 0.0;
  normal = {0.0, 0.0, 0.0};
  normal[near_axis] = near_sign;
  return t_near;
}

}  // namespace detail

inline SceneSample generate_scene(std::uint64_t seed, const SceneConfig& cfg) {
  cfg.validate();
  Rng rng(seed);

  const int w = cfg.width, h = cfg.height;
  const double f = 0.75 * w;  // focal length in pixels
  const double cx = 0.5 * (w - 1), cy = 0.5 * (h - 1);
  // Floor height chosen so the bottom image row meets the floor at d_min.
  const double v_bottom = (h - 1 - cy) / f;
  const double floor_y = cfg.d_min * v_bottom;

  // --- place objects ---
  int n_objects = rng.uniform_int(cfg.min_objects, cfg.max_objects);
  std::vector<int> palette_order(cfg.palette.size());
  for (std::size_t i = 0; i < palette_order.size(); ++i)
    palette_order[i] = static_cast<int>(i);
  for (std::size_t i = 0; i + 1 < palette_order.size(); ++i) {
    std::size_t j = i + rng.uniform_int(
                            static_cast<std::uint64_t>(palette_order.size() - i));
    std::swap(palette_order[i], palette_order[j]);
  }

  std::vector<detail::SceneObject> objects;
  const int margin_x = w / 8, margin_y = h / 8;
  for (int i = 0; i < n_objects; ++i) {
    detail::SceneObject o;
    o.is_sphere = rng.uniform01() < 0.5;
    int px = rng.uniform_int(margin_x, w - 1 - margin_x);
    int py = rng.uniform_int(margin_y, h - 1 - margin_y);
    double u0 = (px - cx) / f, v0 = (py - cy) / f;
    double z_lo = cfg.d_min + 0.85, z_hi = cfg.d_max - 0.85;
    double z_c = rng.uniform(z_lo, z_hi);
    o.c = {z_c * u0, z_c * v0, z_c};
    // Keep extents inside [d_min, d_max] and project to >= ~4 pixels.
    double ext_hi =
        std::min({0.75, z_c - cfg.d_min - 0.05, cfg.d_max - z_c - 0.05});
    double ext_lo = std::min(std::max(0.30, 4.0 * z_c / f), ext_hi - 0.01);
    if (o.is_sphere) {
      o.r = rng.uniform(ext_lo, ext_hi);
    } else {
      for (int a = 0; a < 3; ++a) o.e[a] = rng.uniform(ext_lo, ext_hi);
    }
    o.albedo = cfg.palette[palette_order[i]];
    objects.push_back(o);
  }

  // --- render ---
  const std::array<double, 3> floor_albedo{0.45, 0.36, 0.28};
  const std::array<double, 3> wall_albedo{0.70, 0.70, 0.64};
  const std::array<double, 3> light =
      detail::normalize3({0.40, -0.75, -0.50});  // surface-to-light
  const double ambient = 0.30;

  SceneSample s;
  s.rgb = RgbImage(h, w);
  s.depth = DepthMap(h, w);
  s.n_objects = n_objects;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double u = (x - cx) / f, v = (y - cy) / f;
      // Background: floor if it is hit before the back wall, else wall.
      double t;
      std::array<double, 3> normal;
      const std::array<double, 3>* albedo;
      double t_floor = v > 0.0 ? floor_y / v : -1.0;
      if (t_floor > 0.0 && t_floor <= cfg.d_max) {
        t = t_floor;
        normal = {0.0, -1.0, 0.0};
        albedo = &floor_albedo;
      } else {
        t = cfg.d_max;
        normal = {0.0, 0.0, -1.0};
        albedo = &wall_albedo;
      }
      for (const auto& o : objects) {
        std::array<double, 3> n_obj;
        double t_obj = detail::intersect(o, u, v, n_obj);
        if (t_obj > 0.0 && t_obj < t) {
          t = t_obj;
          normal = n_obj;
          albedo = &o.albedo;
        }
      }
      double shade =
          ambient + (1.0 - ambient) * std::max(0.0, detail::dot3(normal, light));
      s.depth(x, y) = t;
      for (int c = 0; c < 3; ++c)
        s.rgb.channel(c)(x, y) = std::min(1.0, (*albedo)[c] * shade);
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Corruption protocols.
// ---------------------------------------------------------------------------

namespace detail {

// Partial Fisher-Yates: deterministically pick `count` entries of `pool`.
inline void partial_shuffle(std::vector<std::size_t>& pool, std::size_t count,
                            Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
}

inline std::vector<std::size_t> valid_indices(const DepthMap& d) {
  std::vector<std::size_t> idx;
  idx.reserve(d.size());
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d[i] > 0.0) idx.push_back(i);
  return idx;
}

}  // namespace detail

// Binary mask whose kept fraction lands within one pixel of `coverage`:
// random rectangles and scanline runs are carved out of an all-ones mask,
// the final shape truncated so the kept count is exact.
inline BitMask random_structured_mask(int height, int width, double coverage,
                                      std::uint64_t seed) {
  require(coverage >= 0.0 && coverage <= 1.0, errc::invalid_range,
          "coverage must lie in [0, 1]");
  BitMask m(height, width, 1);
  const long total = static_cast<long>(m.size());
  const long target_keep = std::lround(coverage * static_cast<double>(total));
  long kept = total;
  Rng rng(seed);
  int stalls = 0;
  while (kept > target_keep) {
    int x0, y0, x1, y1;
    if (rng.uniform01() < 0.5) {
      int rw = rng.uniform_int(1, std::max(2, width / 3));
      int rh = rng.uniform_int(1, std::max(2, height / 3));
      x0 = rng.uniform_int(0, width - 1);
      y0 = rng.uniform_int(0, height - 1);
      x1 = std::min(width - 1, x0 + rw - 1);
      y1 = std::min(height - 1, y0 + rh - 1);
    } else {  // scanline run
      y0 = y1 = rng.uniform_int(0, height - 1);
      x0 = rng.uniform_int(0, width - 1);
      x1 = std::min(width - 1, x0 + rng.uniform_int(1, std::max(2, width / 2)) - 1);
    }
    long removed_here = 0;
    for (int y = y0; y <= y1 && kept > target_keep; ++y)
      for (int x = x0; x <= x1 && kept > target_keep; ++x)
        if (m(x, y)) {
          m(x, y) = 0;
          --kept;
          ++removed_here;
        }
    if (removed_here == 0 && ++stalls >= 64) {
      // Degenerate targets (coverage near 0): sweep the remainder.
      for (std::size_t i = 0; i < m.size() && kept > target_keep; ++i)
        if (m[i]) {
          m[i] = 0;
          --kept;
        }
    }
  }
  return m;
}

// Keep exactly `count` valid pixels, chosen uniformly without replacement.
inline DepthMap sample_sparse(const DepthMap& d, int count,
                              std::uint64_t seed) {
  require(count >= 1, errc::invalid_config, "sample count must be positive");
  auto idx = detail::valid_indices(d);
  require(static_cast<std::size_t>(count) <= idx.size(),
          errc::too_few_valid_pixels,
          "requested more sparse samples than valid pixels");
  Rng rng(seed);
  detail::partial_shuffle(idx, static_cast<std::size_t>(count), rng);
  DepthMap out(d.height(), d.width());
  for (int i = 0; i < count; ++i) out[idx[i]] = d[idx[i]];
  return out;
}

// Add N(0, sigma^2) noise to exactly round(ratio * #valid) valid pixels,
// clamping at zero so depths stay non-negative. Returns the corrupted map
// and the mask of pixels that received noise.
inline std::pair<DepthMap, BitMask> inject_gaussian_noise(const DepthMap& d,
                                                          double ratio,
                                                          double sigma,
                                                          std::uint64_t seed) {
  require(ratio >= 0.0 && ratio <= 1.0, errc::invalid_range,
          "noise ratio must lie in [0, 1]");
  require(sigma >= 0.0, errc::invalid_range, "noise sigma must be >= 0");
  auto idx = detail::valid_indices(d);
  auto k = static_cast<std::size_t>(
      std::lround(ratio * static_cast<double>(idx.size())));
  Rng rng(seed);
  detail::partial_shuffle(idx, k, rng);
  DepthMap out = d;
  BitMask corrupted(d.height(), d.width());
  for (std::size_t i = 0; i < k; ++i) {
    out[idx[i]] = std::max(0.0, out[idx[i]] + sigma * rng.normal());
    corrupted[idx[i]] = 1;
  }
  return {std::move(out), std::move(corrupted)};
}

// Remove a random union of rectangles and ellipses until the removed-area
// fraction (relative to the full image) lands strictly above `lo` and at
// most `hi`. The landing count is drawn per seed, so different seeds fill
// the bin differently. Throws InfeasibleRange when no pixel count can land
// inside the bin at this resolution.
inline std::pair<DepthMap, BitMask> mask_holes(const DepthMap& d, double lo,
                                               double hi, std::uint64_t seed) {
  if (lo == 0.0 && hi == 0.0)  // degenerate bin: nothing to remove
    return {d, BitMask(d.height(), d.width())};
  require(lo >= 0.0 && hi <= 1.0 && lo < hi, errc::invalid_range,
          "hole-area range must satisfy 0 <= lo < hi <= 1");
  const auto total = static_cast<double>(d.size());
  auto idx = detail::valid_indices(d);
  long k_min = static_cast<long>(std::floor(lo * total)) + 1;
  long k_max = static_cast<long>(std::floor(hi * total));
  k_max = std::min(k_max, static_cast<long>(idx.size()));
  require(k_min <= k_max, errc::infeasible_range,
          "cannot land a removed-area fraction inside the requested range");
  Rng rng(seed);
  long k_target =
      k_min + static_cast<long>(rng.uniform_int(
                  static_cast<std::uint64_t>(k_max - k_min + 1)));

  DepthMap out = d;
  BitMask holes(d.height(), d.width());
  const int w = d.width(), h = d.height();
  long removed = 0;
  int stalls = 0;
  while (removed < k_target) {
    bool ellipse = rng.uniform01() < 0.5;
    int ax = rng.uniform_int(2, std::max(3, w / 4));
    int ay = rng.uniform_int(2, std::max(3, h / 4));
    int cx = rng.uniform_int(0, w - 1);
    int cy = rng.uniform_int(0, h - 1);
    long removed_here = 0;
    for (int y = std::max(0, cy - ay); y <= std::min(h - 1, cy + ay) && removed < k_target; ++y) {
      for (int x = std::max(0, cx - ax); x <= std::min(w - 1, cx + ax) && removed < k_target; ++x) {
        if (ellipse) {
          double nx = static_cast<double>(x - cx) / ax;
          double ny = static_cast<double>(y - cy) / ay;
          if (nx * nx + ny * ny > 1.0) continue;
        }
        if (out(x, y) > 0.0) {
          out(x, y) = 0.0;
          holes(x, y) = 1;
          ++removed;
          ++removed_here;
        }
      }
    }
    if (removed_here == 0 && ++stalls >= 64) {
      for (std::size_t i = 0; i < out.size() && removed < k_target; ++i)
        if (out[i] > 0.0) {
          out[i] = 0.0;
          holes[i] = 1;
          ++removed;
        }
    }
  }
  return {std::move(out), std::move(holes)};
}

// ---------------------------------------------------------------------------
// Corruption protocol driver.
// ---------------------------------------------------------------------------

enum class CorruptionMode { sparse_noise, holes, structured_mask };

inline const char* corruption_mode_name(CorruptionMode m) {
  switch (m) {
    case CorruptionMode::sparse_noise: return "sparse+noise";
    case CorruptionMode::holes: return "holes";
    case CorruptionMode::structured_mask: return "structured-mask";
  }
  return "?";
}

inline CorruptionMode parse_corruption_mode(const std::string& s) {
  if (s == "sparse+noise") return CorruptionMode::sparse_noise;
  if (s == "holes") return CorruptionMode::holes;
  if (s == "structured-mask") return CorruptionMode::structured_mask;
  fail(errc::invalid_config, "unknown corruption mode '" + s + "'");
}

struct CorruptionSpec {
  CorruptionMode mode = CorruptionMode::sparse_noise;
  double noise_ratio = 0.10;  // fraction of valid pixels that get noise
  double noise_sigma = 0.0;   // scene units; <= 0 resolves to 15% of range
  long sparse_count = 500;
  double h2i_lo = 0.01;       // hole-to-image area bin (lo, hi]
  double h2i_hi = 0.10;
  double coverage = 0.5;      // structured-mask kept fraction
  std::uint64_t seed = 1;

  void validate() const {
    require(noise_ratio >= 0.0 && noise_ratio <= 1.0, errc::invalid_range,
            "noise ratio must lie in [0, 1]");
    require(sparse_count >= 1, errc::invalid_config,
            "sparse count must be >= 1");
    require((h2i_lo == 0.0 && h2i_hi == 0.0) ||
                (h2i_lo >= 0.0 && h2i_lo < h2i_hi && h2i_hi <= 1.0),
            errc::invalid_range, "h2i range must satisfy 0 <= lo < hi <= 1");
    require(coverage > 0.0 && coverage <= 1.0, errc::invalid_range,
            "coverage must lie in (0, 1]");
  }

  double resolved_sigma(double depth_range) const {
    return noise_sigma > 0.0 ? noise_sigma : 0.15 * depth_range;
  }
};

struct CorruptionResult {
  DepthMap d_cond;   // conditioned depth after corruption (0 = missing)
  BitMask m;         // validity mask of d_cond
  BitMask affected;  // ground truth: pixels that were noised or removed
};

// Applies one corruption protocol to a dense ground-truth depth map.
// `depth_range` (scene units) only feeds the default noise sigma.
inline CorruptionResult apply_corruption(const DepthMap& d_true,
                                         const CorruptionSpec& spec,
                                         double depth_range) {
  spec.validate();
  CorruptionResult res;
  switch (spec.mode) {
    case CorruptionMode::sparse_noise: {
      DepthMap sparse =
          sample_sparse(d_true, spec.sparse_count, derive_seed(spec.seed, 0));
      auto [noised, corrupted] =
          inject_gaussian_noise(sparse, spec.noise_ratio,
                                spec.resolved_sigma(depth_range),
                                derive_seed(spec.seed, 1));
      res.d_cond = std::move(noised);
      res.affected = std::move(corrupted);
      break;
    }
    case CorruptionMode::holes: {
      auto [holed, removed] =
          mask_holes(d_true, spec.h2i_lo, spec.h2i_hi, spec.seed);
      res.d_cond = std::move(holed);
      res.affected = std::move(removed);
      break;
    }
    case CorruptionMode::structured_mask: {
      BitMask keep = random_structured_mask(d_true.height(), d_true.width(),
                                            spec.coverage, spec.seed);
      res.d_cond = DepthMap(d_true.height(), d_true.width());
      res.affected = BitMask(d_true.height(), d_true.width());
      for (std::size_t i = 0; i < d_true.size(); ++i) {
        if (keep[i])
          res.d_cond[i] = d_true[i];
        else
          res.affected[i] = d_true[i] > 0.0 ? 1 : 0;
      }
      break;
    }
  }
  res.m = valid_mask(res.d_cond);
  return res;
}

}  // namespace depthforge
