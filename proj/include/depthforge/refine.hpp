#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "depth.hpp"
#include "errors.hpp"
#include "gmrf.hpp"
#include "grid.hpp"

namespace depthforge {

// ---------------------------------------------------------------------------
// Certainty mask and morphology.
// ---------------------------------------------------------------------------

// 1 where the ensemble variance is at most eps, 0 where it exceeds it.
inline BitMask certainty_mask(const Grid<double>& sigma2, double eps) {
  require(eps > 0.0, errc::invalid_config,
          "certainty threshold must be positive");
  BitMask m(sigma2.height(), sigma2.width());
  for (std::size_t i = 0; i < sigma2.size(); ++i)
    m[i] = sigma2[i] > eps ? 0 : 1;
  return m;
}

namespace detail {

// Min/max filters over a clipped square window. Clipping keeps erosion and
// dilation an adjoint pair at the border (the neighborhood relation stays
// symmetric), which is what makes opening idempotent.
template <bool kMax>
BitMask minmax_filter(const BitMask& m, int radius) {
  BitMask out(m.height(), m.width());
  for (int y = 0; y < m.height(); ++y) {
    for (int x = 0; x < m.width(); ++x) {
      std::uint8_t v = kMax ? 0 : 1;
      for (int dy = -radius; dy <= radius; ++dy) {
        int yy = std::clamp(y + dy, 0, m.height() - 1);
        for (int dx = -radius; dx <= radius; ++dx) {
          int xx = std::clamp(x + dx, 0, m.width() - 1);
          if (kMax)
            v = std::max(v, m(xx, yy));
          else
            v = std::min(v, m(xx, yy));
        }
      }
      out(x, y) = v;
    }
  }
  return out;
}

}  // namespace detail

inline BitMask erode(const BitMask& m, int radius) {
  require(radius >= 0, errc::invalid_config, "radius must be >= 0");
  return radius == 0 ? m : detail::minmax_filter<false>(m, radius);
}

inline BitMask dilate(const BitMask& m, int radius) {
  require(radius >= 0, errc::invalid_config, "radius must be >= 0");
  return radius == 0 ? m : detail::minmax_filter<true>(m, radius);
}

// Opening (erosion then dilation) with a (2r+1)^2 square element; removes
// kept islands smaller than the element without growing the kept region.
inline BitMask morphological_open(const BitMask& m, int radius) {
  return dilate(erode(m, radius), radius);
}

// ---------------------------------------------------------------------------
// Reliable depth and scale/shift recovery.
// ---------------------------------------------------------------------------

// Keep conditioned depth only where both the validity mask and the (opened)
// certainty mask agree.
inline std::pair<DepthMap, BitMask> reliable_depth(const DepthMap& d_cond,
                                                   const BitMask& m,
                                                   const BitMask& m_sigma) {
  require(d_cond.same_shape_as(m) && d_cond.same_shape_as(m_sigma),
          errc::dimension_mismatch, "reliable_depth shape mismatch");
  DepthMap d_rel(d_cond.height(), d_cond.width());
  BitMask keep(d_cond.height(), d_cond.width());
  bool any = false;
  for (std::size_t i = 0; i < d_cond.size(); ++i) {
    if (m[i] && m_sigma[i]) {
      keep[i] = 1;
      d_rel[i] = d_cond[i];
      any = true;
    }
  }
  require(any, errc::empty_reliable_set,
          "no conditioned pixel survived the certainty mask");
  return {std::move(d_rel), std::move(keep)};
}

struct ScaleShiftFit {
  double a = 1.0;
  double b = 0.0;
  double residual_rms = 0.0;
  long support_count = 0;
};

// Closed-form least squares d ~ a * mu + b over the support pixels.
inline ScaleShiftFit fit_scale_shift(const DepthMap& d_rel,
                                     const Grid<double>& mu_hat,
                                     const BitMask& support) {
  require(d_rel.same_shape_as(mu_hat) && d_rel.same_shape_as(support),
          errc::dimension_mismatch, "fit_scale_shift shape mismatch");
  long n = 0;
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (!support[i]) continue;
    mean_x += mu_hat[i];
    mean_y += d_rel[i];
    ++n;
  }
  require(n >= 2, errc::singular_fit,
          "scale-shift fit needs at least two support pixels");
  mean_x /= static_cast<double>(n);
  mean_y /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (!support[i]) continue;
    double dx = mu_hat[i] - mean_x;
    sxx += dx * dx;
    sxy += dx * (d_rel[i] - mean_y);
  }
  require(sxx > 1e-15 * static_cast<double>(n) * (1.0 + mean_x * mean_x),
          errc::singular_fit,
          "regressor is constant on the support; scale is unidentifiable");
  ScaleShiftFit fit;
  fit.a = sxy / sxx;
  fit.b = mean_y - fit.a * mean_x;
  fit.support_count = n;
  double ss = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i) {
    if (!support[i]) continue;
    double e = d_rel[i] - (fit.a * mu_hat[i] + fit.b);
    ss += e * e;
  }
  fit.residual_rms = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

// ---------------------------------------------------------------------------
// Guidance features.
// ---------------------------------------------------------------------------

// Fixed-length per-pixel feature vectors steering the propagation weights:
// RGB, RGB gradient magnitude, the ensemble-mean depth and its gradient
// magnitude, the ensemble variance, and the reliability bit. Every channel
// is affinely rescaled to [0, 1] over the image (constant channels go to 0),
// which also makes the features invariant to affine rescaling of their
// depth inputs.
struct GuidanceFeatures {
  static constexpr int n_channels = 8;
  int height = 0, width = 0;
  std::vector<double> data;  // pixel-major: data[p * n_channels + c]

  const double* at(std::size_t p) const { return &data[p * n_channels]; }

  double dist2(std::size_t p, std::size_t q) const {
    const double* a = at(p);
    const double* b = at(q);
    double s = 0.0;
    for (int c = 0; c < n_channels; ++c) {
      double d = a[c] - b[c];
      s += d * d;
    }
    return s;
  }
};

namespace detail {

inline Grid<double> gradient_magnitude(const Grid<double>* chans, int n) {
  const int h = chans[0].height(), w = chans[0].width();
  Grid<double> out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int c = 0; c < n; ++c) {
        const Grid<double>& g = chans[c];
        double gx = 0.5 * (g(std::min(x + 1, w - 1), y) -
                           g(std::max(x - 1, 0), y));
        double gy = 0.5 * (g(x, std::min(y + 1, h - 1)) -
                           g(x, std::max(y - 1, 0)));
        s += gx * gx + gy * gy;
      }
      out(x, y) = std::sqrt(s);
    }
  }
  return out;
}

inline void rescale01(Grid<double>& g) {
  double lo = g[0], hi = g[0];
  for (std::size_t i = 0; i < g.size(); ++i) {
    lo = std::min(lo, g[i]);
    hi = std::max(hi, g[i]);
  }
  if (hi <= lo) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = 0.0;
    return;
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (g[i] - lo) / (hi - lo);
}

}  // namespace detail

inline GuidanceFeatures guidance_features(const RgbImage& rgb,
                                          const DepthMap& d_rel,
                                          const Grid<double>& d_mu,
                                          const Grid<double>& sigma2) {
  require(rgb.r.same_shape_as(d_rel) && d_rel.same_shape_as(d_mu) &&
              d_rel.same_shape_as(sigma2),
          errc::dimension_mismatch, "guidance_features shape mismatch");
  const int h = d_rel.height(), w = d_rel.width();

  Grid<double> chans[8];
  chans[0] = rgb.r;
  chans[1] = rgb.g;
  chans[2] = rgb.b;
  const Grid<double> rgb_chans[3] = {rgb.r, rgb.g, rgb.b};
  chans[3] = detail::gradient_magnitude(rgb_chans, 3);
  chans[4] = d_mu;
  chans[5] = detail::gradient_magnitude(&d_mu, 1);
  chans[6] = sigma2;
  chans[7] = Grid<double>(h, w);
  for (std::size_t i = 0; i < chans[7].size(); ++i)
    chans[7][i] = d_rel[i] > 0.0 ? 1.0 : 0.0;

  GuidanceFeatures g;
  g.height = h;
  g.width = w;
  g.data.resize(static_cast<std::size_t>(h) * w * GuidanceFeatures::n_channels);
  for (int c = 0; c < GuidanceFeatures::n_channels; ++c) {
    detail::rescale01(chans[c]);
    for (std::size_t p = 0; p < chans[c].size(); ++p)
      g.data[p * GuidanceFeatures::n_channels + c] = chans[c][p];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Masked spatial propagation.
// ---------------------------------------------------------------------------

struct RefineState {
  DepthMap depth;
  BitMask mask;
  int iteration = 0;
};

struct MspnParams {
  double bandwidth = 0.2;  // h in the affinity exp(-|g_p - g_q|^2 / h^2)
  double gamma_max = 0.3;  // cap of the uncertainty-driven blend
  double eps = 0.01;       // variance scale of the blend ramp
};

// One Jacobi-style propagation pass over a (window x window) neighborhood.
// Unfilled pixels with at least one filled window neighbor become filled
// with the affinity-weighted average of those neighbors; already-filled
// pixels blend toward their window average with weight
// gamma_p = gamma_max * min(1, sigma2_p / eps). The filled mask only grows.
inline RefineState mspn_step(const RefineState& state,
                             const GuidanceFeatures& g, int window,
                             const Grid<double>& sigma2,
                             const MspnParams& params) {
  require(window >= 1 && window % 2 == 1, errc::invalid_config,
          "propagation window must be odd and positive");
  require(params.bandwidth > 0.0 && params.eps > 0.0 &&
              params.gamma_max >= 0.0 && params.gamma_max <= 1.0,
          errc::invalid_config, "invalid propagation parameters");
  require(state.depth.same_shape_as(state.mask) &&
              state.depth.same_shape_as(sigma2) &&
              state.depth.height() == g.height &&
              state.depth.width() == g.width,
          errc::dimension_mismatch, "mspn_step shape mismatch");

  const int h = state.depth.height(), w = state.depth.width();
  const int r = window / 2;
  const double inv_h2 = 1.0 / (params.bandwidth * params.bandwidth);

  RefineState next = state;
  next.iteration = state.iteration + 1;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t p = state.depth.index(x, y);
      // Two passes: the smallest feature distance in the window is factored
      // out of every exponent. The common factor cancels in the normalized
      // average, so the result is unchanged while the weights stay
      // representable even for very sharp bandwidths.
      double min_d2 = std::numeric_limits<double>::infinity();
      for (int dy = -r; dy <= r; ++dy) {
        int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          std::size_t q = state.depth.index(xx, yy);
          if (!state.mask[q]) continue;
          min_d2 = std::min(min_d2, g.dist2(p, q));
        }
      }
      double sum_w = 0.0, sum_wd = 0.0;
      if (std::isfinite(min_d2)) {
        for (int dy = -r; dy <= r; ++dy) {
          int yy = y + dy;
          if (yy < 0 || yy >= h) continue;
          for (int dx = -r; dx <= r; ++dx) {
            int xx = x + dx;
            if (xx < 0 || xx >= w) continue;
            std::size_t q = state.depth.index(xx, yy);
            if (!state.mask[q]) continue;
            double alpha = std::exp(-(g.dist2(p, q) - min_d2) * inv_h2);
            sum_w += alpha;
            sum_wd += alpha * state.depth[q];
          }
        }
      }
      if (!state.mask[p]) {
        if (sum_w > 0.0) {
          next.depth[p] = sum_wd / sum_w;
          next.mask[p] = 1;
        }
      } else {
        double gamma =
            params.gamma_max * std::min(1.0, sigma2[p] / params.eps);
        next.depth[p] =
            (1.0 - gamma) * state.depth[p] + gamma * (sum_wd / sum_w);
      }
    }
  }
  return next;
}

// ---------------------------------------------------------------------------
// Stage-2 driver.
// ---------------------------------------------------------------------------

struct RefineConfig {
  double eps = 0.01;                // certainty threshold on sigma2
  int opening_radius = 1;           // 0 disables opening (sparse conditioning)
  int iterations = 6;               // K
  std::vector<int> windows = {13, 3};  // chained per-iteration window sizes
  double bandwidth = 0.2;           // affinity bandwidth h
  double gamma_max = 0.3;
  bool use_sigma2 = true;  // ablation: sigma2 guidance channel + adaptive blend

  void validate() const {
    require(eps > 0.0, errc::invalid_config, "eps must be positive");
    require(opening_radius >= 0, errc::invalid_config,
            "opening radius must be >= 0");
    require(iterations >= 0, errc::invalid_config, "iterations must be >= 0");
    require(!windows.empty(), errc::invalid_config,
            "window schedule must not be empty");
    for (int w : windows)
      require(w >= 1 && w % 2 == 1, errc::invalid_config,
              "window sizes must be odd and positive");
    require(bandwidth > 0.0 && gamma_max >= 0.0 && gamma_max <= 1.0,
            errc::invalid_config, "invalid bandwidth or gamma_max");
  }
};

struct RefineResult {
  DepthMap refined;             // scene units; dense once propagation covers
  BitMask final_mask;
  ScaleShiftFit fit;            // mu_hat (normalized) -> scene units
  BitMask certainty;            // raw certainty mask
  BitMask certainty_opened;     // after morphological opening
  BitMask reliable;             // conditioning AND opened certainty
  DepthMap d_rel;               // reliable depth, scene units
  Grid<double> d_mu_scene;      // fit.a * mu_hat + fit.b, dense scene units
};

// Deterministic refinement: threshold the ensemble variance, clean the mask
// by opening, keep reliable conditioned depth, recover the scale/shift of
// the ensemble mean, then run K iterations of guided propagation seeded by
// the reliable depth. Guidance depth channels use the normalized ensemble
// mean, so the propagation arithmetic is affine-equivariant in the
// conditioned depth.
inline RefineResult refine(const Grid<double>& d_cond_norm, const BitMask& m,
                           const EnsembleStats& stats, const RgbImage& rgb,
                           const NormalizationParams& norm,
                           const RefineConfig& cfg) {
  cfg.validate();
  require(d_cond_norm.same_shape_as(m) &&
              d_cond_norm.same_shape_as(stats.mu_hat) &&
              d_cond_norm.same_shape_as(stats.sigma2_hat) &&
              rgb.r.same_shape_as(d_cond_norm),
          errc::dimension_mismatch, "refine input shape mismatch");

  RefineResult res;
  res.certainty = certainty_mask(stats.sigma2_hat, cfg.eps);
  res.certainty_opened = morphological_open(res.certainty, cfg.opening_radius);

  DepthMap d_scene = denormalize_depth(d_cond_norm, norm, m);
  auto [d_rel, rel_mask] = reliable_depth(d_scene, m, res.certainty_opened);
  res.d_rel = std::move(d_rel);
  res.reliable = std::move(rel_mask);

  res.fit = fit_scale_shift(res.d_rel, stats.mu_hat, res.reliable);
  res.d_mu_scene = Grid<double>(d_scene.height(), d_scene.width());
  for (std::size_t i = 0; i < res.d_mu_scene.size(); ++i)
    res.d_mu_scene[i] = res.fit.a * stats.mu_hat[i] + res.fit.b;

  // With use_sigma2 off, the variance channel is dropped from the guidance
  // and the blend loses its per-pixel adaptivity: every filled pixel updates
  // at the full cap instead of in proportion to its uncertainty. The update
  // mechanism itself stays in place; only the uncertainty signal is removed.
  Grid<double> sigma2_channel = stats.sigma2_hat;
  Grid<double> blend_sigma2 = stats.sigma2_hat;
  if (!cfg.use_sigma2) {
    sigma2_channel = Grid<double>(d_scene.height(), d_scene.width());
    blend_sigma2 = Grid<double>(d_scene.height(), d_scene.width(), cfg.eps);
  }
  GuidanceFeatures g =
      guidance_features(rgb, res.d_rel, stats.mu_hat, sigma2_channel);

  MspnParams mp;
  mp.bandwidth = cfg.bandwidth;
  mp.gamma_max = cfg.gamma_max;
  mp.eps = cfg.eps;

  RefineState state{res.d_rel, res.reliable, 0};
  for (int k = 0; k < cfg.iterations; ++k)
    for (int w : cfg.windows)
      state = mspn_step(state, g, w, blend_sigma2, mp);

  res.refined = std::move(state.depth);
  res.final_mask = std::move(state.mask);
  return res;
}

}  // namespace depthforge
