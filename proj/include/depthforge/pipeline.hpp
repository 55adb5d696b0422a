#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "depth.hpp"
#include "errors.hpp"
#include "gmrf.hpp"
#include "grid.hpp"
#include "metrics.hpp"
#include "refine.hpp"
#include "synth.hpp"

namespace depthforge {

// ---------------------------------------------------------------------------
// Parallel map over an index range. DEPTHFORGE_THREADS caps the worker
// count (default: hardware concurrency). Tasks must be independent and
// write disjoint outputs; results are then identical for any thread count.
// ---------------------------------------------------------------------------

inline int thread_cap() {
  int cap = static_cast<int>(std::thread::hardware_concurrency());
  if (cap < 1) cap = 1;
  if (const char* env = std::getenv("DEPTHFORGE_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) cap = static_cast<int>(v);
  }
  return cap;
}

template <typename F>
void parallel_for(long n, F&& f) {
  if (n <= 0) return;
  long workers = std::min<long>(thread_cap(), n);
  if (workers <= 1) {
    for (long i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<long> next{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      long i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(n);  // stop handing out work
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (long t = 0; t < workers; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

// ---------------------------------------------------------------------------
// End-to-end pipeline on one (image, conditioned depth) pair.
// ---------------------------------------------------------------------------

struct PipelineConfig {
  GmrfParams gmrf;
  RefineConfig refine;
  int n_samples = 10;
  std::uint64_t seed = 0;

  void validate() const {
    gmrf.validate();
    refine.validate();
    require(n_samples >= 1, errc::invalid_config, "n_samples must be >= 1");
  }
};

struct PipelineResult {
  BitMask m;                 // validity of the conditioned depth
  NormalizationParams norm;  // conditioned-depth normalization
  EnsembleStats stats;       // normalized units
  RefineResult ref;          // stage-2 outputs, scene units
  DepthMap diff_only;        // rescaled ensemble mean, reliable passthrough
};

// Normalize, run the stochastic estimator, refine, and also form the
// "diff-only" output: the least-squares-rescaled ensemble mean inpainting
// the image, with reliable conditioned depth passed through untouched.
inline PipelineResult run_pipeline(const RgbImage& rgb, const DepthMap& d_cond,
                                   const PipelineConfig& cfg) {
  cfg.validate();
  PipelineResult res;
  res.m = valid_mask(d_cond);
  auto [d_norm, norm] = normalize_depth(d_cond);
  res.norm = norm;
  res.stats =
      estimate(rgb, d_norm, res.m, cfg.n_samples, cfg.seed, cfg.gmrf);
  res.ref = refine(d_norm, res.m, res.stats, rgb, norm, cfg.refine);
  res.diff_only = res.ref.d_mu_scene;
  for (std::size_t i = 0; i < res.diff_only.size(); ++i)
    if (res.ref.reliable[i]) res.diff_only[i] = res.ref.d_rel[i];
  return res;
}

// ---------------------------------------------------------------------------
// Baselines.
// ---------------------------------------------------------------------------

// Naive completion that trusts every conditioned pixel: the same propagation
// machinery as the full pipeline, but fed a zero variance map so that no
// reliability filtering, uncertainty channel, or blending takes place. Every
// conditioned pixel (noisy ones included) is kept verbatim as a seed and
// injected noise survives into the output.
inline DepthMap raw_completion(const RgbImage& rgb, const DepthMap& d_cond,
                               PipelineConfig cfg) {
  cfg.gmrf.irls_max_iters = 0;  // trust everything: no reweighting
  cfg.validate();
  BitMask m = valid_mask(d_cond);
  auto [d_norm, norm] = normalize_depth(d_cond);
  GmrfModel model = build_gmrf(rgb, d_norm, m, cfg.gmrf);
  std::vector<Grid<double>> samples;
  samples.reserve(static_cast<std::size_t>(cfg.n_samples));
  for (int i = 0; i < cfg.n_samples; ++i)
    samples.push_back(sample_posterior(
        model, derive_seed(cfg.seed, static_cast<std::uint64_t>(i))));
  EnsembleStats stats = ensemble_stats(samples);
  std::fill(stats.sigma2_hat.values().begin(), stats.sigma2_hat.values().end(),
            0.0);
  RefineResult ref = refine(d_norm, m, stats, rgb, norm, cfg.refine);
  return ref.refined;
}

// Image-only reconstruction: the ensemble mean of the prior anchored by a
// negligible zero-precision observation everywhere (no depth conditioning),
// least-squares rescaled onto the observed depth. This is the dense depth
// the smoothness prior alone can supply.
inline DepthMap prior_only_reconstruction(const RgbImage& rgb,
                                          const DepthMap& d_obs_scene,
                                          const BitMask& m_obs, int n_samples,
                                          std::uint64_t seed,
                                          GmrfParams params) {
  require(n_samples >= 1, errc::invalid_config, "n_samples must be >= 1");
  params.irls_max_iters = 0;
  params.tau = 1e-4;
  DepthMap zeros(d_obs_scene.height(), d_obs_scene.width());
  BitMask ones(d_obs_scene.height(), d_obs_scene.width(), 1);
  GmrfModel model = build_gmrf(rgb, zeros, ones, params);
  std::vector<Grid<double>> samples;
  samples.reserve(static_cast<std::size_t>(n_samples));
  for (int i = 0; i < n_samples; ++i)
    samples.push_back(sample_posterior(model, derive_seed(seed, i)));
  EnsembleStats stats = ensemble_stats(samples);
  ScaleShiftFit fit = fit_scale_shift(d_obs_scene, stats.mu_hat, m_obs);
  DepthMap out(d_obs_scene.height(), d_obs_scene.width());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = fit.a * stats.mu_hat[i] + fit.b;
  return out;
}

// ---------------------------------------------------------------------------
// Experiment drivers (seed-grid protocols).
// ---------------------------------------------------------------------------

struct ExperimentRow {
  std::string protocol;   // noisy-completion | inpainting
  std::string seed;       // scene seed, or "mean" for the aggregate row
  std::string condition;  // e.g. "ratio=0.1" or "h2i=(0.01,0.1]"
  long n_eval = 0;
  double rmse_refined = 0.0;
  double rmse_baseline = 0.0;  // raw completion / prior-only reconstruction
  double rmse_diff_only = 0.0;
  double delta125_refined = 0.0;
  double kendall_refined = 0.0;
};

inline std::string experiment_csv_header() {
  return "protocol,seed,condition,n_eval,rmse_refined,rmse_baseline,"
         "rmse_diff_only,delta125_refined,kendall_refined";
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::string to_csv(const ExperimentRow& r) {
  return r.protocol + "," + r.seed + "," + r.condition + "," +
         std::to_string(r.n_eval) + "," + format_double(r.rmse_refined) +
         "," + format_double(r.rmse_baseline) + "," +
         format_double(r.rmse_diff_only) + "," +
         format_double(r.delta125_refined) + "," +
         format_double(r.kendall_refined);
}

// Mean over seeds, one aggregate row per distinct condition, in first-seen
// condition order.
inline std::vector<ExperimentRow> aggregate_rows(
    const std::vector<ExperimentRow>& rows) {
  std::vector<ExperimentRow> agg;
  std::vector<long> counts;
  for (const auto& r : rows) {
    std::size_t j = 0;
    for (; j < agg.size(); ++j)
      if (agg[j].condition == r.condition) break;
    if (j == agg.size()) {
      ExperimentRow a;
      a.protocol = r.protocol;
      a.seed = "mean";
      a.condition = r.condition;
      agg.push_back(a);
      counts.push_back(0);
    }
    agg[j].n_eval += r.n_eval;
    agg[j].rmse_refined += r.rmse_refined;
    agg[j].rmse_baseline += r.rmse_baseline;
    agg[j].rmse_diff_only += r.rmse_diff_only;
    agg[j].delta125_refined += r.delta125_refined;
    agg[j].kendall_refined += r.kendall_refined;
    ++counts[j];
  }
  for (std::size_t j = 0; j < agg.size(); ++j) {
    double n = static_cast<double>(counts[j]);
    agg[j].n_eval = static_cast<long>(agg[j].n_eval / counts[j]);
    agg[j].rmse_refined /= n;
    agg[j].rmse_baseline /= n;
    agg[j].rmse_diff_only /= n;
    agg[j].delta125_refined /= n;
    agg[j].kendall_refined /= n;
  }
  return agg;
}

namespace detail {

inline BitMask and_masks(const BitMask& a, const BitMask& b) {
  BitMask out(a.height(), a.width());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] && b[i] ? 1 : 0;
  return out;
}

}  // namespace detail

// Full per-case artifacts; the CSV row is derived from them. Kept so that
// sweep panels and validation suites can inspect intermediate maps.
struct NoisyCompletionCase {
  SceneSample scene;
  CorruptionResult cor;
  PipelineResult pipe;
  DepthMap raw;  // naive completion baseline, scene units
  ExperimentRow row;
};

struct InpaintingCase {
  SceneSample scene;
  CorruptionResult cor;
  PipelineResult pipe;
  DepthMap prior;  // prior-only reconstruction baseline, scene units
  ExperimentRow row;
};

// One noisy-completion case: sparse conditioning with a noised fraction;
// refined output compared against the naive raw completion, evaluated
// densely wherever propagation produced depth. Sparse conditioning keeps
// isolated reliable seeds, so the certainty opening is disabled here.
inline NoisyCompletionCase run_noisy_completion_full(std::uint64_t scene_seed,
                                                     double noise_ratio,
                                                     const SceneConfig& scene_cfg,
                                                     PipelineConfig cfg,
                                                     CorruptionSpec spec) {
  NoisyCompletionCase out;
  out.scene = generate_scene(scene_seed, scene_cfg);
  spec.mode = CorruptionMode::sparse_noise;
  spec.noise_ratio = noise_ratio;
  spec.seed = derive_seed(scene_seed, 1);
  out.cor = apply_corruption(out.scene.depth, spec,
                             scene_cfg.d_max - scene_cfg.d_min);

  cfg.refine.opening_radius = 0;
  cfg.seed = derive_seed(scene_seed, 2);
  out.pipe = run_pipeline(out.scene.rgb, out.cor.d_cond, cfg);
  out.raw = raw_completion(out.scene.rgb, out.cor.d_cond, cfg);

  BitMask region = detail::and_masks(out.pipe.ref.final_mask,
                                     valid_mask(out.scene.depth));
  ExperimentRow& row = out.row;
  row.protocol = "noisy-completion";
  row.seed = std::to_string(scene_seed);
  row.condition = "ratio=" + format_double(noise_ratio);
  EvalReport rep = evaluate(out.pipe.ref.refined, out.scene.depth, region);
  row.n_eval = rep.n_pixels;
  row.rmse_refined = rep.rmse;
  row.delta125_refined = rep.delta.at(1.25);
  row.kendall_refined = rep.kendall;
  row.rmse_baseline = rmse(out.raw, out.scene.depth, region);
  row.rmse_diff_only = rmse(out.pipe.diff_only, out.scene.depth, region);
  return out;
}

inline ExperimentRow run_noisy_completion_case(std::uint64_t scene_seed,
                                               double noise_ratio,
                                               const SceneConfig& scene_cfg,
                                               const PipelineConfig& cfg,
                                               const CorruptionSpec& spec) {
  return run_noisy_completion_full(scene_seed, noise_ratio, scene_cfg, cfg,
                                   spec)
      .row;
}

// One inpainting case: dense conditioning with holes in a given H2I bin;
// refined output compared against the prior-only reconstruction, evaluated
// inside the holes only.
inline InpaintingCase run_inpainting_full(std::uint64_t scene_seed,
                                          double h2i_lo, double h2i_hi,
                                          const SceneConfig& scene_cfg,
                                          PipelineConfig cfg,
                                          CorruptionSpec spec) {
  InpaintingCase out;
  out.scene = generate_scene(scene_seed, scene_cfg);
  spec.mode = CorruptionMode::holes;
  spec.h2i_lo = h2i_lo;
  spec.h2i_hi = h2i_hi;
  spec.seed = derive_seed(scene_seed, 1);
  out.cor = apply_corruption(out.scene.depth, spec,
                             scene_cfg.d_max - scene_cfg.d_min);

  cfg.seed = derive_seed(scene_seed, 2);
  out.pipe = run_pipeline(out.scene.rgb, out.cor.d_cond, cfg);
  out.prior = prior_only_reconstruction(out.scene.rgb, out.cor.d_cond,
                                        out.cor.m, cfg.n_samples,
                                        derive_seed(scene_seed, 3), cfg.gmrf);

  BitMask region =
      detail::and_masks(out.cor.affected, out.pipe.ref.final_mask);
  region = detail::and_masks(region, valid_mask(out.scene.depth));
  ExperimentRow& row = out.row;
  row.protocol = "inpainting";
  row.seed = std::to_string(scene_seed);
  row.condition = "h2i=(" + format_double(h2i_lo) + "," +
                  format_double(h2i_hi) + "]";
  EvalReport rep = evaluate(out.pipe.ref.refined, out.scene.depth, region);
  row.n_eval = rep.n_pixels;
  row.rmse_refined = rep.rmse;
  row.delta125_refined = rep.delta.at(1.25);
  row.kendall_refined = rep.kendall;
  row.rmse_baseline = rmse(out.prior, out.scene.depth, region);
  row.rmse_diff_only = rmse(out.pipe.diff_only, out.scene.depth, region);
  return out;
}

inline ExperimentRow run_inpainting_case(std::uint64_t scene_seed,
                                         double h2i_lo, double h2i_hi,
                                         const SceneConfig& scene_cfg,
                                         const PipelineConfig& cfg,
                                         const CorruptionSpec& spec) {
  return run_inpainting_full(scene_seed, h2i_lo, h2i_hi, scene_cfg, cfg, spec)
      .row;
}

}  // namespace depthforge
