// depthforge: command-line surface for the two-stage depth enhancement
// toolkit. Subcommands: synth, corrupt, estimate, refine, pipeline, eval,
// experiment, sweep. Exit codes: 0 success, 2 configuration errors,
// 3 I/O errors, 4 numerical failures.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "depthforge/config.hpp"
#include "depthforge/pnm_io.hpp"

namespace fs = std::filesystem;
using namespace depthforge;

namespace {

// --------------------------------------------------------------------------
// Small shared helpers.
// --------------------------------------------------------------------------

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec && fs::is_directory(dir), errc::io_failure,
          "cannot create output directory " + dir);
}

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_text(const std::string& path, const std::string& content) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  require(f != nullptr, errc::io_failure, "cannot open " + path);
  std::size_t n = std::fwrite(content.data(), 1, content.size(), f);
  bool ok = n == content.size() && std::fclose(f) == 0;
  require(ok, errc::io_failure, "failed writing " + path);
}

// Seed specs: comma-separated entries, each a single seed or an inclusive
// range "a..b". Empty spec means zero seeds.
std::vector<std::uint64_t> parse_seed_spec(const std::string& spec) {
  std::vector<std::uint64_t> seeds;
  if (detail::trim(spec).empty()) return seeds;
  for (const auto& raw : detail::split(spec, ',')) {
    std::string part = detail::trim(raw);
    std::size_t dots = part.find("..");
    if (dots == std::string::npos) {
      seeds.push_back(detail::parse_u64_value("seeds", part));
    } else {
      std::uint64_t a =
          detail::parse_u64_value("seeds", detail::trim(part.substr(0, dots)));
      std::uint64_t b = detail::parse_u64_value(
          "seeds", detail::trim(part.substr(dots + 2)));
      require(a <= b, errc::invalid_config, "seed range must be ascending");
      for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    }
  }
  return seeds;
}

std::pair<int, int> parse_dims(const std::string& spec) {
  std::size_t x = spec.find('x');
  require(x != std::string::npos && x > 0 && x + 1 < spec.size(),
          errc::invalid_config, "dims must look like 64x48 (WxH)");
  int w = static_cast<int>(
      detail::parse_long_value("dims", detail::trim(spec.substr(0, x))));
  int h = static_cast<int>(
      detail::parse_long_value("dims", detail::trim(spec.substr(x + 1))));
  return {w, h};
}

std::vector<double> parse_double_list(const std::string& key,
                                      const std::string& spec) {
  std::vector<double> out;
  for (const auto& part : detail::split(spec, ','))
    out.push_back(detail::parse_double_value(key, detail::trim(part)));
  require(!out.empty(), errc::invalid_config, key + " list must not be empty");
  return out;
}

// H2I bins: comma-separated "lo:hi" pairs.
std::vector<std::pair<double, double>> parse_bins(const std::string& spec) {
  std::vector<std::pair<double, double>> bins;
  for (const auto& raw : detail::split(spec, ',')) {
    auto lohi = detail::split(detail::trim(raw), ':');
    require(lohi.size() == 2, errc::invalid_config,
            "h2i bins must look like lo:hi");
    bins.emplace_back(detail::parse_double_value("bins", lohi[0]),
                      detail::parse_double_value("bins", lohi[1]));
  }
  require(!bins.empty(), errc::invalid_config, "bin list must not be empty");
  return bins;
}

// Shared per-subcommand config plumbing: defaults < --config file < --set.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> sets;

  void attach(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path,
                    "key=value config file (see --help-keys of `synth`)");
    cmd->add_option("--set", sets,
                    "override one config key, e.g. --set gmrf.tau=400 "
                    "(repeatable, applied after --config)");
  }

  RunConfig build() const {
    RunConfig cfg;
    if (!config_path.empty()) load_run_config(cfg, config_path);
    for (const auto& kv : sets) {
      std::size_t eq = kv.find('=');
      require(eq != std::string::npos, errc::invalid_config,
              "--set expects key=value, got '" + kv + "'");
      set_config_key(cfg, detail::trim(kv.substr(0, eq)),
                     detail::trim(kv.substr(eq + 1)));
    }
    return cfg;
  }
};

double observed_range(const DepthMap& d) {
  double lo = 0.0, hi = 0.0;
  bool seen = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i] <= 0.0) continue;
    if (!seen) {
      lo = hi = d[i];
      seen = true;
    } else {
      lo = std::min(lo, d[i]);
      hi = std::max(hi, d[i]);
    }
  }
  return hi - lo;
}

std::string fit_csv(const ScaleShiftFit& fit) {
  return "a,b,residual_rms,support_count\n" + format_double(fit.a) + "," +
         format_double(fit.b) + "," + format_double(fit.residual_rms) + "," +
         std::to_string(fit.support_count) + "\n";
}

std::string eval_csv(const EvalReport& rep) {
  std::string header = "n_eval,rmse";
  std::string row = std::to_string(rep.n_pixels) + "," +
                    format_double(rep.rmse);
  for (const auto& [k, v] : rep.delta) {
    header += ",delta@" + format_double(k);
    row += "," + format_double(v);
  }
  header += ",kendall";
  row += "," + format_double(rep.kendall);
  return header + "\n" + row + "\n";
}

// Writes per-case rows (in case order), then per-condition mean rows.
void write_report(const std::string& path,
                  const std::vector<ExperimentRow>& rows) {
  std::string csv = experiment_csv_header() + "\n";
  for (const auto& r : rows) csv += to_csv(r) + "\n";
  for (const auto& r : aggregate_rows(rows)) csv += to_csv(r) + "\n";
  write_text(path, csv);
}

// Runs a list of experiment cases, possibly in parallel (DEPTHFORGE_THREADS
// caps the worker count). On failure, completed rows are flushed to the
// report before the error propagates.
template <typename CaseFn>
std::vector<ExperimentRow> run_cases(long n, const std::string& report_path,
                                     CaseFn&& fn) {
  std::vector<std::optional<ExperimentRow>> slots(
      static_cast<std::size_t>(n));
  try {
    parallel_for(n, [&](long i) {
      slots[static_cast<std::size_t>(i)] = fn(i);
    });
  } catch (...) {
    std::vector<ExperimentRow> done;
    for (const auto& s : slots)
      if (s.has_value()) done.push_back(*s);
    write_report(report_path, done);
    throw;
  }
  std::vector<ExperimentRow> rows;
  rows.reserve(slots.size());
  for (const auto& s : slots) rows.push_back(*s);
  return rows;
}

// --------------------------------------------------------------------------
// Subcommand bodies.
// --------------------------------------------------------------------------

struct SynthArgs {
  ConfigArgs config;
  std::string seeds = "0..9";
  std::string dims;
  std::string out;
};

void cmd_synth(const SynthArgs& a) {
  RunConfig cfg = a.config.build();
  if (!a.dims.empty()) {
    auto [w, h] = parse_dims(a.dims);
    cfg.scene.width = w;
    cfg.scene.height = h;
  }
  cfg.validate();
  auto seeds = parse_seed_spec(a.seeds);
  ensure_dir(a.out);
  std::string manifest = "seed,rgb,depth,width,height,n_objects\n";
  for (std::uint64_t seed : seeds) {
    SceneSample scene = generate_scene(seed, cfg.scene);
    std::string rgb_name = "scene_" + std::to_string(seed) + ".ppm";
    std::string depth_name = "scene_" + std::to_string(seed) + ".pfm";
    write_ppm(join_path(a.out, rgb_name), scene.rgb);
    write_pfm(join_path(a.out, depth_name), scene.depth);
    manifest += std::to_string(seed) + "," + rgb_name + "," + depth_name +
                "," + std::to_string(cfg.scene.width) + "," +
                std::to_string(cfg.scene.height) + "," +
                std::to_string(scene.n_objects) + "\n";
  }
  write_text(join_path(a.out, "manifest.csv"), manifest);
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

struct CorruptArgs {
  ConfigArgs config;
  std::string depth;
  std::string out;
};

void cmd_corrupt(const CorruptArgs& a) {
  RunConfig cfg = a.config.build();
  cfg.corrupt.validate();
  DepthMap d = read_pfm(a.depth);
  CorruptionResult res = apply_corruption(d, cfg.corrupt, observed_range(d));
  ensure_dir(a.out);
  write_pfm(join_path(a.out, "d_cond.pfm"), res.d_cond);
  write_pgm_mask(join_path(a.out, "mask.pgm"), res.m);
  write_pgm_mask(join_path(a.out, "affected.pgm"), res.affected);
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

struct EstimateArgs {
  ConfigArgs config;
  std::string rgb;
  std::string depth;
  std::string out;
};

void cmd_estimate(const EstimateArgs& a) {
  RunConfig cfg = a.config.build();
  cfg.gmrf.validate();
  cfg.refine.validate();
  RgbImage rgb = read_ppm(a.rgb);
  DepthMap d = read_pfm(a.depth);
  BitMask m = valid_mask(d);
  auto [d_norm, norm] = normalize_depth(d);
  EnsembleStats stats =
      estimate(rgb, d_norm, m, cfg.n_samples, cfg.seed, cfg.gmrf);
  ensure_dir(a.out);
  write_pfm(join_path(a.out, "mu.pfm"), stats.mu_hat);
  write_pfm(join_path(a.out, "sigma2.pfm"), stats.sigma2_hat);
  write_pgm_mask(join_path(a.out, "mask_sigma.pgm"),
                 certainty_mask(stats.sigma2_hat, cfg.refine.eps));
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

struct RefineArgs {
  ConfigArgs config;
  std::string rgb;
  std::string depth;
  std::string mu;
  std::string sigma2;
  std::string out;
};

void cmd_refine(const RefineArgs& a) {
  RunConfig cfg = a.config.build();
  cfg.refine.validate();
  RgbImage rgb = read_ppm(a.rgb);
  DepthMap d = read_pfm(a.depth);
  BitMask m = valid_mask(d);
  auto [d_norm, norm] = normalize_depth(d);
  EnsembleStats stats;
  stats.mu_hat = read_pfm(a.mu);
  stats.sigma2_hat = read_pfm(a.sigma2);
  stats.n_samples = cfg.n_samples;
  RefineResult res = refine(d_norm, m, stats, rgb, norm, cfg.refine);
  ensure_dir(a.out);
  write_pfm(join_path(a.out, "refined.pfm"), res.refined);
  write_pgm_mask(join_path(a.out, "mask_refined.pgm"), res.final_mask);
  write_text(join_path(a.out, "fit.csv"), fit_csv(res.fit));
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

struct PipelineArgs {
  ConfigArgs config;
  std::string rgb;
  std::string depth;
  std::string out;
  std::string mode = "full";
};

void cmd_pipeline(const PipelineArgs& a) {
  RunConfig cfg = a.config.build();
  require(a.mode == "full" || a.mode == "diff-only", errc::invalid_config,
          "--mode must be full or diff-only");
  if (a.mode == "diff-only") cfg.refine.iterations = 0;
  RgbImage rgb = read_ppm(a.rgb);
  DepthMap d = read_pfm(a.depth);
  PipelineResult res = run_pipeline(rgb, d, cfg.pipeline());
  ensure_dir(a.out);
  write_pfm(join_path(a.out, "mu.pfm"), res.stats.mu_hat);
  write_pfm(join_path(a.out, "sigma2.pfm"), res.stats.sigma2_hat);
  write_pgm_mask(join_path(a.out, "mask_sigma.pgm"), res.ref.certainty);
  write_pfm(join_path(a.out, "diff_only.pfm"), res.diff_only);
  write_text(join_path(a.out, "fit.csv"), fit_csv(res.ref.fit));
  if (a.mode == "full") {
    write_pfm(join_path(a.out, "refined.pfm"), res.ref.refined);
    write_pgm_mask(join_path(a.out, "mask_refined.pgm"), res.ref.final_mask);
  }
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

struct EvalArgs {
  std::string pred;
  std::string truth;
  std::string mask;
  std::string ks = "1.25,1.5625,1.953125";
  std::string out;
  std::string error_map;
  double error_max = 0.0;  // 0: per-image range
};

void cmd_eval(const EvalArgs& a) {
  DepthMap pred = read_pfm(a.pred);
  DepthMap truth = read_pfm(a.truth);
  BitMask m(truth.height(), truth.width());
  if (a.mask.empty()) {
    require(pred.same_shape_as(truth), errc::dimension_mismatch,
            "prediction and truth dimensions differ");
    for (std::size_t i = 0; i < m.size(); ++i)
      m[i] = pred[i] > 0.0 && truth[i] > 0.0 ? 1 : 0;
  } else {
    m = read_pgm_mask(a.mask);
  }
  EvalReport rep = evaluate(pred, truth, m, parse_double_list("ks", a.ks));
  std::string csv = eval_csv(rep);
  if (a.out.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    ensure_dir(a.out);
    write_text(join_path(a.out, "report.csv"), csv);
  }
  if (!a.error_map.empty()) {
    Grid<double> err(truth.height(), truth.width());
    for (std::size_t i = 0; i < err.size(); ++i)
      err[i] = m[i] ? std::abs(pred[i] - truth[i]) : 0.0;
    write_pgm_viz(a.error_map, err, 0.0, a.error_max);
  }
}

struct ExperimentArgs {
  ConfigArgs config;
  std::string protocol;
  std::string seeds = "0..19";
  std::string ratios = "0.05,0.1,0.2";
  std::string bins = "0.01:0.1,0.1:0.2,0.2:0.3,0.3:0.4,0.4:0.5";
  std::string out;
};

void cmd_experiment(const ExperimentArgs& a) {
  RunConfig cfg = a.config.build();
  cfg.validate();
  require(a.protocol == "noisy-completion" || a.protocol == "inpainting",
          errc::invalid_config,
          "--protocol must be noisy-completion or inpainting");
  auto seeds = parse_seed_spec(a.seeds);
  ensure_dir(a.out);
  std::string report_path = join_path(a.out, "report.csv");
  std::vector<ExperimentRow> rows;
  if (a.protocol == "noisy-completion") {
    auto ratios = parse_double_list("ratios", a.ratios);
    long n = static_cast<long>(seeds.size() * ratios.size());
    rows = run_cases(n, report_path, [&](long i) {
      std::uint64_t seed = seeds[static_cast<std::size_t>(i) / ratios.size()];
      double ratio = ratios[static_cast<std::size_t>(i) % ratios.size()];
      return run_noisy_completion_case(seed, ratio, cfg.scene, cfg.pipeline(),
                                       cfg.corrupt);
    });
  } else {
    auto bins = parse_bins(a.bins);
    long n = static_cast<long>(seeds.size() * bins.size());
    rows = run_cases(n, report_path, [&](long i) {
      std::uint64_t seed = seeds[static_cast<std::size_t>(i) / bins.size()];
      auto [lo, hi] = bins[static_cast<std::size_t>(i) % bins.size()];
      return run_inpainting_case(seed, lo, hi, cfg.scene, cfg.pipeline(),
                                 cfg.corrupt);
    });
  }
  write_report(report_path, rows);
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

struct SweepArgs {
  ConfigArgs config;
  std::string axis;
  std::string seeds = "0..4";
  std::string out;
};

void cmd_sweep(const SweepArgs& a) {
  RunConfig cfg = a.config.build();
  cfg.validate();
  auto seeds = parse_seed_spec(a.seeds);
  ensure_dir(a.out);
  std::string report_path = join_path(a.out, "report.csv");
  std::vector<ExperimentRow> rows;

  if (a.axis == "n-samples") {
    const std::vector<int> ns = {1, 2, 5, 10, 20, 50};
    long n = static_cast<long>(seeds.size() * ns.size());
    rows = run_cases(n, report_path, [&](long i) {
      std::uint64_t seed = seeds[static_cast<std::size_t>(i) / ns.size()];
      PipelineConfig pc = cfg.pipeline();
      pc.n_samples = ns[static_cast<std::size_t>(i) % ns.size()];
      ExperimentRow row = run_noisy_completion_case(
          seed, cfg.corrupt.noise_ratio, cfg.scene, pc, cfg.corrupt);
      row.condition = "N=" + std::to_string(pc.n_samples);
      return row;
    });
    if (!seeds.empty()) {
      for (int nv : ns) {
        PipelineConfig pc = cfg.pipeline();
        pc.n_samples = nv;
        NoisyCompletionCase c = run_noisy_completion_full(
            seeds[0], cfg.corrupt.noise_ratio, cfg.scene, pc, cfg.corrupt);
        std::string tag = "N" + std::to_string(nv);
        write_pgm_viz(join_path(a.out, "sigma2_" + tag + ".pgm"),
                      c.pipe.stats.sigma2_hat, 0.0, 0.0, 0.5);
        write_pgm_mask(join_path(a.out, "mask_sigma_" + tag + ".pgm"),
                       c.pipe.ref.certainty);
      }
    }
  } else if (a.axis == "epsilon") {
    const std::vector<double> epss = {1e-4,    3.16e-4, 1e-3, 3.16e-3,
                                      1e-2,    3.16e-2, 1e-1};
    long n = static_cast<long>(seeds.size() * epss.size());
    rows = run_cases(n, report_path, [&](long i) {
      std::uint64_t seed = seeds[static_cast<std::size_t>(i) / epss.size()];
      PipelineConfig pc = cfg.pipeline();
      pc.refine.eps = epss[static_cast<std::size_t>(i) % epss.size()];
      ExperimentRow row = run_noisy_completion_case(
          seed, cfg.corrupt.noise_ratio, cfg.scene, pc, cfg.corrupt);
      row.condition = "eps=" + format_double(pc.refine.eps);
      return row;
    });
    if (!seeds.empty()) {
      for (std::size_t k = 0; k < epss.size(); ++k) {
        PipelineConfig pc = cfg.pipeline();
        pc.refine.eps = epss[k];
        NoisyCompletionCase c = run_noisy_completion_full(
            seeds[0], cfg.corrupt.noise_ratio, cfg.scene, pc, cfg.corrupt);
        write_pgm_mask(
            join_path(a.out, "mask_sigma_eps" + std::to_string(k) + ".pgm"),
            c.pipe.ref.certainty);
      }
    }
  } else if (a.axis == "sigma2-ablation") {
    long n = static_cast<long>(seeds.size() * 2);
    rows = run_cases(n, report_path, [&](long i) {
      std::uint64_t seed = seeds[static_cast<std::size_t>(i) / 2];
      bool on = (i % 2) == 0;
      PipelineConfig pc = cfg.pipeline();
      pc.refine.use_sigma2 = on;
      ExperimentRow row = run_noisy_completion_case(
          seed, cfg.corrupt.noise_ratio, cfg.scene, pc, cfg.corrupt);
      row.condition = on ? "sigma2=on" : "sigma2=off";
      return row;
    });
    if (!seeds.empty()) {
      for (int on = 1; on >= 0; --on) {
        PipelineConfig pc = cfg.pipeline();
        pc.refine.use_sigma2 = on != 0;
        NoisyCompletionCase c = run_noisy_completion_full(
            seeds[0], cfg.corrupt.noise_ratio, cfg.scene, pc, cfg.corrupt);
        write_pgm_viz(join_path(a.out, on ? "refined_sigma2_on.pgm"
                                          : "refined_sigma2_off.pgm"),
                      c.pipe.ref.refined);
      }
    }
  } else {
    fail(errc::invalid_config,
         "--axis must be n-samples, epsilon, or sigma2-ablation");
  }
  write_report(report_path, rows);
  save_run_config(cfg, join_path(a.out, "config.txt"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "depthforge: two-stage sensor-depth enhancement.\n"
      "Stage 1 samples an image-guided depth posterior and turns ensemble\n"
      "variance into per-pixel reliability; stage 2 masks unreliable depth,\n"
      "recovers scale/shift by least squares, and propagates reliable depth\n"
      "along guidance features.\n"
      "Exit codes: 0 ok, 2 config error, 3 I/O error, 4 numerical failure.\n"
      "DEPTHFORGE_THREADS caps experiment/sweep parallelism."};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand(
      "synth",
      "Generate synthetic RGB-D scenes: scene_<seed>.ppm/.pfm plus "
      "manifest.csv (columns: seed,rgb,depth,width,height,n_objects).");
  synth_args.config.attach(synth_cmd);
  synth_cmd->add_option("--seeds", synth_args.seeds,
                        "seed list, e.g. 0..9 or 1,5,7..9");
  synth_cmd->add_option("--dims", synth_args.dims, "scene size WxH");
  synth_cmd->add_option("-o,--out", synth_args.out, "output directory")
      ->required();
  synth_cmd->callback([&] { cmd_synth(synth_args); });

  CorruptArgs corrupt_args;
  auto* corrupt_cmd = app.add_subcommand(
      "corrupt",
      "Apply a corruption protocol (corrupt.mode: sparse+noise, holes, "
      "structured-mask) to a depth map; writes d_cond.pfm, mask.pgm, "
      "affected.pgm.");
  corrupt_args.config.attach(corrupt_cmd);
  corrupt_cmd->add_option("--depth", corrupt_args.depth, "input PFM depth")
      ->required();
  corrupt_cmd->add_option("-o,--out", corrupt_args.out, "output directory")
      ->required();
  corrupt_cmd->callback([&] { cmd_corrupt(corrupt_args); });

  EstimateArgs estimate_args;
  auto* estimate_cmd = app.add_subcommand(
      "estimate",
      "Stage 1: ensemble posterior sampling. Writes mu.pfm and sigma2.pfm "
      "(normalized units) and mask_sigma.pgm.");
  estimate_args.config.attach(estimate_cmd);
  estimate_cmd->add_option("--rgb", estimate_args.rgb, "guide image (PPM)")
      ->required();
  estimate_cmd
      ->add_option("--depth", estimate_args.depth, "conditioned depth (PFM)")
      ->required();
  estimate_cmd->add_option("-o,--out", estimate_args.out, "output directory")
      ->required();
  estimate_cmd->callback([&] { cmd_estimate(estimate_args); });

  RefineArgs refine_args;
  auto* refine_cmd = app.add_subcommand(
      "refine",
      "Stage 2: certainty masking + scale-shift fit + masked propagation. "
      "Inputs are the stage-1 mu/sigma2 (normalized units); writes "
      "refined.pfm, mask_refined.pgm, fit.csv "
      "(columns: a,b,residual_rms,support_count).");
  refine_args.config.attach(refine_cmd);
  refine_cmd->add_option("--rgb", refine_args.rgb, "guide image (PPM)")
      ->required();
  refine_cmd
      ->add_option("--depth", refine_args.depth, "conditioned depth (PFM)")
      ->required();
  refine_cmd->add_option("--mu", refine_args.mu, "ensemble mean (PFM)")
      ->required();
  refine_cmd
      ->add_option("--sigma2", refine_args.sigma2, "ensemble variance (PFM)")
      ->required();
  refine_cmd->add_option("-o,--out", refine_args.out, "output directory")
      ->required();
  refine_cmd->callback([&] { cmd_refine(refine_args); });

  PipelineArgs pipeline_args;
  auto* pipeline_cmd = app.add_subcommand(
      "pipeline",
      "Full two-stage run. Writes mu.pfm, sigma2.pfm, mask_sigma.pgm, "
      "refined.pfm, diff_only.pfm, fit.csv. --mode diff-only skips the "
      "propagation stage.");
  pipeline_args.config.attach(pipeline_cmd);
  pipeline_cmd->add_option("--rgb", pipeline_args.rgb, "guide image (PPM)")
      ->required();
  pipeline_cmd
      ->add_option("--depth", pipeline_args.depth, "conditioned depth (PFM)")
      ->required();
  pipeline_cmd->add_option("--mode", pipeline_args.mode,
                           "full (default) or diff-only");
  pipeline_cmd
      ->add_option("-o,--out", pipeline_args.out, "output directory")
      ->required();
  pipeline_cmd->callback([&] { cmd_pipeline(pipeline_args); });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand(
      "eval",
      "Evaluate a depth map against ground truth. CSV columns: n_eval, "
      "rmse, delta@k per threshold, kendall. Optionally writes an |error| "
      "PGM map (brighter = larger error).");
  eval_cmd->add_option("--pred", eval_args.pred, "predicted depth (PFM)")
      ->required();
  eval_cmd->add_option("--truth", eval_args.truth, "ground-truth depth (PFM)")
      ->required();
  eval_cmd->add_option("--mask", eval_args.mask,
                       "evaluation mask (PGM); default: valid in both maps");
  eval_cmd->add_option("--ks", eval_args.ks, "delta thresholds, k > 1");
  eval_cmd->add_option("-o,--out", eval_args.out,
                       "output directory (default: print CSV to stdout)");
  eval_cmd->add_option("--error-map", eval_args.error_map,
                       "also write |pred-truth| as an 8-bit PGM here");
  eval_cmd->add_option("--error-max", eval_args.error_max,
                       "fixed range for the error map (0 = per-image)");
  eval_cmd->callback([&] { cmd_eval(eval_args); });

  ExperimentArgs experiment_args;
  auto* experiment_cmd = app.add_subcommand(
      "experiment",
      "Seed-grid protocol runs; writes report.csv (columns: protocol, seed, "
      "condition, n_eval, rmse_refined, rmse_baseline, rmse_diff_only, "
      "delta125_refined, kendall_refined; one row per seed x condition, "
      "then one mean row per condition). noisy-completion compares against "
      "the naive raw completion; inpainting against the prior-only "
      "reconstruction, evaluated inside the holes.");
  experiment_args.config.attach(experiment_cmd);
  experiment_cmd
      ->add_option("--protocol", experiment_args.protocol,
                   "noisy-completion or inpainting")
      ->required();
  experiment_cmd->add_option("--seeds", experiment_args.seeds,
                             "scene seeds (default 0..19)");
  experiment_cmd->add_option("--ratios", experiment_args.ratios,
                             "noise ratios for noisy-completion");
  experiment_cmd->add_option("--bins", experiment_args.bins,
                             "h2i bins lo:hi,... for inpainting");
  experiment_cmd
      ->add_option("-o,--out", experiment_args.out, "output directory")
      ->required();
  experiment_cmd->callback([&] { cmd_experiment(experiment_args); });

  SweepArgs sweep_args;
  auto* sweep_cmd = app.add_subcommand(
      "sweep",
      "Parameter sweeps with report.csv (same columns as experiment) and "
      "PGM panels. Axes: n-samples (N in 1,2,5,10,20,50 + sigma2/mask "
      "panels), epsilon (log grid + mask panels), sigma2-ablation "
      "(stage 2 with vs without sigma2).");
  sweep_args.config.attach(sweep_cmd);
  sweep_cmd
      ->add_option("--axis", sweep_args.axis,
                   "n-samples, epsilon, or sigma2-ablation")
      ->required();
  sweep_cmd->add_option("--seeds", sweep_args.seeds,
                        "scene seeds (default 0..4)");
  sweep_cmd->add_option("-o,--out", sweep_args.out, "output directory")
      ->required();
  sweep_cmd->callback([&] { cmd_sweep(sweep_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "depthforge: error [%s]: %s\n",
                 errc_name(e.code()), e.what());
    return e.exit_class();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "depthforge: error: %s\n", e.what());
    return 4;
  }
  return 0;
}
