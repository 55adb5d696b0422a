#pragma once

#include <array>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "pipeline.hpp"
#include "synth.hpp"

namespace depthforge {

// ---------------------------------------------------------------------------
// RunConfig: every tunable of the toolkit, serializable to a plain-text
// key=value file. Precedence is defaults < config file < command-line
// flags; each run writes its resolved config next to its outputs.
// ---------------------------------------------------------------------------

struct RunConfig {
  SceneConfig scene;
  GmrfParams gmrf;
  RefineConfig refine;
  CorruptionSpec corrupt;
  int n_samples = 10;
  std::uint64_t seed = 0;

  void validate() const {
    scene.validate();
    gmrf.validate();
    refine.validate();
    corrupt.validate();
    require(n_samples >= 1, errc::invalid_config, "n_samples must be >= 1");
  }

  PipelineConfig pipeline() const {
    PipelineConfig p;
    p.gmrf = gmrf;
    p.refine = refine;
    p.n_samples = n_samples;
    p.seed = seed;
    return p;
  }
};

namespace detail {

inline double parse_double_value(const std::string& key,
                                 const std::string& v) {
  errno = 0;
  char* end = nullptr;
  double x = std::strtod(v.c_str(), &end);
  require(end == v.c_str() + v.size() && !v.empty() && errno != ERANGE,
          errc::invalid_config, "bad numeric value for " + key);
  return x;
}

inline long parse_long_value(const std::string& key, const std::string& v) {
  errno = 0;
  char* end = nullptr;
  long x = std::strtol(v.c_str(), &end, 10);
  require(end == v.c_str() + v.size() && !v.empty() && errno != ERANGE,
          errc::invalid_config, "bad integer value for " + key);
  return x;
}

inline std::uint64_t parse_u64_value(const std::string& key,
                                     const std::string& v) {
  errno = 0;
  char* end = nullptr;
  unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  require(end == v.c_str() + v.size() && !v.empty() && errno != ERANGE,
          errc::invalid_config, "bad seed value for " + key);
  return static_cast<std::uint64_t>(x);
}

inline bool parse_bool_value(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  fail(errc::invalid_config, "bad boolean value for " + key);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(s.substr(start));
      return parts;
    }
    parts.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Comma-separated odd window sizes, e.g. "13,3".
inline std::vector<int> parse_window_schedule(const std::string& v) {
  std::vector<int> out;
  for (const auto& part : detail::split(v, ','))
    out.push_back(static_cast<int>(
        detail::parse_long_value("refine.windows", detail::trim(part))));
  require(!out.empty(), errc::invalid_config,
          "window schedule must not be empty");
  return out;
}

inline std::string format_window_schedule(const std::vector<int>& ws) {
  std::string s;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(ws[i]);
  }
  return s;
}

// Palette as colon-separated triples joined by commas: "r:g:b,r:g:b,...".
inline std::vector<std::array<double, 3>> parse_palette(
    const std::string& v) {
  std::vector<std::array<double, 3>> out;
  for (const auto& part : detail::split(v, ',')) {
    auto comps = detail::split(detail::trim(part), ':');
    require(comps.size() == 3, errc::invalid_config,
            "palette entries must be r:g:b triples");
    std::array<double, 3> rgb{};
    for (int c = 0; c < 3; ++c)
      rgb[static_cast<std::size_t>(c)] =
          detail::parse_double_value("scene.palette", comps[c]);
    out.push_back(rgb);
  }
  require(!out.empty(), errc::invalid_config, "palette must not be empty");
  return out;
}

inline std::string format_palette(
    const std::vector<std::array<double, 3>>& palette) {
  std::string s;
  for (std::size_t i = 0; i < palette.size(); ++i) {
    if (i) s += ",";
    s += format_double(palette[i][0]) + ":" + format_double(palette[i][1]) +
         ":" + format_double(palette[i][2]);
  }
  return s;
}

// Applies one key=value assignment. Unknown keys are errors so that typos
// in config files fail loudly.
inline void set_config_key(RunConfig& cfg, const std::string& key,
                           const std::string& value) {
  using detail::parse_bool_value;
  using detail::parse_double_value;
  using detail::parse_long_value;
  using detail::parse_u64_value;

  if (key == "seed") cfg.seed = parse_u64_value(key, value);
  else if (key == "n_samples")
    cfg.n_samples = static_cast<int>(parse_long_value(key, value));
  else if (key == "scene.width")
    cfg.scene.width = static_cast<int>(parse_long_value(key, value));
  else if (key == "scene.height")
    cfg.scene.height = static_cast<int>(parse_long_value(key, value));
  else if (key == "scene.min_objects")
    cfg.scene.min_objects = static_cast<int>(parse_long_value(key, value));
  else if (key == "scene.max_objects")
    cfg.scene.max_objects = static_cast<int>(parse_long_value(key, value));
  else if (key == "scene.d_min")
    cfg.scene.d_min = parse_double_value(key, value);
  else if (key == "scene.d_max")
    cfg.scene.d_max = parse_double_value(key, value);
  else if (key == "scene.palette")
    cfg.scene.palette = parse_palette(value);
  else if (key == "gmrf.lambda")
    cfg.gmrf.lambda = parse_double_value(key, value);
  else if (key == "gmrf.beta")
    cfg.gmrf.beta = parse_double_value(key, value);
  else if (key == "gmrf.tau")
    cfg.gmrf.tau = parse_double_value(key, value);
  else if (key == "gmrf.nu")
    cfg.gmrf.nu = parse_double_value(key, value);
  else if (key == "gmrf.rho_reject")
    cfg.gmrf.rho_reject = parse_double_value(key, value);
  else if (key == "gmrf.irls_max_iters")
    cfg.gmrf.irls_max_iters = static_cast<int>(parse_long_value(key, value));
  else if (key == "gmrf.irls_tol")
    cfg.gmrf.irls_tol = parse_double_value(key, value);
  else if (key == "gmrf.cg_tol")
    cfg.gmrf.cg_tol = parse_double_value(key, value);
  else if (key == "gmrf.cg_max_iters")
    cfg.gmrf.cg_max_iters = static_cast<int>(parse_long_value(key, value));
  else if (key == "refine.eps")
    cfg.refine.eps = parse_double_value(key, value);
  else if (key == "refine.opening_radius")
    cfg.refine.opening_radius =
        static_cast<int>(parse_long_value(key, value));
  else if (key == "refine.iterations")
    cfg.refine.iterations = static_cast<int>(parse_long_value(key, value));
  else if (key == "refine.windows")
    cfg.refine.windows = parse_window_schedule(value);
  else if (key == "refine.bandwidth")
    cfg.refine.bandwidth = parse_double_value(key, value);
  else if (key == "refine.gamma_max")
    cfg.refine.gamma_max = parse_double_value(key, value);
  else if (key == "refine.use_sigma2")
    cfg.refine.use_sigma2 = parse_bool_value(key, value);
  else if (key == "corrupt.mode")
    cfg.corrupt.mode = parse_corruption_mode(value);
  else if (key == "corrupt.sparse_count")
    cfg.corrupt.sparse_count = parse_long_value(key, value);
  else if (key == "corrupt.noise_ratio")
    cfg.corrupt.noise_ratio = parse_double_value(key, value);
  else if (key == "corrupt.noise_sigma")
    cfg.corrupt.noise_sigma = parse_double_value(key, value);
  else if (key == "corrupt.h2i_lo")
    cfg.corrupt.h2i_lo = parse_double_value(key, value);
  else if (key == "corrupt.h2i_hi")
    cfg.corrupt.h2i_hi = parse_double_value(key, value);
  else if (key == "corrupt.coverage")
    cfg.corrupt.coverage = parse_double_value(key, value);
  else if (key == "corrupt.seed")
    cfg.corrupt.seed = parse_u64_value(key, value);
  else
    fail(errc::invalid_config, "unknown config key '" + key + "'");
}

// Full round-trippable dump in a fixed key order.
inline std::string serialize_run_config(const RunConfig& cfg) {
  std::ostringstream out;
  out << "seed=" << cfg.seed << "\n";
  out << "n_samples=" << cfg.n_samples << "\n";
  out << "scene.width=" << cfg.scene.width << "\n";
  out << "scene.height=" << cfg.scene.height << "\n";
  out << "scene.min_objects=" << cfg.scene.min_objects << "\n";
  out << "scene.max_objects=" << cfg.scene.max_objects << "\n";
  out << "scene.d_min=" << format_double(cfg.scene.d_min) << "\n";
  out << "scene.d_max=" << format_double(cfg.scene.d_max) << "\n";
  out << "scene.palette=" << format_palette(cfg.scene.palette) << "\n";
  out << "gmrf.lambda=" << format_double(cfg.gmrf.lambda) << "\n";
  out << "gmrf.beta=" << format_double(cfg.gmrf.beta) << "\n";
  out << "gmrf.tau=" << format_double(cfg.gmrf.tau) << "\n";
  out << "gmrf.nu=" << format_double(cfg.gmrf.nu) << "\n";
  out << "gmrf.rho_reject=" << format_double(cfg.gmrf.rho_reject) << "\n";
  out << "gmrf.irls_max_iters=" << cfg.gmrf.irls_max_iters << "\n";
  out << "gmrf.irls_tol=" << format_double(cfg.gmrf.irls_tol) << "\n";
  out << "gmrf.cg_tol=" << format_double(cfg.gmrf.cg_tol) << "\n";
  out << "gmrf.cg_max_iters=" << cfg.gmrf.cg_max_iters << "\n";
  out << "refine.eps=" << format_double(cfg.refine.eps) << "\n";
  out << "refine.opening_radius=" << cfg.refine.opening_radius << "\n";
  out << "refine.iterations=" << cfg.refine.iterations << "\n";
  out << "refine.windows=" << format_window_schedule(cfg.refine.windows)
      << "\n";
  out << "refine.bandwidth=" << format_double(cfg.refine.bandwidth) << "\n";
  out << "refine.gamma_max=" << format_double(cfg.refine.gamma_max) << "\n";
  out << "refine.use_sigma2=" << (cfg.refine.use_sigma2 ? 1 : 0) << "\n";
  out << "corrupt.mode=" << corruption_mode_name(cfg.corrupt.mode) << "\n";
  out << "corrupt.sparse_count=" << cfg.corrupt.sparse_count << "\n";
  out << "corrupt.noise_ratio=" << format_double(cfg.corrupt.noise_ratio)
      << "\n";
  out << "corrupt.noise_sigma=" << format_double(cfg.corrupt.noise_sigma)
      << "\n";
  out << "corrupt.h2i_lo=" << format_double(cfg.corrupt.h2i_lo) << "\n";
  out << "corrupt.h2i_hi=" << format_double(cfg.corrupt.h2i_hi) << "\n";
  out << "corrupt.coverage=" << format_double(cfg.corrupt.coverage) << "\n";
  out << "corrupt.seed=" << cfg.corrupt.seed << "\n";
  return out.str();
}

// Loads key=value lines into an existing config (so defaults survive for
// keys the file does not mention). '#' starts a comment; blank lines ok.
inline void load_run_config(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  require(in.good(), errc::io_failure, "cannot open config file " + path);
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    require(eq != std::string::npos, errc::invalid_config,
            path + ":" + std::to_string(line_no) + ": expected key=value");
    set_config_key(cfg, detail::trim(line.substr(0, eq)),
                   detail::trim(line.substr(eq + 1)));
  }
}

inline void save_run_config(const RunConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), errc::io_failure, "cannot write config file " + path);
  out << serialize_run_config(cfg);
  out.flush();
  require(out.good(), errc::io_failure, "failed writing config file " + path);
}

}  // namespace depthforge
