#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace depthforge {

namespace detail {

class File {
 public:
  File(const std::string& path, const char* mode) : f_(std::fopen(path.c_str(), mode)) {
    require(f_ != nullptr, errc::io_failure, "cannot open '" + path + "'");
    path_ = path;
  }
  ~File() {
    if (f_) std::fclose(f_);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  std::FILE* get() { return f_; }
  const std::string& path() const { return path_; }

  void write(const void* data, std::size_t n) {
    require(std::fwrite(data, 1, n, f_) == n, errc::io_failure,
            "short write to '" + path_ + "'");
  }
  void read(void* data, std::size_t n) {
    require(std::fread(data, 1, n, f_) == n, errc::io_failure,
            "unexpected end of file in '" + path_ + "'");
  }

 private:
  std::FILE* f_;
  std::string path_;
};

// Reads one whitespace-delimited header token, skipping '#' comments.
inline std::string pnm_token(File& f) {
  std::string tok;
  int c;
  while ((c = std::fgetc(f.get())) != EOF) {
    if (c == '#') {
      while ((c = std::fgetc(f.get())) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  require(!tok.empty(), errc::malformed_header,
          "truncated header in '" + f.path() + "'");
  return tok;
}

inline int parse_dim(const std::string& tok, const std::string& path) {
  std::size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(tok, &pos);
  } catch (const std::exception&) {
    fail(errc::malformed_header, "bad dimension '" + tok + "' in '" + path + "'");
  }
  require(pos == tok.size() && v > 0 && v <= 1 << 20, errc::malformed_header,
          "bad dimension '" + tok + "' in '" + path + "'");
  return static_cast<int>(v);
}

inline float float_from_le(const unsigned char* b, bool little_endian) {
  std::uint32_t u;
  if (little_endian) {
    u = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 |
        std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  } else {
    u = std::uint32_t(b[3]) | std::uint32_t(b[2]) << 8 |
        std::uint32_t(b[1]) << 16 | std::uint32_t(b[0]) << 24;
  }
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// PFM ("Pf", single channel, 32-bit floats). Written little-endian with
// scale -1.0; scanlines run bottom to top. Round trips are bit-exact for
// every finite float value.
// ---------------------------------------------------------------------------

inline void write_pfm(const std::string& path, const Grid<double>& g) {
  detail::File f(path, "wb");
  std::string header = "Pf\n" + std::to_string(g.width()) + " " +
                       std::to_string(g.height()) + "\n-1.0\n";
  f.write(header.data(), header.size());
  std::vector<unsigned char> row(static_cast<std::size_t>(g.width()) * 4);
  for (int y = g.height() - 1; y >= 0; --y) {
    for (int x = 0; x < g.width(); ++x) {
      float v = static_cast<float>(g(x, y));
      std::uint32_t u;
      std::memcpy(&u, &v, 4);
      row[4 * x + 0] = static_cast<unsigned char>(u & 0xFF);
      row[4 * x + 1] = static_cast<unsigned char>((u >> 8) & 0xFF);
      row[4 * x + 2] = static_cast<unsigned char>((u >> 16) & 0xFF);
      row[4 * x + 3] = static_cast<unsigned char>((u >> 24) & 0xFF);
    }
    f.write(row.data(), row.size());
  }
}

inline Grid<double> read_pfm(const std::string& path) {
  detail::File f(path, "rb");
  std::string magic = detail::pnm_token(f);
  require(magic == "Pf", errc::malformed_header,
          "expected grayscale PFM magic 'Pf' in '" + path + "', got '" + magic + "'");
  int w = detail::parse_dim(detail::pnm_token(f), path);
  int h = detail::parse_dim(detail::pnm_token(f), path);
  std::string scale_tok = detail::pnm_token(f);
  double scale = 0.0;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    fail(errc::malformed_header, "bad scale '" + scale_tok + "' in '" + path + "'");
  }
  require(scale != 0.0 && std::isfinite(scale), errc::malformed_header,
          "bad scale '" + scale_tok + "' in '" + path + "'");
  bool little_endian = scale < 0.0;

  Grid<double> g(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 4);
  for (int y = h - 1; y >= 0; --y) {
    f.read(row.data(), row.size());
    for (int x = 0; x < w; ++x)
      g(x, y) = detail::float_from_le(&row[4 * x], little_endian);
  }
  return g;
}

// ---------------------------------------------------------------------------
// PGM (P5, 8-bit): binary masks and grayscale visualizations.
// ---------------------------------------------------------------------------

inline void write_pgm(const std::string& path, const Grid<std::uint8_t>& g) {
  detail::File f(path, "wb");
  std::string header = "P5\n" + std::to_string(g.width()) + " " +
                       std::to_string(g.height()) + "\n255\n";
  f.write(header.data(), header.size());
  f.write(g.values().data(), g.size());
}

inline void write_pgm_mask(const std::string& path, const BitMask& m) {
  Grid<std::uint8_t> g(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) g[i] = m[i] ? 255 : 0;
  write_pgm(path, g);
}

inline Grid<std::uint8_t> read_pgm(const std::string& path) {
  detail::File f(path, "rb");
  std::string magic = detail::pnm_token(f);
  require(magic == "P5", errc::malformed_header,
          "expected binary PGM magic 'P5' in '" + path + "'");
  int w = detail::parse_dim(detail::pnm_token(f), path);
  int h = detail::parse_dim(detail::pnm_token(f), path);
  std::string maxval = detail::pnm_token(f);
  require(maxval == "255", errc::malformed_header,
          "only 8-bit PGM supported, got maxval '" + maxval + "'");
  Grid<std::uint8_t> g(h, w);
  f.read(g.values().data(), g.size());
  return g;
}

inline BitMask read_pgm_mask(const std::string& path) {
  Grid<std::uint8_t> g = read_pgm(path);
  BitMask m(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) m[i] = g[i] ? 1 : 0;
  return m;
}

// Grayscale visualization: values mapped affinely from [lo, hi] to [0, 1],
// then gamma-compressed. Pass lo == hi to auto-range over the grid.
inline void write_pgm_viz(const std::string& path, const Grid<double>& g,
                          double lo = 0.0, double hi = 0.0,
                          double gamma = 1.0) {
  if (lo == hi) {
    lo = g[0];
    hi = g[0];
    for (std::size_t i = 0; i < g.size(); ++i) {
      lo = std::min(lo, g[i]);
      hi = std::max(hi, g[i]);
    }
    if (hi == lo) hi = lo + 1.0;
  }
  Grid<std::uint8_t> out(g.height(), g.width());
  for (std::size_t i = 0; i < g.size(); ++i) {
    double t = (g[i] - lo) / (hi - lo);
    t = std::min(1.0, std::max(0.0, t));
    if (gamma != 1.0) t = std::pow(t, 1.0 / gamma);
    out[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
  }
  write_pgm(path, out);
}

// ---------------------------------------------------------------------------
// PPM (P6, 8-bit): RGB images with channel intensities in [0, 1].
// ---------------------------------------------------------------------------

inline void write_ppm(const std::string& path, const RgbImage& img) {
  detail::File f(path, "wb");
  std::string header = "P6\n" + std::to_string(img.width()) + " " +
                       std::to_string(img.height()) + "\n255\n";
  f.write(header.data(), header.size());
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * 3);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        double v = img.channel(c)(x, y);
        v = std::min(1.0, std::max(0.0, v));
        row[3 * x + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    f.write(row.data(), row.size());
  }
}

inline RgbImage read_ppm(const std::string& path) {
  detail::File f(path, "rb");
  std::string magic = detail::pnm_token(f);
  require(magic == "P6", errc::malformed_header,
          "expected binary PPM magic 'P6' in '" + path + "'");
  int w = detail::parse_dim(detail::pnm_token(f), path);
  int h = detail::parse_dim(detail::pnm_token(f), path);
  std::string maxval = detail::pnm_token(f);
  require(maxval == "255", errc::malformed_header,
          "only 8-bit PPM supported, got maxval '" + maxval + "'");
  RgbImage img(h, w);
  std::vector<unsigned char> row(static_cast<std::size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    f.read(row.data(), row.size());
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        img.channel(c)(x, y) = row[3 * x + c] / 255.0;
  }
  return img;
}

}  // namespace depthforge
