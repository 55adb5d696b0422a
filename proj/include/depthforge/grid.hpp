#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace depthforge {

// Dense row-major 2-D container. Access is (x, y) with x the column and
// y the row; index 0,0 is the top-left pixel.
template <typename T>
class Grid {
 public:
  Grid() = default;

  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width) {
    require(height > 0 && width > 0, errc::invalid_config,
            "grid dimensions must be positive");
    data_.assign(static_cast<std::size_t>(height) * width, fill);
  }

  static Grid from_values(int height, int width, std::vector<T> values) {
    Grid g(height, width);
    require(values.size() == g.size(), errc::dimension_mismatch,
            "value count does not match grid dimensions");
    g.data_ = std::move(values);
    return g;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool same_shape_as(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  template <typename U>
  bool same_shape_as(const Grid<U>& other) const {
    return height_ == other.height() && width_ == other.width();
  }

  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Grid& other) const {
    return height_ == other.height_ && width_ == other.width_ &&
           data_ == other.data_;
  }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// Depth maps hold finite scene-unit depths; the value 0 encodes "missing".
using DepthMap = Grid<double>;
// Binary masks: 1 = selected / valid, 0 = excluded.
using BitMask = Grid<std::uint8_t>;

struct RgbImage {
  Grid<double> r, g, b;

  RgbImage() = default;
  RgbImage(int height, int width)
      : r(height, width), g(height, width), b(height, width) {}

  int height() const { return r.height(); }
  int width() const { return r.width(); }

  const Grid<double>& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }
  Grid<double>& channel(int c) { return c == 0 ? r : (c == 1 ? g : b); }
};

}  // namespace depthforge
