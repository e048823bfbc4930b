// Copyright (c) 2026 The multimask Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense pixel grids and the image/depth/mask value types used throughout.
//
// Pixel convention (used everywhere in this library): a pixel is addressed
// as (i, j) with i = column (x, grows right) and j = row (y, grows down),
// and pixel centers sit at integer coordinates. Storage is row-major,
// index = j * width + i.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace multimask {

/// Rectangular grid of values, row-major, one value per pixel.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height) {
    if (width <= 0 || height <= 0) {
      throw std::invalid_argument("Grid: dimensions must be positive");
    }
    values_.assign(static_cast<std::size_t>(width) * height, fill);
  }
  Grid(int width, int height, std::vector<T> values)
      : width_(width), height_(height), values_(std::move(values)) {
    if (width <= 0 || height <= 0 ||
        values_.size() != static_cast<std::size_t>(width) * height) {
      throw std::invalid_argument("Grid: value count does not match shape");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  T& at(int x, int y) { return values_[index(x, y)]; }
  const T& at(int x, int y) const { return values_[index(x, y)]; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  const std::vector<T>& values() const { return values_; }
  std::vector<T>& values() { return values_; }

  bool same_shape(const Grid& other) const {
    return width_ == other.width_ && height_ == other.height_;
  }
  template <typename U>
  bool same_shape(const Grid<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * width_ + x;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<T> values_;
};

/// Binary {0,1} per-pixel mask. 1 = pixel participates, 0 = masked out.
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::uint8_t fill = 1)
      : grid_(width, height, check_bit(fill)) {}
  explicit Mask(Grid<std::uint8_t> grid) : grid_(std::move(grid)) {
    for (std::uint8_t v : grid_.values()) check_bit(v);
  }

  static Mask ones(int width, int height) { return Mask(width, height, 1); }
  static Mask zeros(int width, int height) { return Mask(width, height, 0); }

  int width() const { return grid_.width(); }
  int height() const { return grid_.height(); }
  std::size_t size() const { return grid_.size(); }

  bool at(int x, int y) const { return grid_.at(x, y) != 0; }
  void set(int x, int y, bool value) {
    grid_.at(x, y) = value ? std::uint8_t{1} : std::uint8_t{0};
  }
  std::uint8_t operator[](std::size_t i) const { return grid_[i]; }

  const Grid<std::uint8_t>& grid() const { return grid_; }

  /// Elementwise product (logical AND). Shapes must match.
  Mask& operator&=(const Mask& other) {
    require_same_shape(other);
    for (std::size_t i = 0; i < grid_.size(); ++i) {
      grid_[i] = static_cast<std::uint8_t>(grid_[i] & other.grid_[i]);
    }
    return *this;
  }
  friend Mask operator&(Mask lhs, const Mask& rhs) { return lhs &= rhs; }

  std::size_t count() const {
    std::size_t n = 0;
    for (std::uint8_t v : grid_.values()) n += v;
    return n;
  }

  bool same_shape(const Mask& other) const {
    return grid_.same_shape(other.grid_);
  }

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  static std::uint8_t check_bit(std::uint8_t v) {
    if (v > 1) throw std::invalid_argument("Mask: values must be 0 or 1");
    return v;
  }
  void require_same_shape(const Mask& other) const {
    if (!same_shape(other)) {
      throw std::invalid_argument("Mask: shape mismatch");
    }
  }

  Grid<std::uint8_t> grid_;
};

/// Multi-channel image with values in [0,1]; channels is 1 (gray) or 3 (RGB).
/// Storage is row-major with interleaved channels: ((j*W + i)*C + c).
class ImageBuffer {
 public:
  ImageBuffer() = default;
  ImageBuffer(int width, int height, int channels, double fill = 0.0)
      : width_(width), height_(height), channels_(channels) {
    check_shape();
    check_value(fill);
    values_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  ImageBuffer(int width, int height, int channels, std::vector<double> values)
      : width_(width),
        height_(height),
        channels_(channels),
        values_(std::move(values)) {
    check_shape();
    if (values_.size() !=
        static_cast<std::size_t>(width) * height * channels) {
      throw std::invalid_argument("ImageBuffer: value count mismatch");
    }
    for (double v : values_) check_value(v);
  }

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channels_; }
  std::size_t size() const { return values_.size(); }

  double& at(int x, int y, int c = 0) { return values_[index(x, y, c)]; }
  const double& at(int x, int y, int c = 0) const {
    return values_[index(x, y, c)];
  }

  const std::vector<double>& values() const { return values_; }

  bool same_shape(const ImageBuffer& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;

 private:
  void check_shape() const {
    if (width_ <= 0 || height_ <= 0) {
      throw std::invalid_argument("ImageBuffer: dimensions must be positive");
    }
    if (channels_ != 1 && channels_ != 3) {
      throw std::invalid_argument("ImageBuffer: channels must be 1 or 3");
    }
  }
  static void check_value(double v) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw std::invalid_argument("ImageBuffer: values must lie in [0,1]");
    }
  }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Per-pixel scene depth in meters. Strictly positive everywhere.
class DepthMap {
 public:
  DepthMap() = default;
  DepthMap(int width, int height, double fill) : grid_(width, height, fill) {
    check_value(fill);
  }
  explicit DepthMap(Grid<double> grid) : grid_(std::move(grid)) {
    for (double v : grid_.values()) check_value(v);
  }

  int width() const { return grid_.width(); }
  int height() const { return grid_.height(); }
  std::size_t size() const { return grid_.size(); }

  double at(int x, int y) const { return grid_.at(x, y); }
  const Grid<double>& grid() const { return grid_; }

  bool same_shape(const DepthMap& other) const {
    return grid_.same_shape(other.grid_);
  }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;

 private:
  static void check_value(double v) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("DepthMap: depths must be strictly positive");
    }
  }

  Grid<double> grid_;
};

}  // namespace multimask
