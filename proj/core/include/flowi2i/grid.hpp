#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flowi2i/rng.hpp"

namespace flowi2i {

struct ValueRange {
  float lo = 0.0f;
  float hi = 1.0f;

  float span() const noexcept { return hi - lo; }
  bool operator==(const ValueRange&) const = default;
};

inline constexpr ValueRange kUnitRange{0.0f, 1.0f};
inline constexpr ValueRange kSignedRange{-1.0f, 1.0f};

/// Channel-major C x H x W array; the unit flow matching operates on.
class LatentGrid {
 public:
  LatentGrid() = default;
  LatentGrid(int channels, int height, int width, float fill = 0.0f);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float& at(int c, int y, int x) { return data_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return data_[index(c, y, x)]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }
  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }

  bool same_shape(const LatentGrid& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  std::string shape_string() const;

  static LatentGrid gaussian(int channels, int height, int width, Rng& rng);

  bool operator==(const LatentGrid&) const = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Single-channel raster with a declared value range.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, ValueRange range = kUnitRange, float fill = 0.0f);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  ValueRange range() const noexcept { return range_; }
  void set_range(ValueRange r) noexcept { range_ = r; }

  float& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  float at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  bool same_shape(const ImageGrid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  /// Linear map of the declared range onto `target` (no clamping).
  ImageGrid remapped(ValueRange target) const;
  /// Values mapped to [0, 1] as doubles, clamped.
  std::vector<double> unit_values() const;

  bool operator==(const ImageGrid&) const = default;

 private:
  int height_ = 0;
  int width_ = 0;
  ValueRange range_ = kUnitRange;
  std::vector<float> data_;
};

float max_abs_difference(std::span<const float> a, std::span<const float> b);

}  // namespace flowi2i
