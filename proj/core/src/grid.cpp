#include "flowi2i/grid.hpp"

#include <algorithm>
#include <cmath>

#include "flowi2i/errors.hpp"

namespace flowi2i {

LatentGrid::LatentGrid(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw ShapeError("LatentGrid dimensions must be positive");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

std::string LatentGrid::shape_string() const {
  return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
}

LatentGrid LatentGrid::gaussian(int channels, int height, int width, Rng& rng) {
  LatentGrid g(channels, height, width);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (float& v : g.values()) v = dist(rng);
  return g;
}

ImageGrid::ImageGrid(int height, int width, ValueRange range, float fill)
    : height_(height), width_(width), range_(range) {
  if (height <= 0 || width <= 0) throw ShapeError("ImageGrid dimensions must be positive");
  if (!(range.hi > range.lo)) throw ParameterError("ImageGrid range must have hi > lo");
  data_.assign(static_cast<std::size_t>(height) * width, fill);
}

ImageGrid ImageGrid::remapped(ValueRange target) const {
  ImageGrid out(height_, width_, target);
  const double scale = static_cast<double>(target.span()) / range_.span();
  for (std::size_t i = 0; i < data_.size(); ++i) {
    out.data_[i] = static_cast<float>(target.lo + (data_[i] - static_cast<double>(range_.lo)) * scale);
  }
  return out;
}

std::vector<double> ImageGrid::unit_values() const {
  std::vector<double> out(data_.size());
  const double lo = range_.lo;
  const double span = range_.span();
  for (std::size_t i = 0; i < data_.size(); ++i) {
    out[i] = std::clamp((data_[i] - lo) / span, 0.0, 1.0);
  }
  return out;
}

float max_abs_difference(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("max_abs_difference: size mismatch");
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace flowi2i
