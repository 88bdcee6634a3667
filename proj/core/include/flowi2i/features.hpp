#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "flowi2i/grid.hpp"

namespace flowi2i {

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int dim() const = 0;
  virtual Eigen::RowVectorXd extract(const ImageGrid& image) const = 0;
};

// Frozen, randomly initialized encoder: three 3x3 stride-2 convolutions
// (1 -> 16 -> 32 -> 64 channels) with ReLU, then global average pooling.
class RandomConvExtractor final : public FeatureExtractor {
 public:
  explicit RandomConvExtractor(std::uint64_t seed = 1);

  int dim() const override { return 64; }
  Eigen::RowVectorXd extract(const ImageGrid& image) const override;

 private:
  struct Conv {
    int in_channels;
    int out_channels;
    Eigen::MatrixXf weight;  // (in * 9) x out
    Eigen::RowVectorXf bias;
  };
  std::vector<Conv> layers_;
};

/// One feature row per image.
Eigen::MatrixXd extract_features(const std::vector<ImageGrid>& images, const FeatureExtractor& extractor);

}  // namespace flowi2i
