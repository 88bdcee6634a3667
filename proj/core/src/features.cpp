#include "flowi2i/features.hpp"

#include <cmath>

#include "flowi2i/errors.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i {
namespace {

// Channel-major activations: rows = channels, cols = h * w.
struct Activation {
  int channels;
  int height;
  int width;
  Eigen::MatrixXf data;
};

Activation conv3x3_stride2(const Activation& in, const Eigen::MatrixXf& weight, const Eigen::RowVectorXf& bias,
                           bool relu) {
  const int oh = (in.height + 1) / 2;
  const int ow = (in.width + 1) / 2;
  // im2col: (oh * ow) x (in * 9), zero padding 1.
  Eigen::MatrixXf cols = Eigen::MatrixXf::Zero(oh * ow, in.channels * 9);
  for (int c = 0; c < in.channels; ++c) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= in.height) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int ix = 2 * ox + kx - 1;
            if (ix < 0 || ix >= in.width) continue;
            cols(oy * ow + ox, c * 9 + ky * 3 + kx) = in.data(c, iy * in.width + ix);
          }
        }
      }
    }
  }
  Eigen::MatrixXf out = cols * weight;
  out.rowwise() += bias;
  if (relu) out = out.cwiseMax(0.0f);
  return Activation{static_cast<int>(weight.cols()), oh, ow, out.transpose()};
}

}  // namespace

RandomConvExtractor::RandomConvExtractor(std::uint64_t seed) {
  Rng rng(seed);
  const int widths[] = {1, 16, 32, 64};
  for (int l = 0; l < 3; ++l) {
    Conv conv{widths[l], widths[l + 1], Eigen::MatrixXf(widths[l] * 9, widths[l + 1]),
              Eigen::RowVectorXf::Zero(widths[l + 1])};
    std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / (widths[l] * 9.0f)));
    for (Eigen::Index i = 0; i < conv.weight.size(); ++i) conv.weight.data()[i] = dist(rng);
    for (Eigen::Index i = 0; i < conv.bias.size(); ++i) conv.bias(i) = 0.1f * dist(rng);
    layers_.push_back(std::move(conv));
  }
}

Eigen::RowVectorXd RandomConvExtractor::extract(const ImageGrid& image) const {
  const ImageGrid signed_image = image.remapped(kSignedRange);
  Activation act{1, image.height(), image.width(), Eigen::MatrixXf(1, image.height() * image.width())};
  const auto values = signed_image.values();
  for (std::size_t i = 0; i < values.size(); ++i) act.data(0, static_cast<Eigen::Index>(i)) = values[i];
  for (const Conv& conv : layers_) act = conv3x3_stride2(act, conv.weight, conv.bias, /*relu=*/true);
  return act.data.rowwise().mean().transpose().cast<double>();
}

Eigen::MatrixXd extract_features(const std::vector<ImageGrid>& images, const FeatureExtractor& extractor) {
  if (images.empty()) throw ParameterError("extract_features: empty image list");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), extractor.dim());
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i].same_shape(images.front())) throw ShapeError("extract_features: images differ in shape");
    out.row(static_cast<Eigen::Index>(i)) = extractor.extract(images[i]);
  }
  return out;
}

}  // namespace flowi2i
