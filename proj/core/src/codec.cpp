#include "flowi2i/codec.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowi2i/archive.hpp"
#include "flowi2i/errors.hpp"
#include "flowi2i/optimizer.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i {
namespace {

enum ParamIndex { kEncW1, kEncB1, kEncW2, kEncB2, kDecW1, kDecB1, kDecW2, kDecB2, kParamCount };

Matrix xavier(int in, int out, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(in + out));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Matrix m(in, out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

// Non-overlapping f x f patches of a single-channel image, one row per patch.
Matrix image_patches(const ImageGrid& image, int f) {
  const int g = image.height() / f;
  const int gw = image.width() / f;
  const ImageGrid signed_image = image.remapped(kSignedRange);
  Matrix m(g * gw, f * f);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < gw; ++gx) {
      for (int py = 0; py < f; ++py) {
        for (int px = 0; px < f; ++px) m(gy * gw + gx, py * f + px) = signed_image.at(gy * f + py, gx * f + px);
      }
    }
  }
  return m;
}

}  // namespace

std::string to_string(CodecKind k) { return k == CodecKind::Identity ? "identity" : "strided_ae"; }

CodecKind parse_codec_kind(std::string_view s) {
  if (s == "identity" || s == "IDENTITY") return CodecKind::Identity;
  if (s == "strided_ae" || s == "STRIDED_AE") return CodecKind::StridedAe;
  throw ConfigError("unknown codec kind '" + std::string(s) + "'");
}

void CodecSpec::validate() const {
  if (spatial_factor < 1 || latent_channels < 1) throw ParameterError("codec: factor and channels must be positive");
  if (kind == CodecKind::Identity && (spatial_factor != 1 || latent_channels != 1)) {
    throw ParameterError("identity codec requires spatial_factor = 1 and latent_channels = 1");
  }
}

KeyValues CodecSpec::to_key_values() const {
  return {{"codec.kind", to_string(kind)},
          {"codec.spatial_factor", std::to_string(spatial_factor)},
          {"codec.latent_channels", std::to_string(latent_channels)}};
}

CodecSpec CodecSpec::from_key_values(const KeyValues& kv) {
  CodecSpec s;
  s.kind = parse_codec_kind(kv_string(kv, "codec.kind"));
  s.spatial_factor = kv_int(kv, "codec.spatial_factor");
  s.latent_channels = kv_int(kv, "codec.latent_channels");
  s.validate();
  return s;
}

Codec::Codec() : Codec(CodecSpec{}) {}

Codec::Codec(const CodecSpec& spec, std::uint64_t init_seed) : spec_(spec) {
  spec_.validate();
  if (spec_.kind == CodecKind::Identity) return;
  const int f2 = spec_.spatial_factor * spec_.spatial_factor;
  hidden_ = 4 * f2;
  Rng rng(init_seed);
  params_ = std::make_shared<std::vector<Parameter>>();
  auto& p = *params_;
  p.reserve(kParamCount);
  p.emplace_back("encoder.in.weight", xavier(f2, hidden_, rng));
  p.emplace_back("encoder.in.bias", Matrix::Zero(1, hidden_));
  p.emplace_back("encoder.out.weight", xavier(hidden_, spec_.latent_channels, rng));
  p.emplace_back("encoder.out.bias", Matrix::Zero(1, spec_.latent_channels));
  p.emplace_back("decoder.in.weight", xavier(spec_.latent_channels, hidden_, rng));
  p.emplace_back("decoder.in.bias", Matrix::Zero(1, hidden_));
  p.emplace_back("decoder.out.weight", xavier(hidden_, f2, rng));
  p.emplace_back("decoder.out.bias", Matrix::Zero(1, f2));
}

int Codec::latent_size(int image_size) const {
  if (image_size % spec_.spatial_factor != 0) {
    throw ShapeError("image side " + std::to_string(image_size) + " not divisible by codec factor " +
                     std::to_string(spec_.spatial_factor));
  }
  return image_size / spec_.spatial_factor;
}

Matrix Codec::encode_patches(const Matrix& patches) const {
  const auto& p = *params_;
  Matrix h = patches * p[kEncW1].value;
  h.rowwise() += p[kEncB1].value.row(0);
  h = h.array().tanh().matrix();
  Matrix z = h * p[kEncW2].value;
  z.rowwise() += p[kEncB2].value.row(0);
  return z;
}

Matrix Codec::decode_patches(const Matrix& codes) const {
  const auto& p = *params_;
  Matrix h = codes * p[kDecW1].value;
  h.rowwise() += p[kDecB1].value.row(0);
  h = h.array().tanh().matrix();
  Matrix x = h * p[kDecW2].value;
  x.rowwise() += p[kDecB2].value.row(0);
  return x;
}

LatentGrid Codec::encode(const ImageGrid& image) const {
  if (image.height() != image.width()) throw ShapeError("codec: image must be square");
  const int n = latent_size(image.height());
  if (spec_.kind == CodecKind::Identity) {
    const ImageGrid signed_image = image.range() == kSignedRange ? image : image.remapped(kSignedRange);
    LatentGrid latent(1, n, n);
    std::copy(signed_image.values().begin(), signed_image.values().end(), latent.values().begin());
    return latent;
  }
  const Matrix codes = encode_patches(image_patches(image, spec_.spatial_factor));
  LatentGrid latent(spec_.latent_channels, n, n);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < spec_.latent_channels; ++c) latent.at(c, y, x) = codes(y * n + x, c);
    }
  }
  return latent;
}

ImageGrid Codec::decode(const LatentGrid& latent) const {
  if (latent.channels() != spec_.latent_channels || latent.height() != latent.width()) {
    throw ShapeError("codec: latent " + latent.shape_string() + " inconsistent with codec spec");
  }
  const int n = latent.height();
  const int f = spec_.spatial_factor;
  ImageGrid image(n * f, n * f, kSignedRange);
  if (spec_.kind == CodecKind::Identity) {
    auto out = image.values();
    const auto in = latent.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(in[i], -1.0f, 1.0f);
    return image;
  }
  Matrix codes(n * n, spec_.latent_channels);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      for (int c = 0; c < spec_.latent_channels; ++c) codes(y * n + x, c) = latent.at(c, y, x);
    }
  }
  const Matrix patches = decode_patches(codes);
  for (int gy = 0; gy < n; ++gy) {
    for (int gx = 0; gx < n; ++gx) {
      for (int py = 0; py < f; ++py) {
        for (int px = 0; px < f; ++px) {
          image.at(gy * f + py, gx * f + px) = std::clamp(patches(gy * n + gx, py * f + px), -1.0f, 1.0f);
        }
      }
    }
  }
  return image;
}

std::vector<Parameter*> Codec::parameters() {
  std::vector<Parameter*> out;
  if (!params_) return out;
  for (auto& p : *params_) out.push_back(&p);
  return out;
}

double Codec::train(const std::vector<ImageGrid>& images, const AeTrainConfig& config) {
  if (spec_.kind == CodecKind::Identity) return 0.0;
  if (images.empty()) throw ParameterError("codec training needs at least one image");
  // Detach from any copies sharing the untrained parameters.
  params_ = std::make_shared<std::vector<Parameter>>(*params_);
  std::vector<Matrix> all_patches;
  all_patches.reserve(images.size());
  for (const auto& img : images) {
    latent_size(img.height());
    all_patches.push_back(image_patches(img, spec_.spatial_factor));
  }
  auto params = parameters();
  Adam adam(params);
  Rng rng(config.seed);
  std::uniform_int_distribution<std::size_t> pick(0, images.size() - 1);
  double last = 0.0;
  for (int step = 1; step <= config.steps; ++step) {
    for (Parameter* p : params) p->zero_grad();
    const int bs = std::max(1, config.batch_size);
    const Eigen::Index rows = all_patches.front().rows();
    Matrix batch(rows * bs, all_patches.front().cols());
    for (int b = 0; b < bs; ++b) batch.middleRows(b * rows, rows) = all_patches[pick(rng)];

    Tape tape;
    auto& p = *params_;
    Var x = tape.input(batch);
    Var h = tape.tanh(tape.linear(x, tape.param(p[kEncW1]), tape.param(p[kEncB1])));
    Var z = tape.linear(h, tape.param(p[kEncW2]), tape.param(p[kEncB2]));
    Var g = tape.tanh(tape.linear(z, tape.param(p[kDecW1]), tape.param(p[kDecB1])));
    Var recon = tape.linear(g, tape.param(p[kDecW2]), tape.param(p[kDecB2]));
    Var loss = tape.mse(recon, x);
    tape.backward(loss);
    last = tape.value(loss)(0, 0);
    adam.step(config.lr);
  }
  for (Parameter* p : params) p->zero_grad();
  return last;
}

void Codec::save(const std::filesystem::path& path) const {
  KeyValues kv = spec_.to_key_values();
  kv["format"] = "flowi2i.codec";
  Archive archive;
  archive.config_text = format_key_values(kv);
  if (params_) {
    for (const auto& p : *params_) archive.arrays.emplace_back(p.name, p.value);
  }
  write_archive(path, archive);
}

Codec Codec::load(const std::filesystem::path& path) {
  Archive archive = read_archive(path);
  const KeyValues kv = parse_key_values(archive.config_text);
  if (kv_string(kv, "format") != "flowi2i.codec") throw IoError(path.string() + " is not a codec checkpoint");
  Codec codec(CodecSpec::from_key_values(kv));
  const std::size_t expected = codec.params_ ? codec.params_->size() : 0;
  if (archive.arrays.size() != expected) throw IoError("codec checkpoint array count mismatch");
  for (std::size_t i = 0; i < expected; ++i) {
    Parameter& p = (*codec.params_)[i];
    auto& [name, value] = archive.arrays[i];
    if (name != p.name || value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
      throw IoError("codec checkpoint array '" + name + "' does not match spec");
    }
    p.value = std::move(value);
  }
  return codec;
}

}  // namespace flowi2i
