#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "flowi2i/grid.hpp"
#include "flowi2i/keyvalue.hpp"
#include "flowi2i/tape.hpp"

namespace flowi2i {

enum class CodecKind { Identity, StridedAe };

std::string to_string(CodecKind k);
CodecKind parse_codec_kind(std::string_view s);

struct CodecSpec {
  CodecKind kind = CodecKind::Identity;
  int spatial_factor = 1;
  int latent_channels = 1;

  void validate() const;
  KeyValues to_key_values() const;
  static CodecSpec from_key_values(const KeyValues& kv);
};

struct AeTrainConfig {
  int steps = 2000;
  int batch_size = 8;
  double lr = 2e-3;
  std::uint64_t seed = 1;
};

// Frozen image <-> latent mapping. IDENTITY works in pixel space; STRIDED_AE
// is a stride-f convolution (kernel f, stride f) with a tanh hidden layer,
// mirrored by a transposed convolution on the way back.
class Codec {
 public:
  Codec();  // identity
  explicit Codec(const CodecSpec& spec, std::uint64_t init_seed = 1);

  const CodecSpec& spec() const noexcept { return spec_; }
  int latent_size(int image_size) const;
  int image_size(int latent_size) const { return latent_size * spec_.spatial_factor; }

  /// Image (any declared range) -> latent; the image is first mapped to [-1, 1].
  LatentGrid encode(const ImageGrid& image) const;
  /// Latent -> image in [-1, 1] (clamped).
  ImageGrid decode(const LatentGrid& latent) const;

  /// Plain reconstruction training of the autoencoder; returns the final
  /// mean squared error. No-op for IDENTITY.
  double train(const std::vector<ImageGrid>& images, const AeTrainConfig& config);

  void save(const std::filesystem::path& path) const;
  static Codec load(const std::filesystem::path& path);

 private:
  Matrix encode_patches(const Matrix& patches) const;
  Matrix decode_patches(const Matrix& codes) const;
  std::vector<Parameter*> parameters();

  CodecSpec spec_;
  int hidden_ = 0;
  // Shared so Codec stays cheaply copyable; parameters are frozen after training.
  std::shared_ptr<std::vector<Parameter>> params_;
};

}  // namespace flowi2i
