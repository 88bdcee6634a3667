#include <doctest.h>

#include <filesystem>

#include "flowi2i/codec.hpp"
#include "flowi2i/data.hpp"
#include "flowi2i/errors.hpp"

using namespace flowi2i;
namespace fs = std::filesystem;

TEST_CASE("identity codec maps images to [-1, 1] latents and back") {
  const Codec codec;
  const ImageGrid img = generate_phantom(3, 32);
  const LatentGrid z = codec.encode(img);
  CHECK(z.channels() == 1);
  CHECK(z.height() == 32);
  const ImageGrid back = codec.decode(z);
  CHECK(back.range() == kSignedRange);
  CHECK(max_abs_difference(back.values(), img.remapped(kSignedRange).values()) <= 1e-6f);
  CHECK(codec.latent_size(32) == 32);
}

TEST_CASE("codec specs are validated") {
  CHECK_THROWS_AS(Codec(CodecSpec{CodecKind::Identity, 2, 1}), ParameterError);
  CHECK_THROWS_AS(Codec(CodecSpec{CodecKind::Identity, 1, 4}), ParameterError);
  CHECK_THROWS_AS(Codec(CodecSpec{CodecKind::StridedAe, 0, 4}), ParameterError);
  const Codec ae(CodecSpec{CodecKind::StridedAe, 4, 3});
  CHECK_THROWS_AS(ae.latent_size(30), ShapeError);
}

TEST_CASE("strided autoencoder shapes, training and persistence") {
  Codec ae(CodecSpec{CodecKind::StridedAe, 4, 4}, 7);
  std::vector<ImageGrid> images;
  for (int i = 0; i < 6; ++i) images.push_back(preprocess(generate_phantom(i, 32), {32}));
  const LatentGrid z = ae.encode(images[0]);
  CHECK(z.channels() == 4);
  CHECK(z.height() == 8);
  CHECK(ae.decode(z).height() == 32);

  AeTrainConfig cfg;
  cfg.steps = 300;
  cfg.batch_size = 4;
  const auto before = [&] {
    double e = 0;
    for (const auto& im : images) {
      const ImageGrid r = ae.decode(ae.encode(im));
      for (std::size_t i = 0; i < r.size(); ++i) {
        const double d = r.values()[i] - im.values()[i];
        e += d * d;
      }
    }
    return e / (images.size() * images[0].size());
  }();
  const double after = ae.train(images, cfg);
  CHECK(after < 0.5 * before);

  const fs::path p = fs::temp_directory_path() / "flowi2i_codec.fi2i";
  ae.save(p);
  const Codec loaded = Codec::load(p);
  CHECK(loaded.spec().latent_channels == 4);
  CHECK(loaded.encode(images[1]) == ae.encode(images[1]));
  fs::remove(p);
}
