#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "flowi2i/data.hpp"
#include "flowi2i/errors.hpp"
#include "flowi2i/image_io.hpp"
#include "flowi2i/metrics.hpp"

using namespace flowi2i;
namespace fs = std::filesystem;

namespace {

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("flowi2i_" + name);
  fs::remove_all(p);
  return p;
}

BuildOptions small_options() {
  BuildOptions o;
  o.preprocess.target_size = 64;
  o.seed = 5;
  return o;
}

DatasetSource phantoms(int count, int size = 64) {
  DatasetSource s;
  s.phantom_count = count;
  s.phantom_size = size;
  return s;
}

}  // namespace

TEST_CASE("preprocess maps the declared range onto [-1, 1]") {
  const ImageGrid img = generate_phantom(1, 64);
  const ImageGrid out = preprocess(img, {64});
  CHECK(out.range() == kSignedRange);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.values()[i] == doctest::Approx(2.0f * img.values()[i] - 1.0f));
  const auto [mn, mx] = std::minmax_element(out.values().begin(), out.values().end());
  CHECK(*mn >= -1.0f);
  CHECK(*mx <= 1.0f);

  ImageGrid wide(40, 80, ValueRange{0.0f, 255.0f}, 255.0f);
  const ImageGrid cropped = preprocess(wide, {32, Interpolation::Nearest});
  CHECK(cropped.height() == 32);
  CHECK(cropped.width() == 32);
  for (float v : cropped.values()) CHECK(v == 1.0f);
  CHECK_THROWS_AS(preprocess(ImageGrid(16, 16), {32}), ShapeError);
}

TEST_CASE("preprocess is bit-identical across reruns and resizes") {
  const ImageGrid img = generate_phantom(2, 96);
  CHECK(preprocess(img, {64}) == preprocess(img, {64}));
  CHECK(preprocess(img, {64, Interpolation::Nearest}) == preprocess(img, {64, Interpolation::Nearest}));
  // Centre crop of a known ramp keeps the middle columns.
  ImageGrid ramp(8, 12, kUnitRange);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 12; ++x) ramp.at(y, x) = static_cast<float>(x) / 11.0f;
  const ImageGrid mid = preprocess(ramp, {8});
  CHECK(mid.at(0, 0) == doctest::Approx(2.0f * 2.0f / 11.0f - 1.0f));
}

TEST_CASE("phantoms are deterministic, distinct and moderately bright") {
  CHECK(generate_phantom(5, 64) == generate_phantom(5, 64));
  std::set<std::vector<float>> seen;
  for (int s = 0; s < 1000; ++s) {
    const ImageGrid p = generate_phantom(static_cast<std::uint64_t>(s), 128);
    double mean = 0.0;
    float lo = 1.0f;
    float hi = 0.0f;
    for (float v : p.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      mean += v;
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
    mean /= static_cast<double>(p.size());
    CHECK(mean > 0.05);
    CHECK(mean < 0.6);
    seen.insert(std::vector<float>(p.values().begin(), p.values().end()));
  }
  CHECK(seen.size() == 1000);
  CHECK(max_abs_difference(generate_phantom(0, 128).values(), generate_phantom(1, 128).values()) > 0.0f);
  CHECK_THROWS_AS(generate_phantom(0, 16), ParameterError);
}

TEST_CASE("build_dataset splits by identity and persists gated pairs") {
  const fs::path root = scratch("dataset_a");
  const Dataset ds = build_dataset(phantoms(10), small_options(), root);
  CHECK(ds.train.records.size() == 8);
  CHECK(ds.val.records.size() == 1);
  CHECK(ds.test.records.size() == 1);
  std::set<std::string> ids;
  for (const auto* m : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& r : m->records) {
      CHECK(ids.insert(r.clean_path).second);
      const ImageGrid clean = load_image(root / r.clean_path);
      const ImageGrid corrupted = load_image(root / r.corrupted_path);
      CHECK(clean.height() == 64);
      CHECK(clean.range() == kSignedRange);
      CHECK(corrupted.range() == kSignedRange);
      const double s = ssim(clean, corrupted);
      CHECK(s == r.gate_ssim);
      CHECK(m->gate.accepts(s));
      CHECK(corrupt(clean, r.trajectory) == corrupted);
    }
  }

  const Dataset reloaded = load_dataset(root);
  CHECK(reloaded.train.records.size() == 8);
  CHECK(reloaded.train.records[0].trajectory == ds.train.records[0].trajectory);
  CHECK(reloaded.val.gate.s1 == ds.val.gate.s1);
  CHECK(load_pairs(root, reloaded.test).size() == 1);

  const fs::path again = scratch("dataset_b");
  build_dataset(phantoms(10), small_options(), again);
  CHECK(file_bytes(root / "manifest.jsonl") == file_bytes(again / "manifest.jsonl"));
  for (const auto& r : ds.train.records) {
    CHECK(file_bytes(root / (r.corrupted_path + ".f32")) == file_bytes(again / (r.corrupted_path + ".f32")));
    CHECK(file_bytes(root / (r.corrupted_path + ".pgm")) == file_bytes(again / (r.corrupted_path + ".pgm")));
  }
  fs::remove_all(root);
  fs::remove_all(again);
}

TEST_CASE("multiple pairs per image stay within one split") {
  const fs::path root = scratch("dataset_multi");
  BuildOptions o = small_options();
  o.pairs_per_image = 2;
  const Dataset ds = build_dataset(phantoms(5), o, root);
  CHECK(ds.train.records.size() + ds.val.records.size() + ds.test.records.size() == 10);
  for (const auto* m : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& r : m->records) {
      for (const auto* other : {&ds.train, &ds.val, &ds.test}) {
        if (other == m) continue;
        for (const auto& o2 : other->records) CHECK(o2.clean_path != r.clean_path);
      }
    }
  }
  fs::remove_all(root);
}

TEST_CASE("gate failures beyond tolerance abort the build") {
  const fs::path root = scratch("dataset_fail");
  BuildOptions o = small_options();
  o.gate = GateSpec{0.01, 0.02, 2};
  try {
    build_dataset(phantoms(3), o, root);
    FAIL("expected BuildError");
  } catch (const BuildError& e) {
    CHECK(std::string(e.what()).find("phantom_00000") != std::string::npos);
  }
  o.failure_tolerance = 1.0;
  const Dataset ds = build_dataset(phantoms(3), o, root);
  CHECK(ds.train.records.size() + ds.val.records.size() + ds.test.records.size() == 0);
  fs::remove_all(root);
}

TEST_CASE("build_dataset validates its inputs") {
  const fs::path root = scratch("dataset_bad");
  BuildOptions o = small_options();
  o.splits = {0.5, 0.2, 0.2};
  CHECK_THROWS_AS(build_dataset(phantoms(4), o, root), ParameterError);
  CHECK_THROWS_AS(build_dataset(phantoms(0), small_options(), root), ParameterError);
  fs::remove_all(root);
}

TEST_CASE("directory sources are preprocessed like phantoms") {
  const fs::path src = scratch("dataset_src");
  fs::create_directories(src);
  for (int i = 0; i < 4; ++i) write_pgm(src / ("img" + std::to_string(i) + ".pgm"), generate_phantom(i, 80));
  DatasetSource s;
  s.directory = src;
  BuildOptions o = small_options();
  o.splits = {0.5, 0.25, 0.25};
  const fs::path root = scratch("dataset_dir");
  const Dataset ds = build_dataset(s, o, root);
  CHECK(ds.train.records.size() == 2);
  CHECK(load_image(root / ds.train.records[0].clean_path).height() == 64);
  fs::remove_all(src);
  fs::remove_all(root);
}

TEST_CASE("manifest records round trip through JSON lines") {
  PairRecord r;
  r.id = "x";
  r.split = Split::Val;
  r.clean_path = "clean/x";
  r.corrupted_path = "corrupted/x";
  r.gate_ssim = 0.7123456789012345;
  r.seed = 18446744073709551615ULL;
  r.trajectory.segments = {MotionSegment{0, 3, 1.25, -0.5, 0.01}, MotionSegment{3, 8, 0, 0, 0}};
  const PairRecord back = record_from_json_line(record_to_json_line(r));
  CHECK(back.id == r.id);
  CHECK(back.split == Split::Val);
  CHECK(back.gate_ssim == r.gate_ssim);
  CHECK(back.seed == r.seed);
  CHECK(back.trajectory == r.trajectory);
  CHECK_THROWS_AS(record_from_json_line("{\"id\": 3}"), IoError);
}
