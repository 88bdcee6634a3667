#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowi2i/grid.hpp"
#include "flowi2i/keyvalue.hpp"
#include "flowi2i/motion.hpp"

namespace flowi2i {

enum class Interpolation { Nearest, Bilinear };
enum class Split { Train, Val, Test };

std::string to_string(Interpolation i);
Interpolation parse_interpolation(std::string_view s);
std::string to_string(Split s);
Split parse_split(std::string_view s);

struct PreprocessSpec {
  int target_size = 128;
  Interpolation interpolation = Interpolation::Bilinear;
  // Centre crop is the only crop mode.

  void validate() const;
};

/// Short side resized to target_size (aspect preserving), centre crop to
/// target_size^2, declared range mapped linearly onto [-1, 1].
ImageGrid preprocess(const ImageGrid& image, const PreprocessSpec& spec);

/// Soft-edged ellipses and ribbons on a dark background; values in [0, 1].
ImageGrid generate_phantom(std::uint64_t seed, int size);

struct PairRecord {
  std::string id;
  Split split = Split::Train;
  std::string clean_path;      // relative to the dataset root, without extension
  std::string corrupted_path;  // idem
  double gate_ssim = 0.0;
  MotionTrajectory trajectory;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<PairRecord> records;
  Split split = Split::Train;
  GateSpec gate;
  PreprocessSpec preprocess;
};

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct DatasetSource {
  // Either a phantom seed range or a directory of grayscale images.
  std::uint64_t phantom_first_seed = 0;
  int phantom_count = 0;
  int phantom_size = 128;
  std::filesystem::path directory;
  ValueRange directory_range = kUnitRange;

  bool uses_directory() const { return !directory.empty(); }
};

struct BuildOptions {
  GateSpec gate;
  PreprocessSpec preprocess;
  SplitFractions splits;
  PairGenerationOptions generation;
  int pairs_per_image = 1;
  double failure_tolerance = 0.0;  // fraction of clean images allowed to fail the gate
  std::uint64_t seed = 1;
};

struct Dataset {
  std::filesystem::path root;
  DatasetManifest train, val, test;

  const DatasetManifest& manifest(Split s) const;
};

/// Preprocesses every clean image, generates gated pairs, assigns splits by
/// clean identity and persists images plus `manifest.jsonl` under `root`.
Dataset build_dataset(const DatasetSource& source, const BuildOptions& options, const std::filesystem::path& root);

/// Reads `manifest.jsonl` (all splits) from a dataset root.
Dataset load_dataset(const std::filesystem::path& root);

std::string record_to_json_line(const PairRecord& record);
PairRecord record_from_json_line(const std::string& line);

struct LoadedPair {
  ImageGrid clean;
  ImageGrid corrupted;
};

std::vector<LoadedPair> load_pairs(const std::filesystem::path& root, const DatasetManifest& manifest);

}  // namespace flowi2i
