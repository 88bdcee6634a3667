#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowi2i/backbone.hpp"
#include "flowi2i/codec.hpp"
#include "flowi2i/data.hpp"
#include "flowi2i/keyvalue.hpp"
#include "flowi2i/metrics.hpp"
#include "flowi2i/motion.hpp"
#include "flowi2i/sampler.hpp"
#include "flowi2i/trainer.hpp"

namespace flowi2i {

struct DataConfig {
  int phantom_count = 500;
  std::uint64_t phantom_first_seed = 0;
  int phantom_size = 128;
  std::string source_dir;  // empty: phantoms
  ValueRange source_range = kUnitRange;
  int pairs_per_image = 1;
  SplitFractions splits;
  std::uint64_t seed = 1;
  double failure_tolerance = 0.0;
};

struct EvalConfig {
  std::uint64_t feature_seed = 1;
  int kid_subset_size = 50;
  int kid_subsets = 20;
  std::uint64_t kid_seed = 1;
};

struct AblateConfig {
  std::vector<int> steps{2, 5, 10, 20, 40};
  std::vector<double> guidance{1.0, 1.1, 1.2, 1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9};
  std::vector<int> generation_steps{5, 10, 20, 40};
  int generation_count = 4;
  int max_inputs = 4;  // inputs shown in figure grids
};

// Every configurable field, in one flat "key = value" file. Missing keys take
// the defaults below; unknown keys are rejected. model.variant and
// model.p_drop also drive training.
struct RunConfig {
  static constexpr int kSchemaVersion = 1;

  ModelConfig model;
  CodecSpec codec;
  TrainConfig train;
  SampleConfig sample;
  PreprocessSpec preprocess;
  GateSpec gate;
  PairGenerationOptions generation;
  DataConfig data;
  EvalConfig eval;
  AblateConfig ablate;
  int generate_count = 8;

  void validate() const;
  KeyValues to_key_values() const;
  std::string to_text() const;

  /// Overlays `kv` on the defaults. Throws ConfigError on unknown keys,
  /// schema mismatch or unparsable values.
  static RunConfig from_key_values(const KeyValues& kv);
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  BuildOptions build_options() const;
  DatasetSource dataset_source(const std::filesystem::path& workdir) const;
};

}  // namespace flowi2i
