#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "flowi2i/backbone.hpp"
#include "flowi2i/codec.hpp"
#include "flowi2i/data.hpp"
#include "flowi2i/flow.hpp"
#include "flowi2i/keyvalue.hpp"
#include "flowi2i/optimizer.hpp"
#include "flowi2i/sampler.hpp"

namespace flowi2i {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr = 1e-4;
  int warmup_steps = 30;
  double grad_clip_norm = 0.1;
  double p_drop = 0.1;
  std::uint64_t seed = 1;
  Variant variant = Variant::Primary;
  int eval_every = 0;   // steps between VAL evaluations; 0 disables
  long max_steps = 0;   // stops early when positive
  int eval_pairs = 8;   // VAL pairs restored per evaluation
  LogitNormal timesteps;

  void validate() const;
  KeyValues to_key_values() const;
  /// Reads the train.* keys; other keys are ignored.
  static TrainConfig from_key_values(const KeyValues& kv);
};

struct StepResult {
  long step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;      // after clipping
  double raw_grad_norm = 0.0;  // before clipping
  double lr = 0.0;
  int dropped = 0;
};

/// Called once per sample with the outcome of its conditioning-drop draw.
using DropHook = std::function<void(long step, int sample, bool dropped)>;

// One optimization context. Samples draw (noise, t, drop) from a single
// seeded stream in batch order, so runs are reproducible.
class Trainer {
 public:
  Trainer(Backbone& model, const Codec& codec, const TrainConfig& config);

  StepResult train_step(std::span<const LoadedPair> batch);
  StepResult train_step(std::span<const LoadedPair* const> batch);

  void set_drop_hook(DropHook hook) { drop_hook_ = std::move(hook); }
  long steps_taken() const noexcept { return step_; }
  const TrainConfig& config() const noexcept { return config_; }
  const WarmupSchedule& schedule() const noexcept { return schedule_; }

 private:
  Backbone& model_;
  const Codec& codec_;
  TrainConfig config_;
  WarmupSchedule schedule_;
  Adam adam_;
  Rng rng_;
  long step_ = 0;
  DropHook drop_hook_;
};

struct EvalRecord {
  long step = 0;
  double ssim = 0.0;
  double mae = 0.0;
};

struct FitResult {
  std::filesystem::path checkpoint;
  std::vector<StepResult> steps;
  std::vector<EvalRecord> evals;
};

struct FitOptions {
  SampleConfig eval_sampling;
  /// Called after every step; useful for progress output.
  std::function<void(const StepResult&)> on_step;
};

/// Trains a fresh model on the TRAIN split; writes `train_log.jsonl` and
/// `checkpoint.fi2i` under `out_dir`.
FitResult fit(const Dataset& dataset, const ModelConfig& model_config, const Codec& codec,
              const TrainConfig& config, const std::filesystem::path& out_dir, const FitOptions& options = {});

/// Mean SSIM / MAE of restored vs clean over `pairs`.
EvalRecord evaluate_pairs(const VelocityModel& model, const Codec& codec, const ModelConfig& model_config,
                          std::span<const LoadedPair> pairs, const SampleConfig& sampling);

}  // namespace flowi2i
