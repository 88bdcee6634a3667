#include "flowi2i/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowi2i/errors.hpp"
#include "flowi2i/metrics.hpp"

namespace flowi2i {
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 1) throw ParameterError("train.epochs must be >= 1");
  if (batch_size < 1) throw ParameterError("train.batch_size must be >= 1");
  if (!(lr > 0.0)) throw ParameterError("train.lr must be > 0");
  if (warmup_steps < 0) throw ParameterError("train.warmup_steps must be >= 0");
  if (!(grad_clip_norm > 0.0)) throw ParameterError("train.grad_clip_norm must be > 0");
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ParameterError("p_drop must lie in [0, 1]");
  if (eval_every < 0) throw ParameterError("train.eval_every must be >= 0");
  if (max_steps < 0) throw ParameterError("train.max_steps must be >= 0");
  if (eval_pairs < 1) throw ParameterError("train.eval_pairs must be >= 1");
  if (!(timesteps.std > 0.0)) throw ParameterError("train.t_std must be > 0");
}

KeyValues TrainConfig::to_key_values() const {
  return {{"train.epochs", std::to_string(epochs)},
          {"train.batch_size", std::to_string(batch_size)},
          {"train.lr", format_double(lr)},
          {"train.warmup_steps", std::to_string(warmup_steps)},
          {"train.grad_clip_norm", format_double(grad_clip_norm)},
          {"train.seed", std::to_string(seed)},
          {"train.eval_every", std::to_string(eval_every)},
          {"train.max_steps", std::to_string(max_steps)},
          {"train.eval_pairs", std::to_string(eval_pairs)},
          {"train.t_mean", format_double(timesteps.mean)},
          {"train.t_std", format_double(timesteps.std)}};
}

TrainConfig TrainConfig::from_key_values(const KeyValues& kv) {
  TrainConfig c;
  c.epochs = kv_int(kv, "train.epochs");
  c.batch_size = kv_int(kv, "train.batch_size");
  c.lr = kv_double(kv, "train.lr");
  c.warmup_steps = kv_int(kv, "train.warmup_steps");
  c.grad_clip_norm = kv_double(kv, "train.grad_clip_norm");
  c.seed = kv_u64(kv, "train.seed");
  c.eval_every = kv_int(kv, "train.eval_every");
  c.max_steps = kv_int(kv, "train.max_steps");
  c.eval_pairs = kv_int(kv, "train.eval_pairs");
  c.timesteps.mean = kv_double(kv, "train.t_mean");
  c.timesteps.std = kv_double(kv, "train.t_std");
  return c;
}

Trainer::Trainer(Backbone& model, const Codec& codec, const TrainConfig& config)
    : model_(model),
      codec_(codec),
      config_(config),
      schedule_{config.lr, config.warmup_steps},
      adam_(model.parameters()),
      rng_(derive_seed(config.seed, 0x7a41)) {
  config_.validate();
  if (model.variant() != config.variant) {
    throw ContractError("trainer variant " + to_string(config.variant) + " does not match model variant " +
                        to_string(model.variant()));
  }
}

StepResult Trainer::train_step(std::span<const LoadedPair> batch) {
  std::vector<const LoadedPair*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& p : batch) ptrs.push_back(&p);
  return train_step(std::span<const LoadedPair* const>(ptrs));
}

StepResult Trainer::train_step(std::span<const LoadedPair* const> batch) {
  if (batch.empty()) throw ParameterError("train_step: empty batch");
  const ModelConfig& mc = model_.config();
  const long step = step_ + 1;
  model_.zero_grad();

  StepResult r;
  r.step = step;
  const float seed = 1.0f / static_cast<float>(batch.size());
  double loss_sum = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LatentGrid x_data = codec_.encode(batch[i]->clean);
    const LatentGrid source = codec_.encode(batch[i]->corrupted);
    if (x_data.channels() != mc.latent_channels || x_data.height() != mc.latent_size) {
      throw ShapeError("train_step: encoded latent " + x_data.shape_string() + " does not match the model");
    }
    const LatentGrid noise = LatentGrid::gaussian(x_data.channels(), x_data.height(), x_data.width(), rng_);
    const FlowTimestep t = logit_normal_time(standard_normal(rng_), config_.timesteps);
    bool dropped = false;
    const ConditioningBundle bundle =
        apply_condition_drop(ConditioningBundle::from_source(source), config_.p_drop, config_.variant, rng_, &dropped);
    if (drop_hook_) drop_hook_(step, static_cast<int>(i), dropped);
    r.dropped += dropped ? 1 : 0;

    const FlowSample fs = make_flow_sample(x_data, noise, t);
    Tape tape;
    const Var out = model_.build(tape, fs.x_t, t, bundle);
    const Var target = tape.input(patchify(fs.target_v, mc.patch_size));
    const Var loss = tape.mse(out, target);
    const double l = tape.value(loss)(0, 0);
    if (!std::isfinite(l)) {
      std::ostringstream os;
      os << "non-finite loss at step " << step << " (sample " << i << ", t=" << t.value()
         << ", dropped=" << dropped << ", lr=" << schedule_.lr_at(step) << ")";
      throw NumericalError(os.str());
    }
    loss_sum += l;
    tape.backward(loss, seed);
  }
  r.loss = loss_sum / static_cast<double>(batch.size());

  std::vector<Parameter*> params = model_.parameters();
  r.raw_grad_norm = global_grad_norm(params);
  if (!std::isfinite(r.raw_grad_norm)) {
    throw NumericalError("non-finite gradient norm at step " + std::to_string(step));
  }
  r.grad_norm = clip_grad_norm(params, config_.grad_clip_norm);
  r.lr = schedule_.lr_at(step);
  adam_.step(r.lr);
  step_ = step;
  return r;
}

EvalRecord evaluate_pairs(const VelocityModel& model, const Codec& codec, const ModelConfig& mc,
                          std::span<const LoadedPair> pairs, const SampleConfig& sampling) {
  EvalRecord e;
  if (pairs.empty()) return e;
  std::vector<ImageGrid> sources;
  sources.reserve(pairs.size());
  for (const auto& p : pairs) sources.push_back(p.corrupted);
  const auto restored = restore_batch(model, sources, sampling, mc.latent_channels, mc.latent_size, codec);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    e.ssim += ssim(restored[i], pairs[i].clean);
    e.mae += mae_normed(restored[i], pairs[i].clean);
  }
  e.ssim /= static_cast<double>(pairs.size());
  e.mae /= static_cast<double>(pairs.size());
  return e;
}

FitResult fit(const Dataset& dataset, const ModelConfig& model_config, const Codec& codec, const TrainConfig& config,
              const fs::path& out_dir, const FitOptions& options) {
  config.validate();
  if (dataset.train.records.empty()) throw ParameterError("fit: dataset has no TRAIN records");
  if (model_config.variant != config.variant || model_config.p_drop != config.p_drop) {
    throw ContractError("fit: model and train configs disagree on variant or p_drop");
  }
  fs::create_directories(out_dir);

  const std::vector<LoadedPair> train = load_pairs(dataset.root, dataset.train);
  std::vector<LoadedPair> val = load_pairs(dataset.root, dataset.val);
  if (val.size() > static_cast<std::size_t>(config.eval_pairs)) val.resize(static_cast<std::size_t>(config.eval_pairs));

  Backbone model(model_config);
  Trainer trainer(model, codec, config);
  Rng shuffle_rng(derive_seed(config.seed, 0x5f1e));

  std::ofstream log(out_dir / "train_log.jsonl");
  if (!log) throw IoError("cannot write training log in " + out_dir.string());

  FitResult result;
  std::vector<std::size_t> order(train.size());
  bool done = false;
  for (int epoch = 0; epoch < config.epochs && !done; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t begin = 0; begin < order.size() && !done; begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<const LoadedPair*> batch;
      for (std::size_t k = begin; k < end; ++k) batch.push_back(&train[order[k]]);
      const StepResult s = trainer.train_step(std::span<const LoadedPair* const>(batch));
      result.steps.push_back(s);
      log << nlohmann::json{{"step", s.step}, {"epoch", epoch}, {"loss", s.loss}, {"grad_norm", s.grad_norm},
                            {"raw_grad_norm", s.raw_grad_norm}, {"lr", s.lr}}
                 .dump()
          << "\n";
      if (options.on_step) options.on_step(s);
      if (config.eval_every > 0 && !val.empty() && s.step % config.eval_every == 0) {
        EvalRecord e = evaluate_pairs(model, codec, model_config, val, options.eval_sampling);
        e.step = s.step;
        result.evals.push_back(e);
        log << nlohmann::json{{"step", e.step}, {"val_ssim", e.ssim}, {"val_mae", e.mae}}.dump() << "\n";
      }
      if (config.max_steps > 0 && s.step >= config.max_steps) done = true;
    }
  }
  log.flush();
  if (!log) throw IoError("failed writing training log in " + out_dir.string());

  KeyValues meta = config.to_key_values();
  meta["optimizer"] = "adam";
  meta["optimizer_note"] = "adam stands in for came; zero weight decay; no ema";
  meta["steps"] = std::to_string(trainer.steps_taken());
  for (const auto& [k, v] : codec.spec().to_key_values()) meta[k] = v;
  result.checkpoint = out_dir / "checkpoint.fi2i";
  model.save(result.checkpoint, meta);
  return result;
}

}  // namespace flowi2i
