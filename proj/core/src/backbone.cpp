#include "flowi2i/backbone.hpp"

#include <cmath>
#include <numbers>

#include "flowi2i/archive.hpp"
#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

constexpr int kFrequencyDim = 256;

Matrix xavier_uniform(int in, int out, Rng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(in + out));
  std::uniform_real_distribution<float> dist(-bound, bound);
  Matrix m(in, out);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix normal_matrix(int rows, int cols, float std, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, std);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace

std::string to_string(Variant v) { return v == Variant::Primary ? "primary" : "bis"; }

Variant parse_variant(std::string_view s) {
  if (s == "primary" || s == "PRIMARY") return Variant::Primary;
  if (s == "bis" || s == "BIS") return Variant::Bis;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected primary or bis)");
}

ConditioningBundle apply_condition_drop(const ConditioningBundle& bundle, double p_drop, Variant variant, Rng& rng,
                                        bool* dropped) {
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ParameterError("p_drop must lie in [0, 1]");
  if (variant == Variant::Primary && bundle.control_absent()) {
    throw ContractError("PRIMARY variant requires a control signal");
  }
  const bool drop = std::bernoulli_distribution(p_drop)(rng);
  if (dropped) *dropped = drop;
  if (!drop) return bundle;
  ConditioningBundle out = bundle;
  out.y.reset();
  if (variant == Variant::Bis) out.control.reset();
  return out;
}

// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (latent_channels <= 0 || latent_size <= 0 || patch_size <= 0 || hidden_dim <= 0 || depth <= 0 ||
      heads <= 0 || control_depth <= 0 || mlp_ratio <= 0) {
    throw ParameterError("model config: all sizes must be positive");
  }
  if (latent_size % patch_size != 0) throw ParameterError("model config: patch_size must divide latent_size");
  if (hidden_dim % heads != 0) throw ParameterError("model config: heads must divide hidden_dim");
  if (hidden_dim % 4 != 0) throw ParameterError("model config: hidden_dim must be a multiple of 4");
  if (control_depth > depth) throw ParameterError("model config: control_depth must not exceed depth");
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) throw ParameterError("model config: p_drop must lie in [0, 1]");
}

KeyValues ModelConfig::to_key_values() const {
  return {
      {"model.latent_channels", std::to_string(latent_channels)},
      {"model.latent_size", std::to_string(latent_size)},
      {"model.patch_size", std::to_string(patch_size)},
      {"model.hidden_dim", std::to_string(hidden_dim)},
      {"model.depth", std::to_string(depth)},
      {"model.heads", std::to_string(heads)},
      {"model.control_depth", std::to_string(control_depth)},
      {"model.mlp_ratio", std::to_string(mlp_ratio)},
      {"model.variant", to_string(variant)},
      {"model.p_drop", format_double(p_drop)},
      {"model.init_seed", std::to_string(init_seed)},
  };
}

ModelConfig ModelConfig::from_key_values(const KeyValues& kv) {
  ModelConfig c;
  c.latent_channels = kv_int(kv, "model.latent_channels");
  c.latent_size = kv_int(kv, "model.latent_size");
  c.patch_size = kv_int(kv, "model.patch_size");
  c.hidden_dim = kv_int(kv, "model.hidden_dim");
  c.depth = kv_int(kv, "model.depth");
  c.heads = kv_int(kv, "model.heads");
  c.control_depth = kv_int(kv, "model.control_depth");
  c.mlp_ratio = kv_int(kv, "model.mlp_ratio");
  c.variant = parse_variant(kv_string(kv, "model.variant"));
  c.p_drop = kv_double(kv, "model.p_drop");
  c.init_seed = kv_u64(kv, "model.init_seed");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

Matrix patchify(const LatentGrid& grid, int p) {
  if (grid.height() != grid.width() || grid.height() % p != 0) {
    throw ShapeError("patchify: grid " + grid.shape_string() + " not divisible into " + std::to_string(p) + "-patches");
  }
  const int g = grid.height() / p;
  const int c = grid.channels();
  Matrix tokens(g * g, p * p * c);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      float* row = tokens.row(gy * g + gx).data();
      for (int ch = 0; ch < c; ++ch) {
        for (int py = 0; py < p; ++py) {
          for (int px = 0; px < p; ++px) row[(ch * p + py) * p + px] = grid.at(ch, gy * p + py, gx * p + px);
        }
      }
    }
  }
  return tokens;
}

LatentGrid unpatchify(const Matrix& tokens, int channels, int size, int p) {
  const int g = size / p;
  if (tokens.rows() != g * g || tokens.cols() != p * p * channels) throw ShapeError("unpatchify: token shape mismatch");
  LatentGrid grid(channels, size, size);
  for (int gy = 0; gy < g; ++gy) {
    for (int gx = 0; gx < g; ++gx) {
      const float* row = tokens.row(gy * g + gx).data();
      for (int ch = 0; ch < channels; ++ch) {
        for (int py = 0; py < p; ++py) {
          for (int px = 0; px < p; ++px) grid.at(ch, gy * p + py, gx * p + px) = row[(ch * p + py) * p + px];
        }
      }
    }
  }
  return grid;
}

Matrix sincos_positions(int grid, int dim) {
  // Half the channels encode the row, half the column; each half is [sin | cos].
  const int quarter = dim / 4;
  Matrix pos(grid * grid, dim);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      auto row = pos.row(gy * grid + gx);
      for (int i = 0; i < quarter; ++i) {
        const double omega = std::pow(10000.0, -static_cast<double>(i) / quarter);
        row(i) = static_cast<float>(std::sin(gy * omega));
        row(quarter + i) = static_cast<float>(std::cos(gy * omega));
        row(2 * quarter + i) = static_cast<float>(std::sin(gx * omega));
        row(3 * quarter + i) = static_cast<float>(std::cos(gx * omega));
      }
    }
  }
  return pos;
}

Eigen::RowVectorXf timestep_frequencies(double t, int dim) {
  const int half = dim / 2;
  Eigen::RowVectorXf out(dim);
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    const double arg = 1000.0 * t * freq;
    out(i) = static_cast<float>(std::cos(arg));
    out(half + i) = static_cast<float>(std::sin(arg));
  }
  return out;
}

// ---------------------------------------------------------------------------

Parameter* Backbone::add_param(std::string name, Matrix value) {
  params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(value)));
  return params_.back().get();
}

Backbone::Linear Backbone::add_linear(const std::string& name, int in, int out, Rng& rng, bool zero) {
  Linear l;
  l.weight = add_param(name + ".weight", zero ? Matrix::Zero(in, out) : xavier_uniform(in, out, rng));
  l.bias = add_param(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Backbone::Block Backbone::add_block(const std::string& prefix, Rng& rng) {
  const int h = config_.hidden_dim;
  Block b;
  b.qkv = add_linear(prefix + ".attn.qkv", h, 3 * h, rng);
  b.attn_out = add_linear(prefix + ".attn.out", h, h, rng);
  b.cross_q = add_linear(prefix + ".cross.q", h, h, rng);
  b.cross_kv = add_linear(prefix + ".cross.kv", h, 2 * h, rng);
  b.cross_out = add_linear(prefix + ".cross.out", h, h, rng, /*zero=*/true);
  b.mlp_in = add_linear(prefix + ".mlp.in", h, config_.mlp_ratio * h, rng);
  b.mlp_out = add_linear(prefix + ".mlp.out", config_.mlp_ratio * h, h, rng);
  b.modulation = add_param(prefix + ".modulation", normal_matrix(1, 6 * h, 1.0f / std::sqrt(static_cast<float>(h)), rng));
  return b;
}

Backbone::Block Backbone::copy_block(const std::string& prefix, const Block& src) {
  auto copy = [&](const std::string& name, const Linear& l) {
    Linear out;
    out.weight = add_param(prefix + name + ".weight", l.weight->value);
    out.bias = add_param(prefix + name + ".bias", l.bias->value);
    return out;
  };
  Block b;
  b.qkv = copy(".attn.qkv", src.qkv);
  b.attn_out = copy(".attn.out", src.attn_out);
  b.cross_q = copy(".cross.q", src.cross_q);
  b.cross_kv = copy(".cross.kv", src.cross_kv);
  b.cross_out = copy(".cross.out", src.cross_out);
  b.mlp_in = copy(".mlp.in", src.mlp_in);
  b.mlp_out = copy(".mlp.out", src.mlp_out);
  b.modulation = add_param(prefix + ".modulation", src.modulation->value);
  return b;
}

Backbone::Backbone(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(config_.init_seed);
  const int h = config_.hidden_dim;

  patch_proj_ = add_linear("patch_embed", config_.patch_dim(), h, rng);
  positions_ = sincos_positions(config_.grid_size(), h);

  time_fc1_.weight = add_param("time.fc1.weight", normal_matrix(kFrequencyDim, h, 0.02f, rng));
  time_fc1_.bias = add_param("time.fc1.bias", Matrix::Zero(1, h));
  time_fc2_.weight = add_param("time.fc2.weight", normal_matrix(h, h, 0.02f, rng));
  time_fc2_.bias = add_param("time.fc2.bias", Matrix::Zero(1, h));
  time_mod_.weight = add_param("time.modulation.weight", normal_matrix(h, 6 * h, 0.02f, rng));
  time_mod_.bias = add_param("time.modulation.bias", Matrix::Zero(1, 6 * h));

  for (int i = 0; i < config_.depth; ++i) blocks_.push_back(add_block("blocks." + std::to_string(i), rng));

  control_in_ = add_linear("control.in", h, h, rng);
  for (int i = 0; i < config_.control_depth; ++i) {
    control_blocks_.push_back(copy_block("control.blocks." + std::to_string(i), blocks_[i]));
    control_out_.push_back(add_linear("control.out." + std::to_string(i), h, h, rng, /*zero=*/true));
  }

  final_mod_ = add_linear("final.modulation", h, 2 * h, rng, /*zero=*/true);
  final_out_ = add_linear("final.out", h, config_.patch_dim(), rng, /*zero=*/true);
}

std::vector<Parameter*> Backbone::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Backbone::parameters() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

Parameter& Backbone::parameter(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  throw ParameterError("no parameter named '" + std::string(name) + "'");
}

const Parameter& Backbone::parameter(std::string_view name) const {
  return const_cast<Backbone*>(this)->parameter(name);
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p->value.size());
  return n;
}

void Backbone::zero_grad() {
  for (auto& p : params_) p->zero_grad();
}

// ---------------------------------------------------------------------------

void Backbone::check_inputs(const LatentGrid& x_t, const ConditioningBundle& bundle) const {
  const auto expect = [&](const LatentGrid& g, const char* what) {
    if (g.channels() != config_.latent_channels || g.height() != config_.latent_size ||
        g.width() != config_.latent_size) {
      throw ShapeError(std::string(what) + " shape " + g.shape_string() + " does not match model latent " +
                       std::to_string(config_.latent_channels) + "x" + std::to_string(config_.latent_size) + "x" +
                       std::to_string(config_.latent_size));
    }
  };
  expect(x_t, "x_t");
  if (bundle.y) expect(*bundle.y, "y");
  if (bundle.control) expect(*bundle.control, "control");
  if (config_.variant == Variant::Primary && bundle.control_absent()) {
    throw ContractError("PRIMARY variant requires a control signal");
  }
}

Var Backbone::apply_linear(Tape& tape, Var x, const Linear& l) {
  return tape.linear(x, tape.param(*l.weight), tape.param(*l.bias));
}

Var Backbone::embed(Tape& tape, const LatentGrid& grid, Var positions) {
  Var patches = tape.input(patchify(grid, config_.patch_size));
  return tape.add(apply_linear(tape, patches, patch_proj_), positions);
}

Var Backbone::run_block(Tape& tape, const Block& b, Var h, Var y_tokens, Var time_mod) {
  const int d = config_.hidden_dim;
  Var mod = tape.add(time_mod, tape.param(*b.modulation));
  Var shift_msa = tape.columns(mod, 0, d);
  Var scale_msa = tape.columns(mod, d, d);
  Var gate_msa = tape.columns(mod, 2 * d, d);
  Var shift_mlp = tape.columns(mod, 3 * d, d);
  Var scale_mlp = tape.columns(mod, 4 * d, d);
  Var gate_mlp = tape.columns(mod, 5 * d, d);

  Var a = tape.modulate(tape.layer_norm(h), shift_msa, scale_msa);
  Var qkv = apply_linear(tape, a, b.qkv);
  a = tape.attention(tape.columns(qkv, 0, d), tape.columns(qkv, d, d), tape.columns(qkv, 2 * d, d), config_.heads);
  h = tape.gated_residual(h, gate_msa, apply_linear(tape, a, b.attn_out));

  // y takes the place the caption tokens had: keys and values of cross-attention.
  Var q = apply_linear(tape, h, b.cross_q);
  Var kv = apply_linear(tape, y_tokens, b.cross_kv);
  Var c = tape.attention(q, tape.columns(kv, 0, d), tape.columns(kv, d, d), config_.heads);
  h = tape.add(h, apply_linear(tape, c, b.cross_out));

  Var m = tape.modulate(tape.layer_norm(h), shift_mlp, scale_mlp);
  m = apply_linear(tape, tape.gelu(apply_linear(tape, m, b.mlp_in)), b.mlp_out);
  return tape.gated_residual(h, gate_mlp, m);
}

Var Backbone::build(Tape& tape, const LatentGrid& x_t, FlowTimestep t, const ConditioningBundle& bundle) {
  check_inputs(x_t, bundle);
  const int d = config_.hidden_dim;

  Var positions = tape.input(positions_);
  Var h = embed(tape, x_t, positions);
  Var y_tokens = bundle.y ? embed(tape, *bundle.y, positions)
                          : embed(tape, LatentGrid(config_.latent_channels, config_.latent_size, config_.latent_size),
                                  positions);

  Var freq = tape.input(timestep_frequencies(t.value(), kFrequencyDim));
  Var temb = apply_linear(tape, tape.silu(apply_linear(tape, freq, time_fc1_)), time_fc2_);
  Var time_act = tape.silu(temb);
  Var time_mod = apply_linear(tape, time_act, time_mod_);

  Var c;
  if (bundle.control) {
    Var control_tokens = embed(tape, *bundle.control, positions);
    c = tape.add(h, apply_linear(tape, control_tokens, control_in_));
  }

  for (int i = 0; i < config_.depth; ++i) {
    h = run_block(tape, blocks_[i], h, y_tokens, time_mod);
    if (c.valid() && i < config_.control_depth) {
      c = run_block(tape, control_blocks_[i], c, y_tokens, time_mod);
      h = tape.add(h, apply_linear(tape, c, control_out_[i]));
    }
  }

  Var fmod = apply_linear(tape, time_act, final_mod_);
  Var out = tape.modulate(tape.layer_norm(h), tape.columns(fmod, 0, d), tape.columns(fmod, d, d));
  return apply_linear(tape, out, final_out_);
}

LatentGrid Backbone::velocity(const LatentGrid& x_t, FlowTimestep t, const ConditioningBundle& bundle) const {
  Tape tape(/*track=*/false);
  // Non-tracking tapes never write to parameters.
  Var out = const_cast<Backbone*>(this)->build(tape, x_t, t, bundle);
  return unpatchify(tape.value(out), config_.latent_channels, config_.latent_size, config_.patch_size);
}

Matrix Backbone::patch_embed(const LatentGrid& grid) const {
  if (grid.channels() != config_.latent_channels || grid.height() != config_.latent_size ||
      grid.width() != config_.latent_size) {
    throw ShapeError("patch_embed: grid " + grid.shape_string() + " does not match model config");
  }
  Matrix tokens = patchify(grid, config_.patch_size) * patch_proj_.weight->value;
  tokens.rowwise() += patch_proj_.bias->value.row(0);
  return tokens;
}

Eigen::RowVectorXf Backbone::time_embed(FlowTimestep t) const {
  Tape tape(false);
  auto* self = const_cast<Backbone*>(this);
  Var freq = tape.input(timestep_frequencies(t.value(), kFrequencyDim));
  Var temb = self->apply_linear(tape, tape.silu(self->apply_linear(tape, freq, time_fc1_)), time_fc2_);
  return tape.value(temb).row(0);
}

// ---------------------------------------------------------------------------

void Backbone::save(const std::filesystem::path& path, const KeyValues& metadata) const {
  KeyValues kv = config_.to_key_values();
  kv["format"] = "flowi2i.backbone";
  for (const auto& [k, v] : metadata_) kv["meta." + k] = v;
  for (const auto& [k, v] : metadata) kv["meta." + k] = v;
  Archive archive;
  archive.config_text = format_key_values(kv);
  for (const auto& p : params_) archive.arrays.emplace_back(p->name, p->value);
  write_archive(path, archive);
}

Backbone Backbone::load(const std::filesystem::path& path) {
  Archive archive = read_archive(path);
  const KeyValues kv = parse_key_values(archive.config_text);
  if (kv_string(kv, "format") != "flowi2i.backbone") throw IoError(path.string() + " is not a backbone checkpoint");
  Backbone model(ModelConfig::from_key_values(kv));
  for (const auto& [k, v] : kv) {
    if (k.starts_with("meta.")) model.metadata_.emplace(k.substr(5), v);
  }
  if (archive.arrays.size() != model.params_.size()) {
    throw IoError("checkpoint parameter count does not match its config");
  }
  for (std::size_t i = 0; i < archive.arrays.size(); ++i) {
    auto& [name, value] = archive.arrays[i];
    Parameter& p = *model.params_[i];
    if (name != p.name || value.rows() != p.value.rows() || value.cols() != p.value.cols()) {
      throw IoError("checkpoint array '" + name + "' does not match config (expected '" + p.name + "')");
    }
    p.value = std::move(value);
    p.zero_grad();
  }
  return model;
}

}  // namespace flowi2i
