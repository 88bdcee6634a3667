#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowi2i/keyvalue.hpp"
#include "flowi2i/model.hpp"
#include "flowi2i/tape.hpp"

namespace flowi2i {

struct ModelConfig {
  int latent_channels = 1;
  int latent_size = 128;
  int patch_size = 8;
  int hidden_dim = 64;
  int depth = 4;
  int heads = 4;
  int control_depth = 2;
  int mlp_ratio = 4;
  Variant variant = Variant::Primary;
  double p_drop = 0.1;
  std::uint64_t init_seed = 1;

  void validate() const;
  int grid_size() const { return latent_size / patch_size; }
  int token_count() const { return grid_size() * grid_size(); }
  int patch_dim() const { return patch_size * patch_size * latent_channels; }

  KeyValues to_key_values() const;
  /// Reads the model.* keys; other keys are ignored.
  static ModelConfig from_key_values(const KeyValues& kv);
};

/// C x S x S latent -> (S/p)^2 x (p*p*C) token matrix, token-major in raster
/// order; feature index is (c * p + py) * p + px.
Matrix patchify(const LatentGrid& grid, int patch_size);
LatentGrid unpatchify(const Matrix& tokens, int channels, int size, int patch_size);

/// Fixed 2-D sine/cosine positions, (grid*grid) x dim.
Matrix sincos_positions(int grid, int dim);
/// Sinusoidal frequency features of t (scaled by 1000), 1 x dim, [cos | sin].
Eigen::RowVectorXf timestep_frequencies(double t, int dim);

// Diffusion-transformer velocity network.
//
// Noisy latent, y and control all go through one shared patch projection.
// y tokens are read through cross-attention in every block. The first
// control_depth blocks are duplicated into a control branch whose hidden
// states are added back after each backbone block through zero-initialized
// projections. An ABSENT control skips the branch.
class Backbone final : public VelocityModel {
 public:
  explicit Backbone(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const override { return config_.variant; }

  LatentGrid velocity(const LatentGrid& x_t, FlowTimestep t, const ConditioningBundle& bundle) const override;
  LatentGrid forward(const LatentGrid& x_t, FlowTimestep t, const ConditioningBundle& bundle) const {
    return velocity(x_t, t, bundle);
  }

  /// Records the forward graph; returns the token-space output
  /// (token_count x patch_dim). Use unpatchify to recover the latent.
  Var build(Tape& tape, const LatentGrid& x_t, FlowTimestep t, const ConditioningBundle& bundle);

  /// Shared patch projection without positions; token_count x hidden_dim.
  Matrix patch_embed(const LatentGrid& grid) const;
  /// 1 x hidden_dim.
  Eigen::RowVectorXf time_embed(FlowTimestep t) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  std::size_t parameter_count() const;
  void zero_grad();

  /// Metadata entries are stored under "meta.<key>"; entries given here
  /// override those carried over from a loaded checkpoint.
  void save(const std::filesystem::path& path, const KeyValues& metadata = {}) const;
  static Backbone load(const std::filesystem::path& path);
  const KeyValues& metadata() const noexcept { return metadata_; }

 private:
  struct Linear {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;
  };
  struct Block {
    Linear qkv, attn_out, cross_q, cross_kv, cross_out, mlp_in, mlp_out;
    Parameter* modulation = nullptr;  // 1 x 6H table added to the shared time modulation
  };

  Parameter* add_param(std::string name, Matrix value);
  Linear add_linear(const std::string& name, int in, int out, Rng& rng, bool zero = false);
  Block add_block(const std::string& prefix, Rng& rng);
  Block copy_block(const std::string& prefix, const Block& source);
  void check_inputs(const LatentGrid& x_t, const ConditioningBundle& bundle) const;

  Var apply_linear(Tape& tape, Var x, const Linear& l);
  Var embed(Tape& tape, const LatentGrid& grid, Var positions);
  Var run_block(Tape& tape, const Block& b, Var h, Var y_tokens, Var time_mod);

  ModelConfig config_;
  KeyValues metadata_;
  std::vector<std::unique_ptr<Parameter>> params_;
  Matrix positions_;

  Linear patch_proj_;
  Linear time_fc1_, time_fc2_, time_mod_, final_mod_, final_out_;
  std::vector<Block> blocks_;
  std::vector<Block> control_blocks_;
  Linear control_in_;
  std::vector<Linear> control_out_;
};

}  // namespace flowi2i
