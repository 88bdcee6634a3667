#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowi2i/codec.hpp"
#include "flowi2i/model.hpp"

namespace flowi2i {

enum class Solver { Euler, Heun2 };

std::string to_string(Solver s);
Solver parse_solver(std::string_view s);

struct SampleConfig {
  int steps = 5;
  double guidance = 1.0;
  Solver solver = Solver::Euler;
  std::uint64_t seed = 1;
  /// Evaluate the unconditional branch even when guidance == 1.
  bool force_two_branch = false;

  void validate() const;
};

/// v_uncond + g (v_cond - v_uncond); g == 1 and g == 0 return the matching
/// branch exactly.
LatentGrid cfg_velocity(const LatentGrid& v_cond, const LatentGrid& v_uncond, double guidance);

/// Integrates dx/dt = v from t = 1 (noise) to t = 0 over a uniform grid.
/// `source` is the encoded conditioning latent; nullopt means no source
/// (allowed for BIS only).
LatentGrid sample_latent(const VelocityModel& model, const std::optional<LatentGrid>& source, const SampleConfig& config,
                         int latent_channels, int latent_size);

/// Source image -> restored image (decoded, in [-1, 1]).
ImageGrid sample(const VelocityModel& model, const std::optional<ImageGrid>& source, const SampleConfig& config,
                 int latent_channels, int latent_size, const Codec& codec);

/// Per-item sampling with seeds config.seed + index, or with `item_seeds`
/// when given (one per source). Order preserving.
std::vector<ImageGrid> restore_batch(const VelocityModel& model, const std::vector<ImageGrid>& sources,
                                     const SampleConfig& config, int latent_channels, int latent_size,
                                     const Codec& codec, std::span<const std::uint64_t> item_seeds = {});

/// Unconditional generation (guidance 0). BIS runs with control ABSENT.
/// PRIMARY cannot drop control, so it is fed an all-zero control latent;
/// `expected_degenerate` is set in that case.
ImageGrid generate(const VelocityModel& model, const SampleConfig& config, int latent_channels, int latent_size,
                   const Codec& codec, bool* expected_degenerate = nullptr);

}  // namespace flowi2i
