#include "flowi2i/sampler.hpp"

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

void axpy(LatentGrid& x, float a, const LatentGrid& v) {
  auto xs = x.values();
  const auto vs = v.values();
  for (std::size_t i = 0; i < xs.size(); ++i) xs[i] += a * vs[i];
}

// The conditional / unconditional bundles for a given source.
struct Branches {
  ConditioningBundle cond;
  ConditioningBundle uncond;
};

Branches make_branches(Variant variant, const std::optional<LatentGrid>& source) {
  Branches b;
  if (source) b.cond = ConditioningBundle::from_source(*source);
  if (variant == Variant::Primary) {
    if (!source) throw ContractError("PRIMARY sampling requires a source image");
    b.uncond.control = *source;
  }
  return b;
}

}  // namespace

std::string to_string(Solver s) { return s == Solver::Euler ? "euler" : "heun2"; }

Solver parse_solver(std::string_view s) {
  if (s == "euler" || s == "EULER") return Solver::Euler;
  if (s == "heun2" || s == "HEUN2" || s == "heun") return Solver::Heun2;
  throw ConfigError("unknown solver '" + std::string(s) + "' (expected euler or heun2)");
}

void SampleConfig::validate() const {
  if (steps < 1) throw ParameterError("sampling steps must be >= 1");
  if (!(guidance >= 0.0)) throw ParameterError("guidance must be >= 0");
}

LatentGrid cfg_velocity(const LatentGrid& v_cond, const LatentGrid& v_uncond, double guidance) {
  if (!v_cond.same_shape(v_uncond)) throw ShapeError("cfg_velocity: shape mismatch");
  if (guidance == 1.0) return v_cond;
  if (guidance == 0.0) return v_uncond;
  LatentGrid out = v_uncond;
  auto o = out.values();
  const auto c = v_cond.values();
  const auto g = static_cast<float>(guidance);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += g * (c[i] - o[i]);
  return out;
}

LatentGrid sample_latent(const VelocityModel& model, const std::optional<LatentGrid>& source, const SampleConfig& config,
                         int latent_channels, int latent_size) {
  config.validate();
  const Variant variant = model.variant();
  const bool unconditional_only = config.guidance == 0.0;
  if (!source && !unconditional_only) throw ContractError("conditional sampling requires a source image");
  const Branches branches = make_branches(variant, source);

  const bool need_cond = config.guidance != 0.0;
  const bool need_uncond = config.guidance != 1.0 || config.force_two_branch;
  auto field = [&](const LatentGrid& x, double t) {
    const FlowTimestep ts(t);
    if (need_cond && !need_uncond) return model.velocity(x, ts, branches.cond);
    if (!need_cond) return model.velocity(x, ts, branches.uncond);
    return cfg_velocity(model.velocity(x, ts, branches.cond), model.velocity(x, ts, branches.uncond),
                        config.guidance);
  };

  Rng rng(config.seed);
  LatentGrid x = LatentGrid::gaussian(latent_channels, latent_size, latent_size, rng);
  const int n = config.steps;
  for (int k = 0; k < n; ++k) {
    const double t = 1.0 - static_cast<double>(k) / n;
    const double t_next = 1.0 - static_cast<double>(k + 1) / n;
    // t = 1 itself is outside the open time domain; start just inside it.
    const double t_eval = std::min(t, 1.0 - kTimestepFloor);
    const auto dt = static_cast<float>(t_next - t);
    const LatentGrid v = field(x, t_eval);
    if (config.solver == Solver::Heun2 && k + 1 < n) {
      LatentGrid x_pred = x;
      axpy(x_pred, dt, v);
      const LatentGrid v_next = field(x_pred, t_next);
      axpy(x, 0.5f * dt, v);
      axpy(x, 0.5f * dt, v_next);
    } else {
      // Final Heun step lands on t = 0, where the field is not evaluated.
      axpy(x, dt, v);
    }
  }
  return x;
}

ImageGrid sample(const VelocityModel& model, const std::optional<ImageGrid>& source, const SampleConfig& config,
                 int latent_channels, int latent_size, const Codec& codec) {
  std::optional<LatentGrid> latent_source;
  if (source) latent_source = codec.encode(*source);
  return codec.decode(sample_latent(model, latent_source, config, latent_channels, latent_size));
}

std::vector<ImageGrid> restore_batch(const VelocityModel& model, const std::vector<ImageGrid>& sources,
                                     const SampleConfig& config, int latent_channels, int latent_size,
                                     const Codec& codec, std::span<const std::uint64_t> item_seeds) {
  if (sources.empty()) throw ParameterError("restore_batch: empty source list");
  if (!item_seeds.empty() && item_seeds.size() != sources.size()) {
    throw ParameterError("restore_batch: one seed per source required");
  }
  std::vector<ImageGrid> out;
  out.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    SampleConfig item = config;
    item.seed = item_seeds.empty() ? config.seed + i : item_seeds[i];
    out.push_back(sample(model, sources[i], item, latent_channels, latent_size, codec));
  }
  return out;
}

ImageGrid generate(const VelocityModel& model, const SampleConfig& config, int latent_channels, int latent_size,
                   const Codec& codec, bool* expected_degenerate) {
  SampleConfig unconditional = config;
  unconditional.guidance = 0.0;
  std::optional<LatentGrid> source;
  const bool degenerate = model.variant() == Variant::Primary;
  if (degenerate) source = LatentGrid(latent_channels, latent_size, latent_size);
  if (expected_degenerate) *expected_degenerate = degenerate;
  return codec.decode(sample_latent(model, source, unconditional, latent_channels, latent_size));
}

}  // namespace flowi2i
