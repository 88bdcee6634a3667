#pragma once

#include <vector>

#include "flowi2i/grid.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i {

// Linear flow path convention: t = 0 is data, t = 1 is noise.
//   x_t = (1 - t) x + t eps,   u = eps - x.

inline constexpr double kTimestepFloor = 1e-5;

/// A time on the open interval (0, 1).
class FlowTimestep {
 public:
  explicit FlowTimestep(double t);
  double value() const noexcept { return t_; }
  operator double() const noexcept { return t_; }

 private:
  double t_;
};

struct LogitNormal {
  double mean = 0.0;
  double std = 1.0;
};

/// t = logistic(z), z ~ Normal(mean, std^2), clamped to [1e-5, 1 - 1e-5].
std::vector<FlowTimestep> sample_timesteps(int count, const LogitNormal& dist, Rng& rng);

/// Time sampled from an already drawn standard normal z.
FlowTimestep logit_normal_time(double z, const LogitNormal& dist);

LatentGrid interpolate(const LatentGrid& x_data, const LatentGrid& noise, double t);
LatentGrid target_velocity(const LatentGrid& x_data, const LatentGrid& noise);
double fm_loss(const LatentGrid& predicted_v, const LatentGrid& target_v);

struct FlowSample {
  LatentGrid x_t;
  FlowTimestep t;
  LatentGrid target_v;
};

FlowSample make_flow_sample(const LatentGrid& x_data, const LatentGrid& noise, FlowTimestep t);

}  // namespace flowi2i
