#include "flowi2i/flow.hpp"

#include <algorithm>
#include <cmath>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

void require_same_shape(const LatentGrid& a, const LatentGrid& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
  }
}

}  // namespace

FlowTimestep::FlowTimestep(double t) : t_(t) {
  if (!(t > 0.0 && t < 1.0)) throw ParameterError("flow timestep must lie in (0, 1)");
}

FlowTimestep logit_normal_time(double z, const LogitNormal& dist) {
  const double t = 1.0 / (1.0 + std::exp(-(dist.mean + dist.std * z)));
  return FlowTimestep(std::clamp(t, kTimestepFloor, 1.0 - kTimestepFloor));
}

std::vector<FlowTimestep> sample_timesteps(int count, const LogitNormal& dist, Rng& rng) {
  if (count < 1) throw ParameterError("sample_timesteps: count must be >= 1");
  if (!(dist.std > 0.0)) throw ParameterError("sample_timesteps: std must be positive");
  std::vector<FlowTimestep> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(logit_normal_time(standard_normal(rng), dist));
  return out;
}

LatentGrid interpolate(const LatentGrid& x_data, const LatentGrid& noise, double t) {
  require_same_shape(x_data, noise, "interpolate");
  LatentGrid out(x_data.channels(), x_data.height(), x_data.width());
  const auto x = x_data.values();
  const auto e = noise.values();
  auto o = out.values();
  const float a = static_cast<float>(1.0 - t);
  const float b = static_cast<float>(t);
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a * x[i] + b * e[i];
  return out;
}

LatentGrid target_velocity(const LatentGrid& x_data, const LatentGrid& noise) {
  require_same_shape(x_data, noise, "target_velocity");
  LatentGrid out(x_data.channels(), x_data.height(), x_data.width());
  const auto x = x_data.values();
  const auto e = noise.values();
  auto o = out.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = e[i] - x[i];
  return out;
}

double fm_loss(const LatentGrid& predicted_v, const LatentGrid& target_v) {
  require_same_shape(predicted_v, target_v, "fm_loss");
  const auto p = predicted_v.values();
  const auto q = target_v.values();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - q[i];
    acc += d * d;
  }
  return acc / static_cast<double>(p.size());
}

FlowSample make_flow_sample(const LatentGrid& x_data, const LatentGrid& noise, FlowTimestep t) {
  return FlowSample{interpolate(x_data, noise, t), t, target_velocity(x_data, noise)};
}

}  // namespace flowi2i
