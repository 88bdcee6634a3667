#include <doctest.h>

#include <cmath>

#include "flowi2i/errors.hpp"
#include "flowi2i/flow.hpp"
#include "oracles.hpp"

using namespace flowi2i;

namespace {

LatentGrid random_grid(int c, int s, std::uint64_t seed) {
  Rng rng(seed);
  return LatentGrid::gaussian(c, s, s, rng);
}

}  // namespace

TEST_CASE("timestep domain is the open unit interval") {
  CHECK_THROWS_AS(FlowTimestep(0.0), ParameterError);
  CHECK_THROWS_AS(FlowTimestep(1.0), ParameterError);
  CHECK_THROWS_AS(FlowTimestep(-0.1), ParameterError);
  CHECK(FlowTimestep(0.5).value() == 0.5);
}

TEST_CASE("interpolation hits both endpoints") {
  const LatentGrid x = random_grid(2, 8, 1);
  const LatentGrid e = random_grid(2, 8, 2);
  const LatentGrid at0 = interpolate(x, e, 0.0);
  const LatentGrid at1 = interpolate(x, e, 1.0);
  CHECK(max_abs_difference(at0.values(), x.values()) <= 1e-7f);
  CHECK(max_abs_difference(at1.values(), e.values()) <= 1e-7f);
}

TEST_CASE("target velocity is the time derivative of the path") {
  const LatentGrid x = random_grid(1, 16, 3);
  const LatentGrid e = random_grid(1, 16, 4);
  const LatentGrid u = target_velocity(x, e);
  for (double t : {0.1, 0.37, 0.5, 0.9}) {
    const double h = 1e-3;
    const LatentGrid a = interpolate(x, e, t + h);
    const LatentGrid b = interpolate(x, e, t - h);
    float worst = 0.0f;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double fd = (static_cast<double>(a.values()[i]) - b.values()[i]) / (2 * h);
      worst = std::max(worst, static_cast<float>(std::fabs(fd - u.values()[i])));
    }
    CHECK(worst <= 1e-3f);
  }
}

TEST_CASE("fm_loss equals the brute-force mean squared error") {
  const LatentGrid a = random_grid(3, 12, 5);
  const LatentGrid b = random_grid(3, 12, 6);
  CHECK(fm_loss(a, b) == doctest::Approx(oracle::mse(a, b)).epsilon(1e-12));
  CHECK(fm_loss(a, a) == 0.0);
  CHECK_THROWS_AS(fm_loss(a, random_grid(3, 8, 7)), ShapeError);
}

TEST_CASE("make_flow_sample is consistent with interpolate and target_velocity") {
  const LatentGrid x = random_grid(1, 8, 8);
  const LatentGrid e = random_grid(1, 8, 9);
  const FlowSample s = make_flow_sample(x, e, FlowTimestep(0.3));
  CHECK(s.x_t == interpolate(x, e, 0.3));
  CHECK(s.target_v == target_velocity(x, e));
}

TEST_CASE("logit-normal timesteps stay in range and centre on one half") {
  Rng rng(11);
  const auto ts = sample_timesteps(20000, {}, rng);
  double mean = 0.0;
  for (const auto& t : ts) {
    CHECK(t.value() >= kTimestepFloor);
    CHECK(t.value() <= 1.0 - kTimestepFloor);
    mean += t.value();
  }
  mean /= static_cast<double>(ts.size());
  // logistic(N(0,1)) is symmetric about 1/2.
  CHECK(mean == doctest::Approx(0.5).epsilon(0.01));
  CHECK(logit_normal_time(0.0, {}).value() == doctest::Approx(0.5));
  CHECK(logit_normal_time(50.0, {}).value() == doctest::Approx(1.0 - kTimestepFloor));
}
