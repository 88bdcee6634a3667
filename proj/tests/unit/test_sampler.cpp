#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "flowi2i/backbone.hpp"
#include "flowi2i/errors.hpp"
#include "flowi2i/sampler.hpp"
#include "oracles.hpp"

using namespace flowi2i;

namespace {

// v(x, t) = a x + b: closed-form reference for the integrators.
class LinearField final : public VelocityModel {
 public:
  LinearField(float a, float b, Variant v = Variant::Bis) : a_(a), b_(b), variant_(v) {}
  LatentGrid velocity(const LatentGrid& x, FlowTimestep, const ConditioningBundle&) const override {
    LatentGrid out = x;
    for (auto& v : out.values()) v = a_ * v + b_;
    return out;
  }
  Variant variant() const override { return variant_; }

 private:
  float a_, b_;
  Variant variant_;
};

// Conditional branch returns +1, unconditional -1 (BIS and PRIMARY rules).
class BranchField final : public VelocityModel {
 public:
  explicit BranchField(Variant v) : variant_(v) {}
  LatentGrid velocity(const LatentGrid& x, FlowTimestep, const ConditioningBundle& b) const override {
    return LatentGrid(x.channels(), x.height(), x.width(), b.y_is_zero() ? -1.0f : 1.0f);
  }
  Variant variant() const override { return variant_; }

 private:
  Variant variant_;
};

LatentGrid initial_noise(std::uint64_t seed, int c, int s) {
  Rng rng(seed);
  return LatentGrid::gaussian(c, s, s, rng);
}


}  // namespace

TEST_CASE("cfg_velocity algebra") {
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    const LatentGrid v = LatentGrid::gaussian(1, 4, 4, rng);
    const double g = uniform(rng, 0.0, 3.0);
    CHECK(max_abs_difference(cfg_velocity(v, v, g).values(), v.values()) <= 1e-6f);
  }
  const LatentGrid c = LatentGrid::gaussian(1, 4, 4, rng);
  const LatentGrid u = LatentGrid::gaussian(1, 4, 4, rng);
  CHECK(cfg_velocity(c, u, 1.0) == c);
  CHECK(cfg_velocity(c, u, 0.0) == u);
  const LatentGrid mid = cfg_velocity(c, u, 0.5);
  CHECK(mid.values()[3] == doctest::Approx(0.5 * (c.values()[3] + u.values()[3])).epsilon(1e-5));
  CHECK_THROWS_AS(cfg_velocity(c, LatentGrid(1, 2, 2), 1.5), ShapeError);
}

TEST_CASE("constant field is integrated exactly by both solvers") {
  const LinearField field(0.0f, 0.75f);
  for (Solver s : {Solver::Euler, Solver::Heun2}) {
    SampleConfig cfg;
    cfg.steps = 7;
    cfg.solver = s;
    cfg.seed = 3;
    cfg.guidance = 0.0;
    const LatentGrid out = sample_latent(field, std::nullopt, cfg, 1, 4);
    const LatentGrid x1 = initial_noise(3, 1, 4);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.values()[i] == doctest::Approx(x1.values()[i] - 0.75f));
  }
}

TEST_CASE("solver convergence orders on the linear field") {
  // dx/dt = x from t = 1 to 0 gives x(0) = x(1) / e.
  const LinearField field(1.0f, 0.0f);
  const std::vector<int> steps{4, 8, 16, 32, 64};
  const LatentGrid x1 = initial_noise(5, 1, 4);
  for (auto [solver, order] : {std::pair{Solver::Euler, 1.0}, std::pair{Solver::Heun2, 2.0}}) {
    std::vector<double> errors;
    for (int n : steps) {
      SampleConfig cfg;
      cfg.steps = n;
      cfg.solver = solver;
      cfg.seed = 5;
      cfg.guidance = 0.0;
      const LatentGrid out = sample_latent(field, std::nullopt, cfg, 1, 4);
      double err = 0.0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        err = std::max(err, std::fabs(out.values()[i] - x1.values()[i] / std::exp(1.0)));
      }
      errors.push_back(err);
    }
    CHECK(std::fabs(oracle::convergence_slope(steps, errors) - order) <= 0.3);
  }
}

TEST_CASE("branch selection per variant and guidance") {
  const LatentGrid src(1, 4, 4, 0.0f);
  for (Variant v : {Variant::Primary, Variant::Bis}) {
    const BranchField field(v);
    SampleConfig cfg;
    cfg.steps = 4;
    cfg.seed = 9;
    const LatentGrid x1 = initial_noise(9, 1, 4);
    for (double g : {0.0, 1.0, 1.5}) {
      cfg.guidance = g;
      const LatentGrid out = sample_latent(field, src, cfg, 1, 4);
      // Velocity is -1 + 2g everywhere; integrating over dt = -1.
      const float expected = x1.values()[0] - static_cast<float>(-1.0 + 2.0 * g);
      CHECK(out.values()[0] == doctest::Approx(expected).epsilon(1e-5));
    }
  }
  SampleConfig cfg;
  CHECK_THROWS_AS(sample_latent(BranchField(Variant::Bis), std::nullopt, cfg, 1, 4), ContractError);
}

TEST_CASE("guidance one fast path is bit-equal to the two-branch path") {
  ModelConfig mc;
  mc.latent_size = 8;
  mc.patch_size = 2;
  mc.hidden_dim = 16;
  mc.depth = 2;
  mc.heads = 2;
  mc.control_depth = 1;
  Backbone model(mc);
  Rng rng(11);
  for (Parameter* p : model.parameters()) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) p->value.data()[i] = 0.2f * static_cast<float>(standard_normal(rng));
  }
  const LatentGrid src = LatentGrid::gaussian(1, 8, 8, rng);
  SampleConfig fast;
  fast.steps = 5;
  fast.guidance = 1.0;
  SampleConfig both = fast;
  both.force_two_branch = true;
  for (Solver s : {Solver::Euler, Solver::Heun2}) {
    fast.solver = both.solver = s;
    CHECK(sample_latent(model, src, fast, 1, 8) == sample_latent(model, src, both, 1, 8));
  }
}

TEST_CASE("restore_batch is deterministic and order preserving") {
  const LinearField field(-0.5f, 0.1f, Variant::Primary);
  const Codec codec;
  std::vector<ImageGrid> sources;
  for (int i = 0; i < 4; ++i) sources.emplace_back(8, 8, kSignedRange, 0.1f * static_cast<float>(i));
  SampleConfig cfg;
  cfg.seed = 21;
  const auto a = restore_batch(field, sources, cfg, 1, 8, codec);
  const auto b = restore_batch(field, sources, cfg, 1, 8, codec);
  CHECK(a == b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    SampleConfig one = cfg;
    one.seed = cfg.seed + i;
    CHECK(a[i] == sample(field, sources[i], one, 1, 8, codec));
  }
  // Permuting inputs together with their seeds permutes the outputs.
  std::vector<std::uint64_t> seeds{21, 22, 23, 24};
  std::vector<std::size_t> perm{2, 0, 3, 1};
  std::vector<ImageGrid> permuted;
  std::vector<std::uint64_t> permuted_seeds;
  for (auto k : perm) {
    permuted.push_back(sources[k]);
    permuted_seeds.push_back(seeds[k]);
  }
  const auto c = restore_batch(field, permuted, cfg, 1, 8, codec, permuted_seeds);
  for (std::size_t i = 0; i < perm.size(); ++i) CHECK(c[i] == a[perm[i]]);
  CHECK_THROWS_AS(restore_batch(field, {}, cfg, 1, 8, codec), ParameterError);
}

TEST_CASE("unconditional generation flags PRIMARY as degenerate") {
  const Codec codec;
  SampleConfig cfg;
  cfg.steps = 3;
  bool degenerate = false;
  generate(BranchField(Variant::Primary), cfg, 1, 4, codec, &degenerate);
  CHECK(degenerate);
  const ImageGrid img = generate(BranchField(Variant::Bis), cfg, 1, 4, codec, &degenerate);
  CHECK_FALSE(degenerate);
  CHECK(img.height() == 4);
}

TEST_CASE("sample config validation") {
  SampleConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg.steps = 5;
  cfg.guidance = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  CHECK(parse_solver("heun2") == Solver::Heun2);
  CHECK_THROWS_AS(parse_solver("rk4"), ConfigError);
}
