#include <doctest.h>

#include "flowi2i/errors.hpp"
#include "flowi2i/run_config.hpp"

using namespace flowi2i;

TEST_CASE("defaults carry the documented values") {
  const RunConfig c = RunConfig::parse("");
  CHECK(c.train.seed == 1);
  CHECK(c.train.lr == 1e-4);
  CHECK(c.train.warmup_steps == 30);
  CHECK(c.train.grad_clip_norm == 0.1);
  CHECK(c.train.batch_size == 16);
  CHECK(c.train.epochs == 100);
  CHECK(c.sample.steps == 5);
  CHECK(c.sample.guidance == 1.0);
  CHECK(c.gate.s0 == 0.6);
  CHECK(c.gate.s1 == 0.9);
  CHECK(c.ablate.steps == std::vector<int>{2, 5, 10, 20, 40});
  CHECK(c.ablate.guidance.size() == 10);
  CHECK(c.preprocess.interpolation == Interpolation::Bilinear);
}

TEST_CASE("overrides, echo and re-parse agree") {
  const RunConfig c = RunConfig::parse(
      "schema_version = 1\nmodel.variant = bis\nmodel.p_drop = 0.2\nsample.solver = heun2\n"
      "ablate.steps = 3, 6\ngate.s0 = 0.95\ngate.s1 = 0.99\n");
  CHECK(c.model.variant == Variant::Bis);
  CHECK(c.train.variant == Variant::Bis);
  CHECK(c.train.p_drop == 0.2);
  CHECK(c.sample.solver == Solver::Heun2);
  CHECK(c.ablate.steps == std::vector<int>{3, 6});
  const RunConfig again = RunConfig::parse(c.to_text());
  CHECK(again.to_text() == c.to_text());
}

TEST_CASE("bad configs are config errors") {
  CHECK_THROWS_AS(RunConfig::parse("model.nonexistent = 3\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("schema_version = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.lr = fast\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.lr = -1\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("gate.s0 = 0.9\ngate.s1 = 0.6\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("data.size = 64\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("data.crop = random\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("model.variant = both\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("train.seed = 1\ntrain.seed = 2\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::parse("generate.count = 0\n"), ConfigError);
  CHECK_THROWS_AS(RunConfig::load("/nonexistent/flowi2i.cfg"), ConfigError);
}
