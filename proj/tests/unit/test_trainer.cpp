#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>

#include "flowi2i/errors.hpp"
#include "flowi2i/trainer.hpp"

using namespace flowi2i;
namespace fs = std::filesystem;

namespace {

ModelConfig tiny_model(Variant v = Variant::Primary, double p_drop = 0.1) {
  ModelConfig c;
  c.latent_size = 32;
  c.patch_size = 8;
  c.hidden_dim = 16;
  c.depth = 2;
  c.heads = 2;
  c.control_depth = 1;
  c.variant = v;
  c.p_drop = p_drop;
  return c;
}

TrainConfig tiny_train(Variant v = Variant::Primary, double p_drop = 0.1) {
  TrainConfig t;
  t.batch_size = 4;
  t.lr = 1e-3;
  t.variant = v;
  t.p_drop = p_drop;
  return t;
}

std::vector<LoadedPair> tiny_pairs(int n) {
  std::vector<LoadedPair> pairs;
  for (int i = 0; i < n; ++i) {
    const ImageGrid clean = preprocess(generate_phantom(static_cast<std::uint64_t>(i), 64), {32});
    const GeneratedPair p = generate_pair(clean, GateSpec{}, static_cast<std::uint64_t>(i));
    pairs.push_back({clean, p.corrupted});
  }
  return pairs;
}

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("warmup schedule is a linear ramp then constant") {
  const WarmupSchedule s{1e-4, 30};
  for (long step = 1; step < 30; ++step) CHECK(s.lr_at(step) == doctest::Approx(1e-4 * step / 30.0).epsilon(1e-12));
  for (long step : {30L, 31L, 100L, 100000L}) CHECK(s.lr_at(step) == 1e-4);
  const WarmupSchedule none{2e-3, 0};
  CHECK(none.lr_at(1) == 2e-3);
}

TEST_CASE("gradient clipping bounds the global norm") {
  std::vector<Parameter> ps;
  ps.emplace_back("a", Matrix::Constant(2, 2, 1.0f));
  ps.emplace_back("b", Matrix::Constant(1, 3, 1.0f));
  ps[0].grad.setConstant(3.0f);
  ps[1].grad.setConstant(-4.0f);
  std::vector<Parameter*> ptrs{&ps[0], &ps[1]};
  CHECK(global_grad_norm(ptrs) == doctest::Approx(std::sqrt(4 * 9.0 + 3 * 16.0)));
  const double after = clip_grad_norm(ptrs, 0.1);
  CHECK(after <= 0.1 + 1e-6);
  CHECK(global_grad_norm(ptrs) == doctest::Approx(after));
  ps[0].grad.setConstant(0.01f);
  ps[1].grad.setZero();
  CHECK(clip_grad_norm(ptrs, 0.1) == doctest::Approx(0.02));
}

TEST_CASE("train steps clip, drop and reproduce") {
  const auto pairs = tiny_pairs(16);
  auto run = [&](int steps, double p_drop, std::vector<int>* drops) {
    Backbone model(tiny_model(Variant::Primary, p_drop));
    const Codec codec;
    Trainer trainer(model, codec, tiny_train(Variant::Primary, p_drop));
    if (drops) trainer.set_drop_hook([drops](long, int, bool d) { drops->push_back(d ? 1 : 0); });
    std::vector<StepResult> out;
    for (int s = 0; s < steps; ++s) {
      out.push_back(trainer.train_step(std::span<const LoadedPair>(pairs.data() + (s % 4) * 4, 4)));
    }
    return out;
  };

  std::vector<int> none;
  for (const auto& r : run(20, 0.0, &none)) CHECK(r.dropped == 0);
  CHECK(none.size() == 80);
  CHECK(std::count(none.begin(), none.end(), 1) == 0);

  std::vector<int> drops;
  const auto a = run(200, 0.1, &drops);
  const auto b = run(200, 0.1, nullptr);
  const double rate = static_cast<double>(std::count(drops.begin(), drops.end(), 1)) / static_cast<double>(drops.size());
  CHECK(std::fabs(rate - 0.1) <= 4.0 * std::sqrt(0.1 * 0.9 / static_cast<double>(drops.size())));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].grad_norm <= 0.1 + 1e-6);
    CHECK(a[i].loss == b[i].loss);
    CHECK(a[i].lr == WarmupSchedule{1e-3, 30}.lr_at(static_cast<long>(i) + 1));
  }
  // Mean of the last ten steps against the first step keeps the check robust
  // to per-batch timestep noise.
  double tail = 0.0;
  for (std::size_t i = a.size() - 10; i < a.size(); ++i) tail += a[i].loss;
  CHECK(tail / 10.0 < a.front().loss);
}

TEST_CASE("non-finite losses abort with a diagnostic") {
  const auto pairs = tiny_pairs(2);
  Backbone model(tiny_model());
  model.parameter("final.out.bias").value(0, 0) = std::numeric_limits<float>::quiet_NaN();
  const Codec codec;
  Trainer trainer(model, codec, tiny_train());
  CHECK_THROWS_AS(trainer.train_step(std::span<const LoadedPair>(pairs)), NumericalError);
  CHECK_THROWS_AS(trainer.train_step(std::span<const LoadedPair>()), ParameterError);
}

TEST_CASE("trainer rejects inconsistent configs") {
  Backbone model(tiny_model(Variant::Bis));
  const Codec codec;
  CHECK_THROWS_AS(Trainer(model, codec, tiny_train(Variant::Primary)), ContractError);
  TrainConfig bad = tiny_train(Variant::Bis);
  bad.grad_clip_norm = 0.0;
  CHECK_THROWS_AS(Trainer(model, codec, bad), ParameterError);
  bad = tiny_train(Variant::Bis);
  bad.lr = -1.0;
  CHECK_THROWS_AS(bad.validate(), ParameterError);
}

TEST_CASE("fit writes a log and a reloadable checkpoint") {
  const fs::path root = fs::temp_directory_path() / "flowi2i_fit";
  fs::remove_all(root);
  BuildOptions o;
  o.preprocess.target_size = 32;
  DatasetSource src;
  src.phantom_count = 10;
  src.phantom_size = 64;
  const Dataset ds = build_dataset(src, o, root / "data");

  TrainConfig t = tiny_train(Variant::Bis);
  t.epochs = 3;
  t.eval_every = 2;
  t.eval_pairs = 1;
  FitOptions fo;
  fo.eval_sampling.steps = 2;
  const FitResult r = fit(ds, tiny_model(Variant::Bis), Codec(), t, root / "run", fo);
  CHECK(r.steps.size() == 6);  // 8 train pairs, batch 4, 3 epochs
  CHECK(r.evals.size() == 3);
  std::ifstream log(root / "run" / "train_log.jsonl");
  int lines = 0;
  for (std::string line; std::getline(log, line);) ++lines;
  CHECK(lines == 9);

  const Backbone loaded = Backbone::load(r.checkpoint);
  CHECK(loaded.metadata().at("optimizer") == "adam");
  CHECK(loaded.metadata().at("steps") == "6");
  loaded.save(root / "again.fi2i");
  CHECK(file_bytes(root / "again.fi2i") == file_bytes(r.checkpoint));

  t.max_steps = 4;
  CHECK(fit(ds, tiny_model(Variant::Bis), Codec(), t, root / "run2").steps.size() == 4);
  CHECK_THROWS_AS(fit(ds, tiny_model(Variant::Primary), Codec(), t, root / "run3"), ContractError);
  fs::remove_all(root);
}
