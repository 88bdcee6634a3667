#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "commands.hpp"
#include "flowi2i/errors.hpp"
#include "flowi2i/keyvalue.hpp"
#include "flowi2i/runtime.hpp"

namespace fs = std::filesystem;
using namespace flowi2i;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Typed flag whose presence turns into a config key override.
template <class T>
struct Flag {
  std::optional<T> value;
  std::string key;
};

template <class T>
void add_flag(CLI::App* app, const std::string& name, Flag<T>& flag, std::string key, const std::string& help) {
  flag.key = std::move(key);
  app->add_option(name, flag.value, help + " (" + flag.key + ")");
}

template <class T>
void collect(KeyValues& kv, const Flag<T>& flag) {
  if (!flag.value) return;
  if constexpr (std::is_same_v<T, double>) {
    kv[flag.key] = format_double(*flag.value);
  } else if constexpr (std::is_same_v<T, std::string>) {
    kv[flag.key] = *flag.value;
  } else {
    kv[flag.key] = std::to_string(*flag.value);
  }
}

void add_sampling(CLI::App* app, Flag<int>& steps, Flag<double>& guidance, Flag<std::string>& solver,
                  Flag<std::uint64_t>& seed) {
  add_flag(app, "--steps", steps, "sample.steps", "ODE steps");
  add_flag(app, "--guidance", guidance, "sample.guidance", "guidance scale");
  add_flag(app, "--solver", solver, "sample.solver", "euler or heun2");
  add_flag(app, "--seed", seed, "sample.seed", "base noise seed");
}

void add_source(CLI::App* app, cli::SourceArgs& source) {
  app->add_option("--input", source.input, "directory of input images");
  app->add_option("--data", source.data, "dataset directory (alternative to --input)");
  app->add_option("--split", source.split, "dataset split with --data")->check(CLI::IsMember({"train", "val", "test"}));
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"flowi2i: flow-matching image-to-image restoration of motion-corrupted images"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<fs::path> config_file;
  fs::path workdir = ".";
  std::vector<std::string> sets;
  app.add_option("--config", config_file, "run config file (key = value)");
  app.add_option("--workdir", workdir, "root for relative paths");
  app.add_option("--set", sets, "config override key=value (repeatable)");

  // simulate
  cli::SimulateArgs sim;
  std::vector<double> gate;
  Flag<int> phantoms;
  Flag<std::string> source_dir;
  Flag<std::uint64_t> data_seed;
  auto* simulate = app.add_subcommand("simulate", "build a paired dataset from phantoms or an image directory");
  simulate->add_option("--out", sim.out, "dataset directory");
  simulate->add_option("--gate", gate, "SSIM gate bounds s0 s1")->expected(2);
  add_flag(simulate, "--phantoms", phantoms, "data.phantom_count", "number of phantom images");
  add_flag(simulate, "--source", source_dir, "data.source_dir", "directory of clean images instead of phantoms");
  add_flag(simulate, "--seed", data_seed, "data.seed", "split and corruption seed");

  // train
  cli::TrainArgs tr;
  Flag<std::string> variant;
  Flag<std::uint64_t> train_seed;
  Flag<long> max_steps;
  Flag<int> epochs, batch, eval_every;
  Flag<double> lr;
  auto* train = app.add_subcommand("train", "train a velocity model on the TRAIN split");
  train->add_option("--data", tr.data, "dataset directory");
  train->add_option("--out", tr.out, "run directory");
  train->add_option("--codec", tr.codec, "pretrained codec file");
  add_flag(train, "--variant", variant, "model.variant", "primary or bis");
  add_flag(train, "--seed", train_seed, "train.seed", "training seed");
  add_flag(train, "--max-steps", max_steps, "train.max_steps", "stop after this many steps");
  add_flag(train, "--epochs", epochs, "train.epochs", "epochs");
  add_flag(train, "--batch", batch, "train.batch_size", "batch size");
  add_flag(train, "--lr", lr, "train.lr", "learning rate");
  add_flag(train, "--eval-every", eval_every, "train.eval_every", "VAL evaluation interval in steps");

  // restore
  cli::RestoreArgs rs;
  Flag<int> steps;
  Flag<double> guidance;
  Flag<std::string> solver;
  Flag<std::uint64_t> sample_seed;
  bool two_branch = false;
  auto* restore = app.add_subcommand("restore", "restore corrupted images with a trained checkpoint");
  restore->add_option("--checkpoint", rs.checkpoint, "checkpoint file")->required();
  restore->add_option("--codec", rs.codec, "codec file (default: next to the checkpoint)");
  restore->add_option("--out", rs.out, "output directory");
  restore->add_flag("--force-two-branch", two_branch, "evaluate both CFG branches even at guidance 1");
  add_source(restore, rs.source);
  add_sampling(restore, steps, guidance, solver, sample_seed);

  // eval
  cli::EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "paired (SSIM / MAE) or distribution (FID / KID) evaluation");
  eval->add_option("--mode", ev.mode, "paired or distribution")->check(CLI::IsMember({"paired", "distribution"}));
  eval->add_option("--restored", ev.restored, "restored image directory (repeatable)")->required();
  eval->add_option("--label", ev.labels, "row label per --restored directory");
  eval->add_option("--reference", ev.reference, "reference image directory")->required();
  eval->add_option("--out", ev.out, "directory for the report files");

  // ablate
  cli::AblateArgs ab;
  Flag<int> ablate_steps;
  Flag<double> ablate_guidance;
  Flag<std::string> ablate_solver;
  Flag<std::uint64_t> ablate_seed;
  std::optional<std::string> steps_list, guidance_list;
  auto* ablate = app.add_subcommand("ablate", "steps / guidance sweeps and guidance-0 generation grids");
  ablate->add_option("--checkpoint", ab.checkpoint, "checkpoint file")->required();
  ablate->add_option("--codec", ab.codec, "codec file (default: next to the checkpoint)");
  ablate->add_option("--generation-checkpoint", ab.generation_checkpoints,
                     "checkpoints for the guidance-0 grid (repeatable; default --checkpoint)");
  ablate->add_option("--reference", ab.reference, "clean references by name (with --input)");
  ablate->add_option("--out", ab.out, "output directory");
  ablate->add_option("--steps-list", steps_list, "comma-separated steps grid (ablate.steps)");
  ablate->add_option("--guidance-list", guidance_list, "comma-separated guidance grid (ablate.guidance)");
  add_source(ablate, ab.source);
  add_sampling(ablate, ablate_steps, ablate_guidance, ablate_solver, ablate_seed);

  // generate
  cli::GenerateArgs gn;
  Flag<int> count, gen_steps;
  Flag<std::uint64_t> gen_seed;
  auto* generate = app.add_subcommand("generate", "unconditional (guidance 0) generation");
  generate->add_option("--checkpoint", gn.checkpoint, "checkpoint file")->required();
  generate->add_option("--codec", gn.codec, "codec file (default: next to the checkpoint)");
  generate->add_option("--out", gn.out, "output directory");
  add_flag(generate, "--count", count, "generate.count", "number of images");
  add_flag(generate, "--steps", gen_steps, "sample.steps", "ODE steps");
  add_flag(generate, "--seed", gen_seed, "sample.seed", "base noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    KeyValues kv;
    if (simulate->parsed()) {
      if (!gate.empty()) {
        kv["gate.s0"] = format_double(gate[0]);
        kv["gate.s1"] = format_double(gate[1]);
      }
      collect(kv, phantoms);
      collect(kv, source_dir);
      collect(kv, data_seed);
    } else if (train->parsed()) {
      collect(kv, variant);
      collect(kv, train_seed);
      collect(kv, max_steps);
      collect(kv, epochs);
      collect(kv, batch);
      collect(kv, lr);
      collect(kv, eval_every);
    } else if (restore->parsed()) {
      collect(kv, steps);
      collect(kv, guidance);
      collect(kv, solver);
      collect(kv, sample_seed);
      if (two_branch) kv["sample.force_two_branch"] = "true";
    } else if (ablate->parsed()) {
      collect(kv, ablate_steps);
      collect(kv, ablate_guidance);
      collect(kv, ablate_solver);
      collect(kv, ablate_seed);
      if (steps_list) kv["ablate.steps"] = *steps_list;
      if (guidance_list) kv["ablate.guidance"] = *guidance_list;
    } else if (generate->parsed()) {
      collect(kv, count);
      collect(kv, gen_steps);
      collect(kv, gen_seed);
    }

    cli::Context ctx;
    ctx.workdir = workdir;
    for (int i = 0; i < argc; ++i) ctx.command_line += (i ? " " : "") + std::string(argv[i]);
    std::optional<fs::path> config_path;
    if (config_file) config_path = ctx.resolve(*config_file);
    ctx.config = cli::resolve_config(config_path, sets, kv);

    if (simulate->parsed()) cli::cmd_simulate(ctx, sim);
    if (train->parsed()) cli::cmd_train(ctx, tr);
    if (restore->parsed()) cli::cmd_restore(ctx, rs);
    if (eval->parsed()) cli::cmd_eval(ctx, ev);
    if (ablate->parsed()) cli::cmd_ablate(ctx, ab);
    if (generate->parsed()) cli::cmd_generate(ctx, gn);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParameterError& e) {
    std::cerr << "parameter error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
