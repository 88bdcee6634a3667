#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flowi2i/keyvalue.hpp"
#include "flowi2i/run_config.hpp"

namespace flowi2i::cli {

// Shared state for every subcommand. Relative paths resolve against workdir.
struct Context {
  std::filesystem::path workdir = ".";
  RunConfig config;
  std::string command_line;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : workdir / p;
  }
  /// Writes run_config.cfg and command.txt into `dir` (created if needed).
  void echo_into(const std::filesystem::path& dir) const;
};

/// File overrides < --set overrides < per-command flags.
RunConfig resolve_config(const std::optional<std::filesystem::path>& config_file,
                         const std::vector<std::string>& set_overrides, const KeyValues& flag_overrides);

struct SimulateArgs {
  std::filesystem::path out = "data";
};
void cmd_simulate(const Context& ctx, const SimulateArgs& args);

struct TrainArgs {
  std::filesystem::path data = "data";
  std::filesystem::path out = "run";
  std::optional<std::filesystem::path> codec;
};
void cmd_train(const Context& ctx, const TrainArgs& args);

// Images come either from a directory (--input) or from one split of a
// dataset (--data / --split); the dataset form also copies clean and
// corrupted images next to the restored ones.
struct SourceArgs {
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> data;
  std::string split = "test";
};

struct RestoreArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> codec;
  SourceArgs source;
  std::filesystem::path out = "restored";
};
void cmd_restore(const Context& ctx, const RestoreArgs& args);

struct EvalArgs {
  std::string mode = "paired";
  std::vector<std::filesystem::path> restored;
  std::vector<std::string> labels;
  std::filesystem::path reference;
  std::optional<std::filesystem::path> out;
};
/// Returns the rendered table (also printed to stdout).
std::string cmd_eval(const Context& ctx, const EvalArgs& args);

struct AblateArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> codec;
  std::vector<std::filesystem::path> generation_checkpoints;
  SourceArgs source;
  std::optional<std::filesystem::path> reference;
  std::filesystem::path out = "ablate";
};
void cmd_ablate(const Context& ctx, const AblateArgs& args);

struct GenerateArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> codec;
  std::filesystem::path out = "generated";
};
void cmd_generate(const Context& ctx, const GenerateArgs& args);

}  // namespace flowi2i::cli
