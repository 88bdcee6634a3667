#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowi2i/errors.hpp"
#include "flowi2i/features.hpp"
#include "flowi2i/image_io.hpp"
#include "flowi2i/metrics.hpp"
#include "flowi2i/sampler.hpp"
#include "report.hpp"

namespace fs = std::filesystem;

namespace flowi2i::cli {
namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

struct LoadedModel {
  Backbone model;
  Codec codec;
};

LoadedModel load_model(const Context& ctx, const fs::path& checkpoint, const std::optional<fs::path>& codec_path) {
  const fs::path ckpt = ctx.resolve(checkpoint);
  Backbone model = Backbone::load(ckpt);
  KeyValues codec_keys;
  for (const auto& [k, v] : model.metadata()) {
    if (k.starts_with("codec.")) codec_keys.emplace(k, v);
  }
  const CodecSpec spec = codec_keys.empty() ? CodecSpec{} : CodecSpec::from_key_values(codec_keys);
  if (spec.kind == CodecKind::Identity) return {std::move(model), Codec()};
  const fs::path file = codec_path ? ctx.resolve(*codec_path) : ckpt.parent_path() / "codec.fi2i";
  if (!fs::exists(file)) {
    throw ConfigError("checkpoint " + ckpt.string() + " uses a " + to_string(spec.kind) + " codec but " +
                      file.string() + " does not exist (pass --codec)");
  }
  Codec codec = Codec::load(file);
  if (codec.spec().kind != spec.kind || codec.spec().spatial_factor != spec.spatial_factor ||
      codec.spec().latent_channels != spec.latent_channels) {
    throw ConfigError("codec " + file.string() + " does not match the checkpoint's codec settings");
  }
  return {std::move(model), std::move(codec)};
}

struct NamedImage {
  std::string name;
  ImageGrid corrupted;
  std::optional<ImageGrid> clean;
};

std::vector<NamedImage> load_sources(const Context& ctx, const SourceArgs& args) {
  if (args.input.has_value() == args.data.has_value()) {
    throw ConfigError("give exactly one of --input or --data");
  }
  std::vector<NamedImage> out;
  if (args.input) {
    const fs::path dir = ctx.resolve(*args.input);
    for (const auto& stem : list_images(dir)) {
      out.push_back({stem.filename().string(), preprocess(load_image(stem), ctx.config.preprocess), std::nullopt});
    }
    if (out.empty()) throw IoError("no images in " + dir.string());
    return out;
  }
  const Dataset ds = load_dataset(ctx.resolve(*args.data));
  const DatasetManifest& m = ds.manifest(parse_split(args.split));
  for (const auto& r : m.records) {
    out.push_back({r.id, load_image(ds.root / r.corrupted_path), load_image(ds.root / r.clean_path)});
  }
  if (out.empty()) throw IoError("split " + args.split + " of " + ds.root.string() + " is empty");
  return out;
}

// References by name from an explicit directory, overriding dataset pairs.
void attach_references(const Context& ctx, std::vector<NamedImage>& images, const std::optional<fs::path>& reference) {
  if (!reference) return;
  const fs::path dir = ctx.resolve(*reference);
  for (auto& im : images) {
    const fs::path stem = dir / im.name;
    if (fs::exists(fs::path(stem).replace_extension(".f32")) || fs::exists(fs::path(stem).replace_extension(".pgm"))) {
      im.clean = preprocess(load_image(stem), ctx.config.preprocess);
    }
  }
}

std::vector<ImageGrid> restore_all(const LoadedModel& lm, const std::vector<NamedImage>& images,
                                   const SampleConfig& sampling) {
  std::vector<ImageGrid> sources;
  sources.reserve(images.size());
  for (const auto& im : images) sources.push_back(im.corrupted);
  const auto& mc = lm.model.config();
  return restore_batch(lm.model, sources, sampling, mc.latent_channels, mc.latent_size, lm.codec);
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double stddev(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / v.size());
}

PairedRow paired_row(std::string method, const std::vector<ImageGrid>& outputs, const std::vector<ImageGrid>& refs,
                     const SsimSpec& spec) {
  std::vector<double> s, m;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    s.push_back(ssim(outputs[i], refs[i], spec));
    m.push_back(mae_normed(outputs[i], refs[i]));
  }
  return {std::move(method), mean(s), stddev(s), mean(m), stddev(m), static_cast<int>(s.size())};
}

DistributionRow distribution_row(std::string method, const std::vector<ImageGrid>& samples,
                                 const std::vector<ImageGrid>& reference, const EvalConfig& eval) {
  if (samples.size() < 2 || reference.size() < 2) {
    throw ParameterError("distribution metrics need at least two images per set");
  }
  const RandomConvExtractor extractor(eval.feature_seed);
  const Eigen::MatrixXd a = extract_features(samples, extractor);
  const Eigen::MatrixXd b = extract_features(reference, extractor);
  DistributionRow row;
  row.method = std::move(method);
  row.fid = frechet_distance(fit_stats(a), fit_stats(b));
  const int subset = std::min<int>({eval.kid_subset_size, static_cast<int>(a.rows()), static_cast<int>(b.rows())});
  row.kid = kid(a, b, subset, eval.kid_subsets, eval.kid_seed);
  row.count = static_cast<int>(samples.size());
  return row;
}

std::vector<ImageGrid> load_directory(const fs::path& dir) {
  std::vector<ImageGrid> out;
  for (const auto& stem : list_images(dir)) out.push_back(load_image(stem));
  return out;
}

}  // namespace

void Context::echo_into(const fs::path& dir) const {
  fs::create_directories(dir);
  write_text(dir / "run_config.cfg", config.to_text());
  write_text(dir / "command.txt", command_line + "\n");
}

RunConfig resolve_config(const std::optional<fs::path>& config_file, const std::vector<std::string>& set_overrides,
                         const KeyValues& flag_overrides) {
  KeyValues kv;
  if (config_file) {
    std::ifstream f(*config_file, std::ios::binary);
    if (!f) throw ConfigError("cannot read config file " + config_file->string());
    std::stringstream ss;
    ss << f.rdbuf();
    kv = parse_key_values(ss.str());
  }
  for (const auto& s : set_overrides) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    auto trim = [](std::string x) {
      const auto b = x.find_first_not_of(" \t");
      const auto e = x.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : x.substr(b, e - b + 1);
    };
    kv[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
  }
  for (const auto& [k, v] : flag_overrides) kv[k] = v;
  return RunConfig::from_key_values(kv);
}

void cmd_simulate(const Context& ctx, const SimulateArgs& args) {
  const fs::path out = ctx.resolve(args.out);
  const Dataset ds = build_dataset(ctx.config.dataset_source(ctx.workdir), ctx.config.build_options(), out);
  ctx.echo_into(out);
  std::cout << "dataset " << out.string() << ": " << ds.train.records.size() << " train, " << ds.val.records.size()
            << " val, " << ds.test.records.size() << " test pairs; gate (" << ctx.config.gate.s0 << ", "
            << ctx.config.gate.s1 << ")\n";
}

void cmd_train(const Context& ctx, const TrainArgs& args) {
  const RunConfig& cfg = ctx.config;
  const Dataset ds = load_dataset(ctx.resolve(args.data));
  const fs::path out = ctx.resolve(args.out);
  ctx.echo_into(out);

  Codec codec;
  if (args.codec) {
    codec = Codec::load(ctx.resolve(*args.codec));
    if (codec.spec().kind != cfg.codec.kind || codec.spec().spatial_factor != cfg.codec.spatial_factor ||
        codec.spec().latent_channels != cfg.codec.latent_channels) {
      throw ConfigError("--codec file does not match the codec.* settings");
    }
  } else if (cfg.codec.kind != CodecKind::Identity) {
    codec = Codec(cfg.codec, cfg.train.seed);
    std::vector<ImageGrid> images;
    for (auto& p : load_pairs(ds.root, ds.train)) images.push_back(std::move(p.clean));
    AeTrainConfig ae;
    ae.seed = cfg.train.seed;
    const double mse = codec.train(images, ae);
    std::cerr << "codec: trained " << to_string(cfg.codec.kind) << ", reconstruction mse " << mse << "\n";
  }
  if (codec.spec().kind != CodecKind::Identity) codec.save(out / "codec.fi2i");

  FitOptions options;
  options.eval_sampling = cfg.sample;
  options.on_step = [](const StepResult& s) {
    if (s.step == 1 || s.step % 50 == 0) {
      std::cerr << "step " << s.step << " loss " << s.loss << " grad_norm " << s.raw_grad_norm << " lr " << s.lr
                << "\n";
    }
  };
  const FitResult r = fit(ds, cfg.model, codec, cfg.train, out, options);
  std::cout << "checkpoint " << r.checkpoint.string() << " after " << r.steps.size() << " steps, final loss "
            << (r.steps.empty() ? 0.0 : r.steps.back().loss) << "\n";
}

void cmd_restore(const Context& ctx, const RestoreArgs& args) {
  const LoadedModel lm = load_model(ctx, args.checkpoint, args.codec);
  const std::vector<NamedImage> images = load_sources(ctx, args.source);
  const fs::path out = ctx.resolve(args.out);
  ctx.echo_into(out);
  const std::vector<ImageGrid> restored = restore_all(lm, images, ctx.config.sample);
  fs::create_directories(out / "restored");
  const bool paired = std::all_of(images.begin(), images.end(), [](const NamedImage& i) { return i.clean.has_value(); });
  if (paired) {
    fs::create_directories(out / "clean");
    fs::create_directories(out / "corrupted");
  }
  for (std::size_t i = 0; i < images.size(); ++i) {
    write_image_pair_files(out / "restored" / images[i].name, restored[i]);
    if (paired) {
      write_image_pair_files(out / "clean" / images[i].name, *images[i].clean);
      write_image_pair_files(out / "corrupted" / images[i].name, images[i].corrupted);
    }
  }
  std::cout << "restored " << images.size() << " images into " << (out / "restored").string() << " (steps "
            << ctx.config.sample.steps << ", guidance " << ctx.config.sample.guidance << ", "
            << to_string(ctx.config.sample.solver) << ")\n";
}

std::string cmd_eval(const Context& ctx, const EvalArgs& args) {
  if (args.mode != "paired" && args.mode != "distribution") {
    throw ConfigError("--mode must be paired or distribution, got '" + args.mode + "'");
  }
  if (args.restored.empty()) throw ConfigError("eval needs at least one --restored directory");
  if (!args.labels.empty() && args.labels.size() != args.restored.size()) {
    throw ConfigError("give one --label per --restored directory");
  }
  const fs::path ref_dir = ctx.resolve(args.reference);
  auto label = [&](std::size_t i) { return args.labels.empty() ? args.restored[i].string() : args.labels[i]; };

  std::string table;
  nlohmann::json rows = nlohmann::json::array();
  if (args.mode == "paired") {
    std::vector<PairedRow> out;
    for (std::size_t i = 0; i < args.restored.size(); ++i) {
      const fs::path dir = ctx.resolve(args.restored[i]);
      std::vector<ImageGrid> outputs, refs;
      for (const auto& stem : list_images(dir)) {
        const fs::path ref = ref_dir / stem.filename();
        if (!fs::exists(fs::path(ref).replace_extension(".f32")) &&
            !fs::exists(fs::path(ref).replace_extension(".pgm"))) {
          throw IoError("no reference for " + stem.filename().string() + " in " + ref_dir.string());
        }
        outputs.push_back(load_image(stem));
        refs.push_back(load_image(ref));
      }
      if (outputs.empty()) throw IoError("no images in " + dir.string());
      out.push_back(paired_row(label(i), outputs, refs, ctx.config.generation.ssim));
      rows.push_back(to_json(out.back()));
    }
    table = paired_table(out);
  } else {
    const std::vector<ImageGrid> reference = load_directory(ref_dir);
    std::vector<DistributionRow> out;
    for (std::size_t i = 0; i < args.restored.size(); ++i) {
      out.push_back(distribution_row(label(i), load_directory(ctx.resolve(args.restored[i])), reference,
                                     ctx.config.eval));
      rows.push_back(to_json(out.back()));
    }
    table = distribution_table(out);
  }
  std::cout << table;
  if (args.out) {
    const fs::path out = ctx.resolve(*args.out);
    ctx.echo_into(out);
    write_text(out / ("eval_" + args.mode + ".txt"), table);
    const nlohmann::json report{{"mode", args.mode}, {"reference", ref_dir.string()}, {"rows", rows}};
    write_text(out / ("eval_" + args.mode + ".json"), report.dump(2) + "\n");
  } else {
    std::cerr << ctx.config.to_text();
  }
  return table;
}

void cmd_ablate(const Context& ctx, const AblateArgs& args) {
  const RunConfig& cfg = ctx.config;
  const LoadedModel lm = load_model(ctx, args.checkpoint, args.codec);
  std::vector<NamedImage> images = load_sources(ctx, args.source);
  attach_references(ctx, images, args.reference);
  const bool have_refs = std::all_of(images.begin(), images.end(), [](const NamedImage& i) { return i.clean.has_value(); });
  std::vector<ImageGrid> refs;
  if (have_refs) {
    for (const auto& im : images) refs.push_back(*im.clean);
  }
  const fs::path out = ctx.resolve(args.out);
  ctx.echo_into(out);
  const std::size_t shown = std::min<std::size_t>(images.size(), static_cast<std::size_t>(cfg.ablate.max_inputs));

  // One grid row per shown input: original | output per setting.
  auto run_grid = [&](const std::string& name, const std::vector<SampleConfig>& settings,
                      const std::vector<std::string>& labels, std::vector<PairedRow>& metrics) {
    std::vector<std::vector<ImageGrid>> rows(shown);
    for (std::size_t i = 0; i < shown; ++i) rows[i].push_back(images[i].corrupted);
    for (std::size_t s = 0; s < settings.size(); ++s) {
      const std::vector<ImageGrid> restored = restore_all(lm, images, settings[s]);
      for (std::size_t i = 0; i < shown; ++i) rows[i].push_back(restored[i]);
      if (have_refs) metrics.push_back(paired_row(labels[s], restored, refs, cfg.generation.ssim));
    }
    std::vector<ImageGrid> strips;
    for (const auto& r : rows) strips.push_back(tile_row(r));
    write_image_pair_files(out / name, stack_rows(strips));
  };

  std::vector<PairedRow> metrics;
  std::vector<SampleConfig> settings;
  std::vector<std::string> labels;
  for (int s : cfg.ablate.steps) {
    SampleConfig c = cfg.sample;
    c.steps = s;
    c.guidance = 1.0;
    settings.push_back(c);
    labels.push_back("steps=" + std::to_string(s) + " g=1");
  }
  run_grid("steps_grid", settings, labels, metrics);
  settings.clear();
  labels.clear();
  for (double g : cfg.ablate.guidance) {
    SampleConfig c = cfg.sample;
    c.guidance = g;
    settings.push_back(c);
    char g_text[32];
    std::snprintf(g_text, sizeof g_text, "%.2g", g);
    labels.push_back("steps=" + std::to_string(c.steps) + " g=" + g_text);
  }
  run_grid("guidance_grid", settings, labels, metrics);

  // Guidance-0 generation: one row per (checkpoint, sample index).
  std::vector<fs::path> gen_ckpts = args.generation_checkpoints;
  if (gen_ckpts.empty()) gen_ckpts.push_back(args.checkpoint);
  std::vector<DistributionRow> gen_metrics;
  std::vector<ImageGrid> gen_strips;
  for (const auto& ckpt : gen_ckpts) {
    std::optional<LoadedModel> other;
    if (ckpt != args.checkpoint) other.emplace(load_model(ctx, ckpt, std::nullopt));
    const LoadedModel& gm = other ? *other : lm;
    const auto& mc = gm.model.config();
    const std::string variant = to_string(gm.model.variant());
    std::vector<std::vector<ImageGrid>> rows(static_cast<std::size_t>(cfg.ablate.generation_count));
    for (int steps : cfg.ablate.generation_steps) {
      std::vector<ImageGrid> samples;
      bool degenerate = false;
      for (int k = 0; k < cfg.ablate.generation_count; ++k) {
        SampleConfig c = cfg.sample;
        c.steps = steps;
        c.seed = cfg.sample.seed + static_cast<std::uint64_t>(k);
        samples.push_back(generate(gm.model, c, mc.latent_channels, mc.latent_size, gm.codec, &degenerate));
        rows[static_cast<std::size_t>(k)].push_back(samples.back());
      }
      if (degenerate && steps == cfg.ablate.generation_steps.front()) {
        std::cerr << "warning: " << ckpt.string()
                  << " is a PRIMARY model; guidance-0 generation is expected to fail qualitatively\n";
      }
      if (have_refs && samples.size() >= 2) {
        gen_metrics.push_back(distribution_row(variant + " g=0 steps=" + std::to_string(steps), samples, refs,
                                               cfg.eval));
      }
    }
    for (const auto& r : rows) gen_strips.push_back(tile_row(r));
  }
  write_image_pair_files(out / "generation_grid", stack_rows(gen_strips));

  nlohmann::json report{{"inputs", images.size()}, {"paired", nlohmann::json::array()},
                        {"generation", nlohmann::json::array()}};
  std::string text;
  if (have_refs) {
    text = paired_table(metrics);
    if (!gen_metrics.empty()) text += "\n" + distribution_table(gen_metrics);
    for (const auto& r : metrics) report["paired"].push_back(to_json(r));
    for (const auto& r : gen_metrics) report["generation"].push_back(to_json(r));
    write_text(out / "ablate_metrics.txt", text);
    std::cout << text;
  } else {
    std::cout << "no references available; wrote figure grids only\n";
  }
  write_text(out / "ablate_metrics.json", report.dump(2) + "\n");
  std::cout << "grids written to " << out.string() << "\n";
}

void cmd_generate(const Context& ctx, const GenerateArgs& args) {
  const RunConfig& cfg = ctx.config;
  const LoadedModel lm = load_model(ctx, args.checkpoint, args.codec);
  if (lm.model.variant() == Variant::Primary) {
    std::cerr << "warning: PRIMARY checkpoint; guidance-0 generation keeps the control branch on an all-zero "
                 "source and is expected to fail qualitatively\n";
  }
  const fs::path out = ctx.resolve(args.out);
  ctx.echo_into(out);
  const auto& mc = lm.model.config();
  for (int k = 0; k < cfg.generate_count; ++k) {
    SampleConfig c = cfg.sample;
    c.seed = cfg.sample.seed + static_cast<std::uint64_t>(k);
    char name[32];
    std::snprintf(name, sizeof name, "gen_%04d", k);
    write_image_pair_files(out / name, generate(lm.model, c, mc.latent_channels, mc.latent_size, lm.codec));
  }
  std::cout << "generated " << cfg.generate_count << " images into " << out.string() << "\n";
}

}  // namespace flowi2i::cli
