#include "flowi2i/run_config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(values[i]);
    } else {
      out += std::to_string(values[i]);
    }
  }
  return out;
}

template <typename T>
std::vector<T> split_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("empty list element in '" + key + "'");
    item = item.substr(b, e - b + 1);
    T v{};
    const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
    if (res.ec != std::errc{} || res.ptr != item.data() + item.size()) {
      throw ConfigError("bad list element '" + item + "' in '" + key + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("empty list in '" + key + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + key + "' expects true or false, got '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  try {
    model.validate();
    codec.validate();
    train.validate();
    sample.validate();
    preprocess.validate();
    gate.validate();
    generation.ssim.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (preprocess.target_size != codec.spatial_factor * model.latent_size) {
    throw ConfigError("data.size must equal codec.spatial_factor * model.latent_size");
  }
  if (codec.latent_channels != model.latent_channels) {
    throw ConfigError("codec.latent_channels must equal model.latent_channels");
  }
  if (data.phantom_count < 0 || data.phantom_size < 32) throw ConfigError("invalid phantom settings");
  if (data.pairs_per_image < 1) throw ConfigError("data.pairs_per_image must be >= 1");
  if (data.failure_tolerance < 0.0 || data.failure_tolerance > 1.0) {
    throw ConfigError("data.failure_tolerance must lie in [0, 1]");
  }
  if (eval.kid_subset_size < 2 || eval.kid_subsets < 1) throw ConfigError("invalid KID subset settings");
  if (generate_count < 1) throw ConfigError("generate.count must be >= 1");
  if (ablate.generation_count < 1 || ablate.max_inputs < 1) throw ConfigError("invalid ablate counts");
  for (int s : ablate.steps) {
    if (s < 1) throw ConfigError("ablate.steps entries must be >= 1");
  }
  for (int s : ablate.generation_steps) {
    if (s < 1) throw ConfigError("ablate.generation_steps entries must be >= 1");
  }
  for (double g : ablate.guidance) {
    if (g < 0.0) throw ConfigError("ablate.guidance entries must be >= 0");
  }
}

KeyValues RunConfig::to_key_values() const {
  KeyValues kv = model.to_key_values();
  kv.merge(codec.to_key_values());
  kv.merge(train.to_key_values());
  kv["schema_version"] = std::to_string(kSchemaVersion);
  kv["sample.steps"] = std::to_string(sample.steps);
  kv["sample.guidance"] = format_double(sample.guidance);
  kv["sample.solver"] = to_string(sample.solver);
  kv["sample.seed"] = std::to_string(sample.seed);
  kv["sample.force_two_branch"] = sample.force_two_branch ? "true" : "false";
  kv["data.size"] = std::to_string(preprocess.target_size);
  kv["data.interpolation"] = to_string(preprocess.interpolation);
  kv["data.crop"] = "center";
  kv["data.phantom_count"] = std::to_string(data.phantom_count);
  kv["data.phantom_first_seed"] = std::to_string(data.phantom_first_seed);
  kv["data.phantom_size"] = std::to_string(data.phantom_size);
  kv["data.source_dir"] = data.source_dir;
  kv["data.source_lo"] = format_double(data.source_range.lo);
  kv["data.source_hi"] = format_double(data.source_range.hi);
  kv["data.pairs_per_image"] = std::to_string(data.pairs_per_image);
  kv["data.split_train"] = format_double(data.splits.train);
  kv["data.split_val"] = format_double(data.splits.val);
  kv["data.split_test"] = format_double(data.splits.test);
  kv["data.seed"] = std::to_string(data.seed);
  kv["data.failure_tolerance"] = format_double(data.failure_tolerance);
  kv["gate.s0"] = format_double(gate.s0);
  kv["gate.s1"] = format_double(gate.s1);
  kv["gate.max_retries"] = std::to_string(gate.max_retries);
  kv["motion.max_shift"] = format_double(generation.motion.max_shift);
  kv["motion.max_rotation"] = format_double(generation.motion.max_rotation);
  kv["motion.min_segments"] = std::to_string(generation.motion.min_segments);
  kv["motion.max_segments"] = std::to_string(generation.motion.max_segments);
  kv["motion.initial_severity"] = format_double(generation.initial_severity);
  kv["motion.escalate"] = format_double(generation.escalate);
  kv["motion.relax"] = format_double(generation.relax);
  kv["ssim.window_size"] = std::to_string(generation.ssim.window_size);
  kv["ssim.window_sigma"] = format_double(generation.ssim.window_sigma);
  kv["ssim.k1"] = format_double(generation.ssim.k1);
  kv["ssim.k2"] = format_double(generation.ssim.k2);
  kv["ssim.data_range"] = format_double(generation.ssim.data_range);
  kv["eval.feature_seed"] = std::to_string(eval.feature_seed);
  kv["eval.kid_subset_size"] = std::to_string(eval.kid_subset_size);
  kv["eval.kid_subsets"] = std::to_string(eval.kid_subsets);
  kv["eval.kid_seed"] = std::to_string(eval.kid_seed);
  kv["ablate.steps"] = join(ablate.steps);
  kv["ablate.guidance"] = join(ablate.guidance);
  kv["ablate.generation_steps"] = join(ablate.generation_steps);
  kv["ablate.generation_count"] = std::to_string(ablate.generation_count);
  kv["ablate.max_inputs"] = std::to_string(ablate.max_inputs);
  kv["generate.count"] = std::to_string(generate_count);
  return kv;
}

std::string RunConfig::to_text() const { return format_key_values(to_key_values()); }

RunConfig RunConfig::from_key_values(const KeyValues& overrides) {
  KeyValues kv = RunConfig{}.to_key_values();
  for (const auto& [k, v] : overrides) {
    auto it = kv.find(k);
    if (it == kv.end()) throw ConfigError("unknown config key '" + k + "'");
    it->second = v;
  }
  if (kv_int(kv, "schema_version") != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + kv.at("schema_version") + " (expected " +
                      std::to_string(kSchemaVersion) + ")");
  }
  if (kv.at("data.crop") != "center") throw ConfigError("data.crop supports only 'center'");

  RunConfig c;
  try {
    c.model = ModelConfig::from_key_values(kv);
    c.codec = CodecSpec::from_key_values(kv);
    c.train = TrainConfig::from_key_values(kv);
    c.train.variant = c.model.variant;
    c.train.p_drop = c.model.p_drop;
    c.sample.steps = kv_int(kv, "sample.steps");
    c.sample.guidance = kv_double(kv, "sample.guidance");
    c.sample.solver = parse_solver(kv_string(kv, "sample.solver"));
    c.sample.seed = kv_u64(kv, "sample.seed");
    c.sample.force_two_branch = parse_bool("sample.force_two_branch", kv.at("sample.force_two_branch"));
    c.preprocess.target_size = kv_int(kv, "data.size");
    c.preprocess.interpolation = parse_interpolation(kv_string(kv, "data.interpolation"));
    c.data.phantom_count = kv_int(kv, "data.phantom_count");
    c.data.phantom_first_seed = kv_u64(kv, "data.phantom_first_seed");
    c.data.phantom_size = kv_int(kv, "data.phantom_size");
    c.data.source_dir = kv.at("data.source_dir");
    c.data.source_range = {static_cast<float>(kv_double(kv, "data.source_lo")),
                           static_cast<float>(kv_double(kv, "data.source_hi"))};
    c.data.pairs_per_image = kv_int(kv, "data.pairs_per_image");
    c.data.splits = {kv_double(kv, "data.split_train"), kv_double(kv, "data.split_val"),
                     kv_double(kv, "data.split_test")};
    c.data.seed = kv_u64(kv, "data.seed");
    c.data.failure_tolerance = kv_double(kv, "data.failure_tolerance");
    c.gate = {kv_double(kv, "gate.s0"), kv_double(kv, "gate.s1"), kv_int(kv, "gate.max_retries")};
    c.generation.motion.max_shift = kv_double(kv, "motion.max_shift");
    c.generation.motion.max_rotation = kv_double(kv, "motion.max_rotation");
    c.generation.motion.min_segments = kv_int(kv, "motion.min_segments");
    c.generation.motion.max_segments = kv_int(kv, "motion.max_segments");
    c.generation.initial_severity = kv_double(kv, "motion.initial_severity");
    c.generation.escalate = kv_double(kv, "motion.escalate");
    c.generation.relax = kv_double(kv, "motion.relax");
    c.generation.ssim.window_size = kv_int(kv, "ssim.window_size");
    c.generation.ssim.window_sigma = kv_double(kv, "ssim.window_sigma");
    c.generation.ssim.k1 = kv_double(kv, "ssim.k1");
    c.generation.ssim.k2 = kv_double(kv, "ssim.k2");
    c.generation.ssim.data_range = kv_double(kv, "ssim.data_range");
    c.eval.feature_seed = kv_u64(kv, "eval.feature_seed");
    c.eval.kid_subset_size = kv_int(kv, "eval.kid_subset_size");
    c.eval.kid_subsets = kv_int(kv, "eval.kid_subsets");
    c.eval.kid_seed = kv_u64(kv, "eval.kid_seed");
    c.ablate.steps = split_list<int>("ablate.steps", kv.at("ablate.steps"));
    c.ablate.guidance = split_list<double>("ablate.guidance", kv.at("ablate.guidance"));
    c.ablate.generation_steps = split_list<int>("ablate.generation_steps", kv.at("ablate.generation_steps"));
    c.ablate.generation_count = kv_int(kv, "ablate.generation_count");
    c.ablate.max_inputs = kv_int(kv, "ablate.max_inputs");
    c.generate_count = kv_int(kv, "generate.count");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::parse(std::string_view text) { return from_key_values(parse_key_values(text)); }

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

BuildOptions RunConfig::build_options() const {
  BuildOptions o;
  o.gate = gate;
  o.preprocess = preprocess;
  o.splits = data.splits;
  o.generation = generation;
  o.pairs_per_image = data.pairs_per_image;
  o.failure_tolerance = data.failure_tolerance;
  o.seed = data.seed;
  return o;
}

DatasetSource RunConfig::dataset_source(const std::filesystem::path& workdir) const {
  DatasetSource s;
  s.phantom_first_seed = data.phantom_first_seed;
  s.phantom_count = data.phantom_count;
  s.phantom_size = data.phantom_size;
  if (!data.source_dir.empty()) {
    const std::filesystem::path p(data.source_dir);
    s.directory = p.is_absolute() ? p : workdir / p;
  }
  s.directory_range = data.source_range;
  return s;
}

}  // namespace flowi2i
