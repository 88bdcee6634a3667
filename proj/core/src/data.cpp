#include "flowi2i/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "flowi2i/errors.hpp"
#include "flowi2i/image_io.hpp"
#include "flowi2i/rng.hpp"

namespace flowi2i {
namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Interpolation i) { return i == Interpolation::Nearest ? "nearest" : "bilinear"; }

Interpolation parse_interpolation(std::string_view s) {
  if (s == "nearest" || s == "NEAREST") return Interpolation::Nearest;
  if (s == "bilinear" || s == "BILINEAR") return Interpolation::Bilinear;
  throw ConfigError("unknown interpolation '" + std::string(s) + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "train";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + std::string(s) + "'");
}

void PreprocessSpec::validate() const {
  if (target_size < 1) throw ParameterError("preprocess target_size must be positive");
}

namespace {

// Resamples to (oh, ow) with align-corners-free pixel-centre mapping.
std::vector<double> resize(const std::vector<double>& src, int h, int w, int oh, int ow, Interpolation mode) {
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double fy = (y + 0.5) * sy - 0.5;
      const double fx = (x + 0.5) * sx - 0.5;
      double v;
      if (mode == Interpolation::Nearest) {
        const int iy = std::clamp(static_cast<int>(std::floor((y + 0.5) * sy)), 0, h - 1);
        const int ix = std::clamp(static_cast<int>(std::floor((x + 0.5) * sx)), 0, w - 1);
        v = src[static_cast<std::size_t>(iy) * w + ix];
      } else {
        const double cy = std::clamp(fy, 0.0, h - 1.0);
        const double cx = std::clamp(fx, 0.0, w - 1.0);
        const int y0 = static_cast<int>(std::floor(cy));
        const int x0 = static_cast<int>(std::floor(cx));
        const int y1 = std::min(y0 + 1, h - 1);
        const int x1 = std::min(x0 + 1, w - 1);
        const double ty = cy - y0;
        const double tx = cx - x0;
        auto at = [&](int yy, int xx) { return src[static_cast<std::size_t>(yy) * w + xx]; };
        v = (1 - ty) * ((1 - tx) * at(y0, x0) + tx * at(y0, x1)) + ty * ((1 - tx) * at(y1, x0) + tx * at(y1, x1));
      }
      out[static_cast<std::size_t>(y) * ow + x] = v;
    }
  }
  return out;
}

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

ImageGrid preprocess(const ImageGrid& image, const PreprocessSpec& spec) {
  spec.validate();
  const int h = image.height();
  const int w = image.width();
  const int t = spec.target_size;
  if (std::min(h, w) < t) {
    throw ShapeError("preprocess: image " + std::to_string(h) + "x" + std::to_string(w) + " smaller than target " +
                     std::to_string(t));
  }
  // Work in the declared range mapped to [0, 1], without clamping.
  std::vector<double> unit(image.size());
  const double lo = image.range().lo;
  const double span = image.range().span();
  const auto values = image.values();
  for (std::size_t i = 0; i < unit.size(); ++i) unit[i] = (values[i] - lo) / span;

  int rh = t;
  int rw = t;
  if (h < w) {
    rw = static_cast<int>(std::lround(static_cast<double>(w) * t / h));
  } else {
    rh = static_cast<int>(std::lround(static_cast<double>(h) * t / w));
  }
  const std::vector<double> resized = (rh == h && rw == w) ? unit : resize(unit, h, w, rh, rw, spec.interpolation);
  const int oy = (rh - t) / 2;
  const int ox = (rw - t) / 2;
  ImageGrid out(t, t, kSignedRange);
  for (int y = 0; y < t; ++y) {
    for (int x = 0; x < t; ++x) {
      const double u = std::clamp(resized[static_cast<std::size_t>(y + oy) * rw + x + ox], 0.0, 1.0);
      out.at(y, x) = static_cast<float>(2.0 * u - 1.0);
    }
  }
  return out;
}

ImageGrid generate_phantom(std::uint64_t seed, int size) {
  if (size < 32) throw ParameterError("generate_phantom: size must be >= 32");
  Rng rng(derive_seed(seed, 0x70a47));
  std::vector<double> img(static_cast<std::size_t>(size) * size, 0.0);
  const double soft = 1.5 / size;  // edge softness in normalized units

  // Body: a large bright-ish ellipse that carries most of the structure.
  struct Ellipse {
    double cx, cy, rx, ry, angle, intensity;
  };
  std::vector<Ellipse> shapes;
  const double body_r = uniform(rng, 0.5, 0.72);
  shapes.push_back({uniform(rng, -0.08, 0.08), uniform(rng, -0.08, 0.08), body_r, body_r * uniform(rng, 0.7, 1.0),
                    uniform(rng, 0.0, std::numbers::pi), uniform(rng, 0.38, 0.55)});
  const int inner = std::uniform_int_distribution<int>(1, 4)(rng);
  for (int i = 0; i < inner; ++i) {
    const double r = uniform(rng, 0.06, 0.2);
    const double a = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double d = uniform(rng, 0.0, body_r * 0.6);
    shapes.push_back({shapes[0].cx + d * std::cos(a), shapes[0].cy + d * std::sin(a), r, r * uniform(rng, 0.5, 1.0),
                      uniform(rng, 0.0, std::numbers::pi), uniform(rng, -0.2, 0.45)});
  }
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double px = 2.0 * (x + 0.5) / size - 1.0;
      const double py = 2.0 * (y + 0.5) / size - 1.0;
      double v = 0.0;
      for (const auto& e : shapes) {
        const double ca = std::cos(e.angle);
        const double sa = std::sin(e.angle);
        const double u = (ca * (px - e.cx) + sa * (py - e.cy)) / e.rx;
        const double w = (-sa * (px - e.cx) + ca * (py - e.cy)) / e.ry;
        const double r = std::sqrt(u * u + w * w);
        v += e.intensity * (1.0 - smoothstep(1.0 - soft / std::min(e.rx, e.ry), 1.0 + soft / std::min(e.rx, e.ry), r));
      }
      img[static_cast<std::size_t>(y) * size + x] = v;
    }
  }

  // Ribbons: thin bright arcs (sinusoidal curves) with soft profiles.
  const int ribbons = std::uniform_int_distribution<int>(1, 2)(rng);
  for (int i = 0; i < ribbons; ++i) {
    const double angle = uniform(rng, 0.0, std::numbers::pi);
    const double offset = uniform(rng, -0.25, 0.25);
    const double amp = uniform(rng, 0.05, 0.15);
    const double freq = uniform(rng, 1.0, 3.0);
    const double width = uniform(rng, 0.015, 0.035);
    const double intensity = uniform(rng, 0.2, 0.4);
    const double half_len = uniform(rng, 0.25, 0.5);
    const double ca = std::cos(angle);
    const double sa = std::sin(angle);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double px = 2.0 * (x + 0.5) / size - 1.0 - shapes[0].cx;
        const double py = 2.0 * (y + 0.5) / size - 1.0 - shapes[0].cy;
        const double along = ca * px + sa * py;
        const double across = -sa * px + ca * py - offset - amp * std::sin(freq * std::numbers::pi * along);
        const double fade = 1.0 - smoothstep(half_len * 0.8, half_len, std::fabs(along));
        const double profile = std::exp(-(across * across) / (2.0 * width * width));
        img[static_cast<std::size_t>(y) * size + x] += intensity * profile * fade;
      }
    }
  }

  ImageGrid out(size, size, kUnitRange);
  auto values = out.values();
  for (std::size_t i = 0; i < img.size(); ++i) values[i] = static_cast<float>(std::clamp(img[i], 0.0, 1.0));
  return out;
}

// ---------------------------------------------------------------------------

std::string record_to_json_line(const PairRecord& r) {
  json segments = json::array();
  for (const auto& s : r.trajectory.segments) {
    segments.push_back({{"row_begin", s.row_begin},
                        {"row_end", s.row_end},
                        {"dx", s.dx},
                        {"dy", s.dy},
                        {"theta", s.theta}});
  }
  json j = {{"id", r.id},
            {"split", to_string(r.split)},
            {"clean_path", r.clean_path},
            {"corrupted_path", r.corrupted_path},
            {"gate_ssim", r.gate_ssim},
            {"seed", r.seed},
            {"trajectory", segments}};
  return j.dump();
}

PairRecord record_from_json_line(const std::string& line) {
  try {
    const json j = json::parse(line);
    PairRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = parse_split(j.at("split").get<std::string>());
    r.clean_path = j.at("clean_path").get<std::string>();
    r.corrupted_path = j.at("corrupted_path").get<std::string>();
    r.gate_ssim = j.at("gate_ssim").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("trajectory")) {
      r.trajectory.segments.push_back(MotionSegment{s.at("row_begin").get<int>(), s.at("row_end").get<int>(),
                                                    s.at("dx").get<double>(), s.at("dy").get<double>(),
                                                    s.at("theta").get<double>()});
    }
    return r;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed manifest record: ") + e.what());
  }
}

const DatasetManifest& Dataset::manifest(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

namespace {

KeyValues dataset_key_values(const BuildOptions& o) {
  return {{"gate.s0", format_double(o.gate.s0)},
          {"gate.s1", format_double(o.gate.s1)},
          {"gate.max_retries", std::to_string(o.gate.max_retries)},
          {"data.size", std::to_string(o.preprocess.target_size)},
          {"data.interpolation", to_string(o.preprocess.interpolation)}};
}

std::string pad_index(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 5 ? 5 - s.size() : 0, '0') + s;
}

}  // namespace

Dataset build_dataset(const DatasetSource& source, const BuildOptions& options, const fs::path& root) {
  options.gate.validate();
  options.preprocess.validate();
  const auto& f = options.splits;
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::fabs(f.train + f.val + f.test - 1.0) > 1e-9) {
    throw ParameterError("split fractions must be non-negative and sum to 1");
  }
  if (options.pairs_per_image < 1) throw ParameterError("pairs_per_image must be >= 1");

  // Clean identities, in a stable order.
  std::vector<std::string> ids;
  std::vector<fs::path> files;
  if (source.uses_directory()) {
    files = list_images(source.directory);
    for (const auto& p : files) ids.push_back(p.filename().string());
  } else {
    for (int i = 0; i < source.phantom_count; ++i) {
      ids.push_back("phantom_" + pad_index(source.phantom_first_seed + static_cast<std::uint64_t>(i)));
    }
  }
  if (ids.empty()) throw ParameterError("build_dataset: no clean sources");

  // Split by identity: seeded shuffle, then contiguous fractions.
  std::vector<std::size_t> order(ids.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(options.seed, 0x5911));
  std::shuffle(order.begin(), order.end(), split_rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::lround(f.train * n));
  const auto n_val = std::min(ids.size() - n_train, static_cast<std::size_t>(std::lround(f.val * n)));
  std::vector<Split> split_of(ids.size(), Split::Test);
  for (std::size_t k = 0; k < order.size(); ++k) {
    split_of[order[k]] = k < n_train ? Split::Train : (k < n_train + n_val ? Split::Val : Split::Test);
  }

  fs::create_directories(root / "clean");
  fs::create_directories(root / "corrupted");
  Dataset ds;
  ds.root = root;
  for (auto* m : {&ds.train, &ds.val, &ds.test}) {
    m->gate = options.gate;
    m->preprocess = options.preprocess;
  }
  ds.train.split = Split::Train;
  ds.val.split = Split::Val;
  ds.test.split = Split::Test;

  std::vector<std::string> failures;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    ImageGrid raw;
    if (source.uses_directory()) {
      raw = load_image(files[i]);
      raw.set_range(source.directory_range);
    } else {
      raw = generate_phantom(source.phantom_first_seed + i, source.phantom_size);
    }
    const ImageGrid clean = preprocess(raw, options.preprocess);
    const std::string clean_rel = "clean/" + ids[i];
    write_image_pair_files(root / clean_rel, clean);
    for (int k = 0; k < options.pairs_per_image; ++k) {
      const std::uint64_t pair_seed = derive_seed(options.seed, i * 1000003ULL + static_cast<std::uint64_t>(k));
      const std::string pid = options.pairs_per_image == 1 ? ids[i] : ids[i] + "_" + std::to_string(k);
      try {
        GeneratedPair pair = generate_pair(clean, options.gate, pair_seed, options.generation);
        const std::string corrupted_rel = "corrupted/" + pid;
        write_image_pair_files(root / corrupted_rel, pair.corrupted);
        PairRecord rec{pid, split_of[i], clean_rel, corrupted_rel, pair.gate_ssim, std::move(pair.trajectory),
                       pair_seed};
        switch (split_of[i]) {
          case Split::Train: ds.train.records.push_back(std::move(rec)); break;
          case Split::Val: ds.val.records.push_back(std::move(rec)); break;
          case Split::Test: ds.test.records.push_back(std::move(rec)); break;
        }
      } catch (const GateFailure& e) {
        failures.push_back(pid + " (closest SSIM " + std::to_string(e.closest_ssim()) + ")");
      }
    }
  }
  const double total = static_cast<double>(ids.size() * static_cast<std::size_t>(options.pairs_per_image));
  if (!failures.empty() && static_cast<double>(failures.size()) / total > options.failure_tolerance) {
    std::string msg = "dataset build: " + std::to_string(failures.size()) + " gate failures exceed tolerance:";
    for (const auto& s : failures) msg += "\n  " + s;
    throw BuildError(msg);
  }

  std::ofstream manifest(root / "manifest.jsonl");
  if (!manifest) throw IoError("cannot write manifest in " + root.string());
  for (const auto* m : {&ds.train, &ds.val, &ds.test}) {
    for (const auto& r : m->records) manifest << record_to_json_line(r) << "\n";
  }
  std::ofstream meta(root / "dataset.cfg");
  meta << format_key_values(dataset_key_values(options));
  return ds;
}

Dataset load_dataset(const fs::path& root) {
  std::ifstream in(root / "manifest.jsonl");
  if (!in) throw IoError("no manifest.jsonl in " + root.string());
  Dataset ds;
  ds.root = root;
  ds.train.split = Split::Train;
  ds.val.split = Split::Val;
  ds.test.split = Split::Test;
  if (std::ifstream meta(root / "dataset.cfg"); meta) {
    std::stringstream ss;
    ss << meta.rdbuf();
    const KeyValues kv = parse_key_values(ss.str());
    GateSpec gate{kv_double(kv, "gate.s0"), kv_double(kv, "gate.s1"), kv_int(kv, "gate.max_retries")};
    PreprocessSpec pre{kv_int(kv, "data.size"), parse_interpolation(kv_string(kv, "data.interpolation"))};
    for (auto* m : {&ds.train, &ds.val, &ds.test}) {
      m->gate = gate;
      m->preprocess = pre;
    }
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    PairRecord r = record_from_json_line(line);
    switch (r.split) {
      case Split::Train: ds.train.records.push_back(std::move(r)); break;
      case Split::Val: ds.val.records.push_back(std::move(r)); break;
      case Split::Test: ds.test.records.push_back(std::move(r)); break;
    }
  }
  return ds;
}

std::vector<LoadedPair> load_pairs(const fs::path& root, const DatasetManifest& manifest) {
  std::vector<LoadedPair> out;
  out.reserve(manifest.records.size());
  for (const auto& r : manifest.records) {
    out.push_back(LoadedPair{read_sidecar(root / (r.clean_path + ".f32")),
                             read_sidecar(root / (r.corrupted_path + ".f32"))});
  }
  return out;
}

}  // namespace flowi2i
