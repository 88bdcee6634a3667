#include "flowi2i/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace fs = std::filesystem;

namespace {

constexpr char kSidecarMagic[4] = {'F', '3', '2', 'G'};

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

// Skips whitespace and '#' comments in a PNM header.
int read_header_int(std::istream& in) {
  int c = in.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  in >> v;
  if (!in || v < 0) throw IoError("malformed PGM header");
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated sidecar");
  return v;
}

}  // namespace

void write_pgm(const fs::path& path, const ImageGrid& image) {
  auto out = open_out(path);
  out << "P5\n" << image.width() << " " << image.height() << "\n65535\n";
  const auto unit = image.unit_values();
  std::vector<unsigned char> bytes(unit.size() * 2);
  for (std::size_t i = 0; i < unit.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(std::lround(unit[i] * 65535.0));
    bytes[2 * i] = static_cast<unsigned char>(v >> 8);
    bytes[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ImageGrid read_pgm(const fs::path& path) {
  auto in = open_in(path);
  std::string magic(2, '\0');
  in.read(magic.data(), 2);
  if (magic != "P5" && magic != "P2") throw IoError("not a PGM file: " + path.string());
  const int width = read_header_int(in);
  const int height = read_header_int(in);
  const int maxval = read_header_int(in);
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 65535) {
    throw IoError("unsupported PGM geometry in " + path.string());
  }
  ImageGrid image(height, width, kUnitRange);
  auto values = image.values();
  if (magic == "P2") {
    for (float& v : values) v = static_cast<float>(read_header_int(in)) / maxval;
    return image;
  }
  in.get();  // single whitespace after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> bytes(values.size() * bpp);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!in) throw IoError("truncated PGM data in " + path.string());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const unsigned raw = bpp == 2 ? (bytes[2 * i] << 8) | bytes[2 * i + 1] : bytes[i];
    values[i] = static_cast<float>(raw) / static_cast<float>(maxval);
  }
  return image;
}

void write_sidecar(const fs::path& path, const ImageGrid& image) {
  auto out = open_out(path);
  out.write(kSidecarMagic, 4);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.height()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(image.width()));
  put<float>(out, image.range().lo);
  put<float>(out, image.range().hi);
  const auto values = image.values();
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
}

ImageGrid read_sidecar(const fs::path& path) {
  auto in = open_in(path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kSidecarMagic, 4) != 0) {
    throw IoError("not a float32 sidecar: " + path.string());
  }
  const auto height = get<std::uint32_t>(in);
  const auto width = get<std::uint32_t>(in);
  const float lo = get<float>(in);
  const float hi = get<float>(in);
  ImageGrid image(static_cast<int>(height), static_cast<int>(width), ValueRange{lo, hi});
  auto values = image.values();
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw IoError("truncated sidecar data in " + path.string());
  return image;
}

void write_image_pair_files(const fs::path& stem, const ImageGrid& image) {
  fs::path pgm = stem;
  pgm += ".pgm";
  fs::path raw = stem;
  raw += ".f32";
  write_pgm(pgm, image);
  write_sidecar(raw, image);
}

ImageGrid load_image(const fs::path& path) {
  if (path.extension() == ".f32") return read_sidecar(path);
  if (path.extension() == ".pgm") return read_pgm(path);
  fs::path raw = path;
  raw += ".f32";
  if (fs::exists(raw)) return read_sidecar(raw);
  fs::path pgm = path;
  pgm += ".pgm";
  if (fs::exists(pgm)) return read_pgm(pgm);
  throw IoError("no image found for " + path.string());
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::set<fs::path> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension();
    if (ext == ".f32" || ext == ".pgm") {
      fs::path stem = entry.path();
      stem.replace_extension();
      stems.insert(stem);
    }
  }
  return {stems.begin(), stems.end()};
}

ImageGrid tile_row(const std::vector<ImageGrid>& tiles) {
  if (tiles.empty()) throw ParameterError("tile_row: no tiles");
  const int h = tiles.front().height();
  const int w = tiles.front().width();
  const int n = static_cast<int>(tiles.size());
  ImageGrid out(h, n * w + (n - 1), kUnitRange, 1.0f);
  for (int i = 0; i < n; ++i) {
    if (tiles[i].height() != h || tiles[i].width() != w) throw ShapeError("tile_row: unequal tiles");
    const auto unit = tiles[i].unit_values();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        out.at(y, i * (w + 1) + x) = static_cast<float>(unit[static_cast<std::size_t>(y) * w + x]);
      }
    }
  }
  return out;
}

ImageGrid stack_rows(const std::vector<ImageGrid>& rows) {
  if (rows.empty()) throw ParameterError("stack_rows: no rows");
  int width = 0;
  int height = -1;
  for (const auto& r : rows) {
    width = std::max(width, r.width());
    height += r.height() + 1;
  }
  ImageGrid out(height, width, kUnitRange, 1.0f);
  int y0 = 0;
  for (const auto& r : rows) {
    const auto unit = r.unit_values();
    for (int y = 0; y < r.height(); ++y) {
      for (int x = 0; x < r.width(); ++x) {
        out.at(y0 + y, x) = static_cast<float>(unit[static_cast<std::size_t>(y) * r.width() + x]);
      }
    }
    y0 += r.height() + 1;
  }
  return out;
}

}  // namespace flowi2i
