#include "flowi2i/archive.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "flowi2i/errors.hpp"

namespace flowi2i {
namespace {

constexpr char kMagic[8] = {'F', 'I', '2', 'I', 'A', 'R', 'C', 'H'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated archive");
  return v;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write archive " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, archive.config_text.size());
  out.write(archive.config_text.data(), static_cast<std::streamsize>(archive.config_text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(archive.arrays.size()));
  for (const auto& [name, m] : archive.arrays) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(m.cols()));
    out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
  }
  out.flush();
  if (!out) throw IoError("failed writing archive " + path.string());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read archive " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not an archive: " + path.string());
  }
  if (get<std::uint32_t>(in) != kVersion) throw IoError("unsupported archive version");
  Archive archive;
  const auto text_len = get<std::uint64_t>(in);
  archive.config_text.resize(text_len);
  in.read(archive.config_text.data(), static_cast<std::streamsize>(text_len));
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(float)));
    if (!in) throw IoError("truncated array '" + name + "' in " + path.string());
    archive.arrays.emplace_back(std::move(name), std::move(m));
  }
  return archive;
}

}  // namespace flowi2i
