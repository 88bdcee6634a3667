#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowi2i/tape.hpp"

namespace flowi2i {

// Single-file checkpoint archive.
//
//   "FI2IARCH"                    8-byte magic
//   u32 version (= 1)
//   u64 n, n bytes                key-value config text
//   u32 count
//   count x { u32 name_len, name bytes, u32 rows, u32 cols, rows*cols f32 }
//
// All integers and floats are little-endian; arrays are row-major.
struct Archive {
  std::string config_text;
  std::vector<std::pair<std::string, Matrix>> arrays;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

}  // namespace flowi2i
