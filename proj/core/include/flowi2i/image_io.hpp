#pragma once

#include <filesystem>
#include <vector>

#include "flowi2i/grid.hpp"

namespace flowi2i {

// Binary PGM (P5). 16-bit on write; 8- and 16-bit (and ASCII P2) on read.
// The declared range is mapped onto [0, maxval]; reads come back in [0, 1].
void write_pgm(const std::filesystem::path& path, const ImageGrid& image);
ImageGrid read_pgm(const std::filesystem::path& path);

// Exact float32 sidecar: "F32G" magic, u32 height, u32 width, f32 lo, f32 hi,
// then row-major little-endian float32 samples.
void write_sidecar(const std::filesystem::path& path, const ImageGrid& image);
ImageGrid read_sidecar(const std::filesystem::path& path);

/// Writes `<stem>.pgm` and `<stem>.f32` next to each other.
void write_image_pair_files(const std::filesystem::path& stem, const ImageGrid& image);

/// Loads an image by stem or path: prefers the .f32 sidecar, else the .pgm.
ImageGrid load_image(const std::filesystem::path& path);

/// Image stems (sorted) in a directory, from .f32 and .pgm files.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

/// Horizontal strip of equally sized tiles separated by a one-pixel gutter.
ImageGrid tile_row(const std::vector<ImageGrid>& tiles);
/// Vertical stack of rows of (possibly) different widths, left aligned.
ImageGrid stack_rows(const std::vector<ImageGrid>& rows);

}  // namespace flowi2i
