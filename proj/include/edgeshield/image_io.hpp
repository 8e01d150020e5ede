#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgeshield/image_shape.hpp"

namespace edgeshield {

class ImageIoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 8-bit image, channel-interleaved (gray: 1 channel, RGB: 3 channels).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Decodes binary PGM (P5, maxval <= 255) or PNG (8-bit gray or RGB),
/// chosen by file signature.
Image8 read_image(const std::filesystem::path& path);

/// Writes PNG or PGM depending on the extension (.png / .pgm). PGM output
/// requires a single channel. The file is written to a temporary name and
/// renamed into place.
void write_image(const std::filesystem::path& path, const Image8& image);

std::vector<std::uint8_t> encode_pgm(const Image8& image);
Image8 decode_pgm(std::span<const std::uint8_t> bytes);

/// Interleaved 8-bit -> channel-major floats in [0, 1].
std::vector<float> to_planar_unit(const Image8& image);
/// Channel-major floats in [0, 1] -> interleaved 8-bit (rounded, clamped).
Image8 from_planar_unit(std::span<const float> chw, ImageShape shape);

/// Writes `bytes` to `path` via a temporary file and rename.
void atomic_write(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void atomic_write(const std::filesystem::path& path, const std::string& text);

}  // namespace edgeshield
