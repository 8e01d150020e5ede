#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "edgeshield/model.hpp"

namespace edgeshield {

// Container layout, all integers little-endian:
//   "EDGS" | u32 version | u32 header length | JSON header | f32 payload | u32 CRC-32
// The CRC covers every preceding byte. The header records architecture,
// input shape, class count, init seed and a table of (name, shape, offset).

inline constexpr std::uint32_t kModelFormatVersion = 1;

class ModelFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class BadMagicError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class VersionMismatchError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class ChecksumError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};
class ArchitectureMismatchError : public ModelFormatError {
 public:
  using ModelFormatError::ModelFormatError;
};

std::vector<std::uint8_t> encode_model(const Model<float>& model);
/// Throws BadMagicError, ChecksumError (including truncation),
/// VersionMismatchError, ArchitectureMismatchError or ModelFormatError.
Model<float> decode_model(std::span<const std::uint8_t> bytes,
                          const std::optional<std::string>& expected_architecture = std::nullopt);

void save_model(const Model<float>& model, const std::filesystem::path& path);
Model<float> load_model(const std::filesystem::path& path,
                        const std::optional<std::string>& expected_architecture = std::nullopt);

/// FNV-1a 64 of a file's bytes as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace edgeshield
