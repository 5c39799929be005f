#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "jcapa/label_map.hpp"
#include "jcapa/network.hpp"
#include "jcapa/tensor.hpp"

// JCPT tensor files:
//   "JCPT" | version 0x01 | dtype (0 = float32, 1 = uint8) | ndim (>= 1)
//   | ndim × u32 dims | row-major payload, all little-endian.
// JCKP checkpoints:
//   "JCKP" | version 0x01 | u32 entry count
//   | per entry: u16 name length, UTF-8 name, embedded JCPT blob.
// Checkpoints carry one extra uint8 entry, "__meta__", holding the network
// config and variant as JSON.
namespace jcapa::io {

enum class DType : std::uint8_t { kFloat32 = 0, kUInt8 = 1 };

inline constexpr std::uint8_t kFormatVersion = 0x01;

/// Decoded JCPT payload; exactly one of f32/u8 is populated.
struct Array {
  DType dtype = DType::kFloat32;
  Shape dims;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;
};

std::vector<std::uint8_t> encode(const Tensor& t);
std::vector<std::uint8_t> encode(const LabelMap& m);
/// Decodes one JCPT blob starting at `offset` and advances it. Throws
/// FormatError with the failing byte offset.
Array decode(std::span<const std::uint8_t> bytes, std::size_t& offset);
Array decode(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
/// Float32 files only.
Tensor read_tensor(const std::filesystem::path& path);
void write_label_map(const std::filesystem::path& path, const LabelMap& m);
/// Uint8 files only.
LabelMap read_label_map(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_checkpoint(const ModelState& m);
ModelState decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelState& m);
ModelState load_checkpoint(const std::filesystem::path& path);
/// Also rejects checkpoints whose config or variant differ from the
/// expected ones (CompatibilityError).
ModelState load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected,
                           Variant expected_variant);

}  // namespace jcapa::io
