#pragma once

#include "tslt/models.hpp"
#include "tslt/preprocess.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tslt {

enum class Task : std::uint8_t { multiclass = 0, binary = 1 };

std::string to_string(Task task);
Task parse_task(const std::string& name);

inline constexpr std::uint16_t kBundleVersion = 1;

/// The deployable unit: weights, fitted preprocessing and class names.
struct ModelBundle {
    Task task = Task::multiclass;
    ModelParams params;
    PreprocessState preprocess;
    std::vector<std::string> class_names;
    std::uint16_t format_version = kBundleVersion;

    bool operator==(const ModelBundle&) const = default;
};

/// Byte layout (integers little-endian):
///
///   "TSLT" | version u16 | architecture u8 | task u8 | input_dim u32 | num_classes u32
///   | class names: num_classes × (u32 length, UTF-8 bytes)
///   | preprocess state (see encode_preprocess)
///   | tensor count u32 | per tensor: layer id u8, rows u32, cols u32, rows·cols × f32
///   | CRC-32 of every preceding byte
///
/// Weights are stored at 32-bit precision; decode(encode(b)) reproduces b
/// after quantize_to_float.
std::vector<std::uint8_t> encode_bundle(const ModelBundle& bundle);
ModelBundle decode_bundle(std::span<const std::uint8_t> bytes);

void save_bundle(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_bundle(const std::filesystem::path& path);

/// Bytes taken by the trainable weights alone (4 per parameter).
std::size_t weight_payload_bytes(const ModelParams& params);

}  // namespace tslt
