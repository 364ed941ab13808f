#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace pcbear {

// Raw little-endian float32 files, row-major, no header. Shapes always come
// from a sidecar (manifest or model.json).
std::vector<float> read_f32(const std::filesystem::path& path);
void write_f32(const std::filesystem::path& path, std::span<const float> values);

// Reads and checks element count (ShapeMismatch) and finiteness (CorruptTensor).
std::vector<float> read_f32_checked(const std::filesystem::path& path,
                                    std::size_t expected_count,
                                    const char* what);

bool all_finite(std::span<const float> values) noexcept;

}  // namespace pcbear
