#include "pcbear/tensor_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "pcbear/error.hpp"

namespace pcbear {

namespace {

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

void to_little_endian(std::vector<float>& values) {
  if constexpr (std::endian::native == std::endian::big) {
    for (auto& v : values) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
      v = std::bit_cast<float>(byteswap32(bits));
    }
  }
}

}  // namespace

std::vector<float> read_f32(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    fail(ErrorCode::kMissingFile, "missing file: " + path.string());
  }
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) fail(ErrorCode::kIoFailure, "cannot stat " + path.string());
  if (bytes % sizeof(float) != 0) {
    fail(ErrorCode::kShapeMismatch,
         path.string() + ": size " + std::to_string(bytes) + " is not a multiple of 4");
  }
  std::vector<float> values(bytes / sizeof(float));
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIoFailure, "cannot open " + path.string());
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
  if (!in) fail(ErrorCode::kIoFailure, "short read on " + path.string());
  to_little_endian(values);
  return values;
}

void write_f32(const std::filesystem::path& path, std::span<const float> values) {
  std::vector<float> le(values.begin(), values.end());
  to_little_endian(le);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIoFailure, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(le.data()),
            static_cast<std::streamsize>(le.size() * sizeof(float)));
  out.flush();
  if (!out) fail(ErrorCode::kIoFailure, "write failed for " + path.string());
}

std::vector<float> read_f32_checked(const std::filesystem::path& path,
                                    std::size_t expected_count, const char* what) {
  auto values = read_f32(path);
  if (values.size() != expected_count) {
    fail(ErrorCode::kShapeMismatch,
         std::string(what) + " " + path.string() + ": expected " +
             std::to_string(expected_count) + " floats, found " +
             std::to_string(values.size()));
  }
  if (!all_finite(values)) {
    fail(ErrorCode::kCorruptTensor, std::string(what) + " " + path.string() + " has NaN/Inf");
  }
  return values;
}

bool all_finite(std::span<const float> values) noexcept {
  return std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); });
}

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kOk: return "Ok";
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kCorruptTensor: return "CorruptTensor";
    case ErrorCode::kUnknownLabel: return "UnknownLabel";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kBadManifest: return "BadManifest";
    case ErrorCode::kDegeneratePose: return "DegeneratePose";
    case ErrorCode::kWindowTooLong: return "WindowTooLong";
    case ErrorCode::kTooFewWindows: return "TooFewWindows";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kNoSuchPartition: return "NoSuchPartition";
    case ErrorCode::kMissingClass: return "MissingClass";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kBadClass: return "BadClass";
    case ErrorCode::kBadConceptId: return "BadConceptId";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kUnknownVideo: return "UnknownVideo";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInternal: return "Internal";
  }
  return "Unknown";
}

}  // namespace pcbear
