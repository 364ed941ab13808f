#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pcbear {

// Keep in sync with pcbear_status in pcbear.h (values are shared).
enum class ErrorCode : int {
  kOk = 0,
  kMissingFile = 1,
  kShapeMismatch = 2,
  kCorruptTensor = 3,
  kUnknownLabel = 4,
  kIoFailure = 5,
  kBadConfig = 6,
  kBadManifest = 7,
  kDegeneratePose = 8,
  kWindowTooLong = 9,
  kTooFewWindows = 10,
  kLengthMismatch = 11,
  kNoSuchPartition = 12,
  kMissingClass = 13,
  kNonFinite = 14,
  kEmptySplit = 15,
  kBadClass = 16,
  kBadConceptId = 17,
  kEmptyClass = 18,
  kUnknownVideo = 19,
  kInvalidArgument = 20,
  kInternal = 21,
};

std::string_view to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Pipeline stage that raised the error ("ingest", "cluster", ...); empty
  // when raised outside of run_pipeline.
  const std::string& stage() const noexcept { return stage_; }

  Error with_stage(std::string stage) const {
    Error copy = *this;
    copy.stage_ = std::move(stage);
    return copy;
  }

 private:
  ErrorCode code_;
  std::string stage_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace pcbear
