#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nodulekit {

// Keep in sync with nk_status in include/nodulekit/nodulekit.h.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIo,
  kUnsupportedElementType,
  kUnsupportedCompression,
  kPayloadSizeMismatch,
  kMissingRequiredKey,
  kUnsupportedDimensionality,
  kInvalidGeometry,
  kDegenerateWindow,
  kMalformedRow,
  kUnknownHeader,
  kEmptyInput,
  kOutOfBounds,
  kWindowLargerThanVolume,
  kNonAxisAligned,
  kBadMagic,
  kUnsupportedVersion,
  kCorruptArchive,
  kMissingTensor,
  kShapeMismatch,
  kNonDivisibleInput,
  kInvalidDistribution,
  kEmptyTrainingSet,
  kKExceedsDataset,
  kLengthMismatch,
  kEmptyEvaluation,
  kSingleClassInput,
  kMissingArtifact,
  kVersionMismatch,
  kInternal,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace nodulekit
