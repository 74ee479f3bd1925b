#include "common/error.hpp"

namespace nodulekit {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kUnsupportedElementType: return "UnsupportedElementType";
    case ErrorCode::kUnsupportedCompression: return "UnsupportedCompression";
    case ErrorCode::kPayloadSizeMismatch: return "PayloadSizeMismatch";
    case ErrorCode::kMissingRequiredKey: return "MissingRequiredKey";
    case ErrorCode::kUnsupportedDimensionality: return "UnsupportedDimensionality";
    case ErrorCode::kInvalidGeometry: return "InvalidGeometry";
    case ErrorCode::kDegenerateWindow: return "DegenerateWindow";
    case ErrorCode::kMalformedRow: return "MalformedRow";
    case ErrorCode::kUnknownHeader: return "UnknownHeader";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kWindowLargerThanVolume: return "WindowLargerThanVolume";
    case ErrorCode::kNonAxisAligned: return "NonAxisAligned";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kCorruptArchive: return "CorruptArchive";
    case ErrorCode::kMissingTensor: return "MissingTensor";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonDivisibleInput: return "NonDivisibleInput";
    case ErrorCode::kInvalidDistribution: return "InvalidDistribution";
    case ErrorCode::kEmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::kKExceedsDataset: return "KExceedsDataset";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kEmptyEvaluation: return "EmptyEvaluation";
    case ErrorCode::kSingleClassInput: return "SingleClassInput";
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kVersionMismatch: return "VersionMismatch";
    case ErrorCode::kInternal: return "InternalError";
  }
  return "Unknown";
}

}  // namespace nodulekit
