#include "cusa/error.hpp"

namespace cusa {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NotNormalized: return "NotNormalized";
    case ErrorKind::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorKind::InvalidDistribution: return "InvalidDistribution";
    case ErrorKind::DegenerateBatch: return "DegenerateBatch";
    case ErrorKind::NegativeWeight: return "NegativeWeight";
    case ErrorKind::InvalidDimension: return "InvalidDimension";
    case ErrorKind::NumericFailure: return "NumericFailure";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::BatchTooLarge: return "BatchTooLarge";
    case ErrorKind::MissingFeature: return "MissingFeature";
    case ErrorKind::EmptyGallery: return "EmptyGallery";
    case ErrorKind::EmptyRelevance: return "EmptyRelevance";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::DegenerateInput: return "DegenerateInput";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::EmptyTable: return "EmptyTable";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::UnknownId: return "UnknownId";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message,
             std::optional<std::uint64_t> position)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message),
      kind_(kind),
      position_(position) {}

}  // namespace cusa
