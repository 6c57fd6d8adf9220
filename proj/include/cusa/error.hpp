#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace cusa {

enum class ErrorKind {
  // numeric kernels
  ZeroRow,
  DimensionMismatch,
  ShapeMismatch,
  NotNormalized,
  NonPositiveTemperature,
  InvalidDistribution,
  DegenerateBatch,
  NegativeWeight,
  InvalidDimension,
  NumericFailure,
  // training
  InvalidConfig,
  BatchTooLarge,
  MissingFeature,
  // metrics
  EmptyGallery,
  EmptyRelevance,
  OutOfRange,
  DegenerateInput,
  // files
  IoFailure,
  BadMagic,
  VersionUnsupported,
  DuplicateId,
  TruncatedFile,
  NonFiniteValue,
  EmptyTable,
  MalformedLine,
  UnknownId,
};

std::string_view to_string(ErrorKind kind);

/// Every failure in the library is reported through this type. `position`
/// carries a row index, byte offset or 1-based line number depending on kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::uint64_t> position = std::nullopt);

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::uint64_t> position() const noexcept { return position_; }

 private:
  ErrorKind kind_;
  std::optional<std::uint64_t> position_;
};

}  // namespace cusa
