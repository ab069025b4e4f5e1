#pragma once

#include <stdexcept>
#include <string>

namespace ist {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct UnknownOp : std::runtime_error {
  explicit UnknownOp(const std::string& m) : std::runtime_error(m) {}
};
struct NonScalarLoss : std::runtime_error {
  explicit NonScalarLoss(const std::string& m) : std::runtime_error(m) {}
};
struct MissingGradient : std::runtime_error {
  explicit MissingGradient(const std::string& m) : std::runtime_error(m) {}
};
struct DegenerateRepresentation : std::runtime_error {
  explicit DegenerateRepresentation(const std::string& m)
      : std::runtime_error(m) {}
};
struct DegenerateConfiguration : std::runtime_error {
  explicit DegenerateConfiguration(const std::string& m)
      : std::runtime_error(m) {}
};
struct UnknownCategory : std::runtime_error {
  explicit UnknownCategory(const std::string& m) : std::runtime_error(m) {}
};
struct InsufficientVisiblePoints : std::runtime_error {
  explicit InsufficientVisiblePoints(const std::string& m)
      : std::runtime_error(m) {}
};
struct TooFewPoints : std::runtime_error {
  explicit TooFewPoints(const std::string& m) : std::runtime_error(m) {}
};
struct TrainingOnly : std::runtime_error {
  explicit TrainingOnly(const std::string& m) : std::runtime_error(m) {}
};
struct IoFailure : std::runtime_error {
  explicit IoFailure(const std::string& m) : std::runtime_error(m) {}
};
struct FormatVersionMismatch : std::runtime_error {
  explicit FormatVersionMismatch(const std::string& m)
      : std::runtime_error(m) {}
};
struct ChecksumMismatch : std::runtime_error {
  explicit ChecksumMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigHashMismatch : std::runtime_error {
  explicit ConfigHashMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct LengthMismatch : std::runtime_error {
  explicit LengthMismatch(const std::string& m) : std::runtime_error(m) {}
};
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace ist
