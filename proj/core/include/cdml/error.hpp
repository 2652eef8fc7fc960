#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cdml {

enum class ErrorKind {
  // input / validation
  IoError,
  MissingColumn,
  InvalidValue,
  TreatmentInconsistent,
  ZInconsistent,
  RangeViolation,
  EmptyDataset,
  DegenerateTreatment,
  TooFewClusters,
  InvalidArgument,
  RankMismatch,
  SpecMismatch,
  // numerical
  SingularDesign,
  RankDeficient,
  SingularJ,
  SingularRestriction,
  ZeroVariance,
  ZeroSE,
};

enum class ErrorClass { input, numeric };

std::string_view to_string(ErrorKind kind) noexcept;
ErrorClass classify(ErrorKind kind) noexcept;

// All library failures are reported through this exception type; the kind
// decides the CLI exit code (input -> 2, numeric -> 3).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorClass error_class() const noexcept { return classify(kind_); }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace cdml
