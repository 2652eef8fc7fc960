#include "cdml/error.hpp"

namespace cdml {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::InvalidValue: return "InvalidValue";
    case ErrorKind::TreatmentInconsistent: return "TreatmentInconsistent";
    case ErrorKind::ZInconsistent: return "ZInconsistent";
    case ErrorKind::RangeViolation: return "RangeViolation";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DegenerateTreatment: return "DegenerateTreatment";
    case ErrorKind::TooFewClusters: return "TooFewClusters";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::RankMismatch: return "RankMismatch";
    case ErrorKind::SpecMismatch: return "SpecMismatch";
    case ErrorKind::SingularDesign: return "SingularDesign";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::SingularJ: return "SingularJ";
    case ErrorKind::SingularRestriction: return "SingularRestriction";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::ZeroSE: return "ZeroSE";
  }
  return "Unknown";
}

ErrorClass classify(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::SingularDesign:
    case ErrorKind::RankDeficient:
    case ErrorKind::SingularJ:
    case ErrorKind::SingularRestriction:
    case ErrorKind::ZeroVariance:
    case ErrorKind::ZeroSE:
      return ErrorClass::numeric;
    default:
      return ErrorClass::input;
  }
}

}  // namespace cdml
