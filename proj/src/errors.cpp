#include "latprobe/errors.hpp"

namespace latprobe {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnbalancedBracket: return "UnbalancedBracket";
    case ErrorKind::EmptyToken: return "EmptyToken";
    case ErrorKind::UnknownToken: return "UnknownToken";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::RowCountMismatch: return "RowCountMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SplitMismatch: return "SplitMismatch";
    case ErrorKind::TooFewRows: return "TooFewRows";
    case ErrorKind::NoTargets: return "NoTargets";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::MergeConflict: return "MergeConflict";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::NonFiniteInput: return "NonFiniteInput";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ZeroVarianceTarget: return "ZeroVarianceTarget";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::ZeroNormVector: return "ZeroNormVector";
    case ErrorKind::ZeroDirection: return "ZeroDirection";
    case ErrorKind::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorKind::AllMasked: return "AllMasked";
    case ErrorKind::AllDecodesFailed: return "AllDecodesFailed";
    case ErrorKind::InsaneGraph: return "InsaneGraph";
    case ErrorKind::StageFailure: return "StageFailure";
  }
  return "Unknown";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SingularSystem:
    case ErrorKind::NonFiniteInput:
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::ZeroVarianceTarget:
    case ErrorKind::ZeroVariance:
    case ErrorKind::ZeroNormVector:
    case ErrorKind::ZeroDirection:
    case ErrorKind::NonPositiveVariance:
    case ErrorKind::AllMasked:
    case ErrorKind::AllDecodesFailed:
    case ErrorKind::InsaneGraph:
      return 3;
    case ErrorKind::StageFailure:
      return 4;
    default:
      return 2;
  }
}

}  // namespace latprobe
