#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace latprobe {

/// Failure categories raised by the toolkit. The CLI maps each category to
/// an exit code (see `exit_code`).
enum class ErrorKind {
  // input / format problems
  UnbalancedBracket,
  EmptyToken,
  UnknownToken,
  HeaderMismatch,
  RowCountMismatch,
  DimensionMismatch,
  SplitMismatch,
  TooFewRows,
  NoTargets,
  InvalidArgument,
  IoError,
  MergeConflict,
  // numerical problems
  SingularSystem,
  NonFiniteInput,
  NonFiniteLoss,
  ZeroVarianceTarget,
  ZeroVariance,
  ZeroNormVector,
  ZeroDirection,
  NonPositiveVariance,
  AllMasked,
  AllDecodesFailed,
  InsaneGraph,
  // pipeline
  StageFailure,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// 2 input error, 3 numerical failure, 4 partial-stage failure.
int exit_code(ErrorKind kind);

}  // namespace latprobe
