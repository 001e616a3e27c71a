#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace navtrace {

enum class ErrorCode {
  kBehindCamera,
  kNoConvergence,
  kDegenerateViews,
  kTooFewViews,
  kDivergedRefinement,
  kDiverged,
  kBadCorners,
  kZeroDistance,
  kEmptyInput,
  kNonPositiveSigma,
  kFrameMismatch,
  kNoEstimates,
  kNoHeadTags,
  kNoCoilTag,
  kNoIntersection,
  kMissingPose,
  kStreamMismatch,
  kInvalidArgument,
  kParseError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Exception carrying a machine-readable code; every recoverable failure in
/// the library is reported through this type.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace navtrace
