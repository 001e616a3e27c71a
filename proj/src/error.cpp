#include "navtrace/error.hpp"

namespace navtrace {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kDegenerateViews: return "DegenerateViews";
    case ErrorCode::kTooFewViews: return "TooFewViews";
    case ErrorCode::kDivergedRefinement: return "DivergedRefinement";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kBadCorners: return "BadCorners";
    case ErrorCode::kZeroDistance: return "ZeroDistance";
    case ErrorCode::kEmptyInput: return "EmptyInput";
    case ErrorCode::kNonPositiveSigma: return "NonPositiveSigma";
    case ErrorCode::kFrameMismatch: return "FrameMismatch";
    case ErrorCode::kNoEstimates: return "NoEstimates";
    case ErrorCode::kNoHeadTags: return "NoHeadTags";
    case ErrorCode::kNoCoilTag: return "NoCoilTag";
    case ErrorCode::kNoIntersection: return "NoIntersection";
    case ErrorCode::kMissingPose: return "MissingPose";
    case ErrorCode::kStreamMismatch: return "StreamMismatch";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace navtrace
