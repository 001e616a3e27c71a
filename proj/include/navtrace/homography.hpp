#pragma once

#include "navtrace/geometry.hpp"

#include <span>

namespace navtrace {

/// Normalized DLT homography mapping `from` (plane coordinates) onto `to`.
/// Needs at least four correspondences in general position. The result is
/// scaled so that H(2,2) == 1 when that entry is not near zero.
Mat3 estimate_homography(std::span<const Vec2> from, std::span<const Vec2> to);

}  // namespace navtrace
