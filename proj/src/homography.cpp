#include "navtrace/homography.hpp"

#include "navtrace/error.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace navtrace {

namespace {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
Mat3 normalizing_transform(std::span<const Vec2> pts) {
  Vec2 centroid = Vec2::Zero();
  for (const auto& p : pts) centroid += p;
  centroid /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (p - centroid).norm();
  mean_dist /= static_cast<double>(pts.size());
  const double s = mean_dist > 0.0 ? std::sqrt(2.0) / mean_dist : 1.0;
  Mat3 t;
  t << s, 0.0, -s * centroid.x(), 0.0, s, -s * centroid.y(), 0.0, 0.0, 1.0;
  return t;
}

}  // namespace

Mat3 estimate_homography(std::span<const Vec2> from, std::span<const Vec2> to) {
  if (from.size() != to.size() || from.size() < 4) {
    throw Error(ErrorCode::kInvalidArgument, "homography needs >= 4 correspondences");
  }
  const Mat3 tf = normalizing_transform(from);
  const Mat3 tt = normalizing_transform(to);
  const auto n = static_cast<Eigen::Index>(from.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 p = tf * from[i].homogeneous();
    const Vec3 q = tt * to[i].homogeneous();
    a.row(2 * i) << p.x(), p.y(), 1.0, 0.0, 0.0, 0.0, -q.x() * p.x(), -q.x() * p.y(), -q.x();
    a.row(2 * i + 1) << 0.0, 0.0, 0.0, p.x(), p.y(), 1.0, -q.y() * p.x(), -q.y() * p.y(), -q.y();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  Mat3 out = tt.inverse() * hn * tf;
  if (std::abs(out(2, 2)) > 1e-12) out /= out(2, 2);
  if (!out.allFinite()) throw Error(ErrorCode::kInvalidArgument, "degenerate homography");
  return out;
}

}  // namespace navtrace
