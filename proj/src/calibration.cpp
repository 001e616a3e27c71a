#include "navtrace/calibration.hpp"

#include "navtrace/error.hpp"
#include "navtrace/homography.hpp"

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <cmath>
#include <limits>
#include <string>

namespace navtrace {

namespace {

constexpr int kIntrinsics = 9;  // fx fy cx cy k1 k2 p1 p2 k3
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Vec9 = Eigen::Matrix<double, kIntrinsics, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat9 = Eigen::Matrix<double, kIntrinsics, kIntrinsics>;
using Mat96 = Eigen::Matrix<double, kIntrinsics, 6>;

Vec9 pack(const CameraModel& cam) {
  Vec9 c;
  c << cam.fx, cam.fy, cam.cx, cam.cy, cam.distortion.k1, cam.distortion.k2,
      cam.distortion.p1, cam.distortion.p2, cam.distortion.k3;
  return c;
}

CameraModel unpack(const CameraModel& base, const Vec9& c) {
  CameraModel cam = base;
  cam.fx = c[0];
  cam.fy = c[1];
  cam.cx = c[2];
  cam.cy = c[3];
  cam.distortion = {c[4], c[5], c[6], c[7], c[8]};
  return cam;
}

void validate(const std::vector<CheckerboardObservation>& observations) {
  if (observations.size() < 3) {
    throw Error(ErrorCode::kTooFewViews,
                "calibration needs at least 3 views, got " + std::to_string(observations.size()));
  }
  for (const auto& obs : observations) {
    const BoardSpec& b = obs.board;
    if (b.rows < 2 || b.cols < 2 || !(b.square_mm > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "view " + std::to_string(obs.view_id) + ": invalid board spec");
    }
    if (obs.corners.size() != static_cast<std::size_t>(b.rows * b.cols)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "view " + std::to_string(obs.view_id) + ": corner count does not match board");
    }
  }
}

// The two absolute-conic constraints a homography puts on B = K^-T K^-1,
// with the skew entry B12 dropped: unknowns (B11, B22, B13, B23, B33).
Eigen::Matrix<double, 5, 1> conic_row(const Mat3& h, int i, int j) {
  Eigen::Matrix<double, 5, 1> v;
  v << h(0, i) * h(0, j), h(1, i) * h(1, j), h(2, i) * h(0, j) + h(0, i) * h(2, j),
      h(2, i) * h(1, j) + h(1, i) * h(2, j), h(2, i) * h(2, j);
  return v;
}

Mat3 closed_form_k(const std::vector<Mat3>& homographies) {
  Eigen::MatrixXd v(2 * homographies.size(), 5);
  for (std::size_t k = 0; k < homographies.size(); ++k) {
    const Mat3& h = homographies[k];
    v.row(2 * k) = conic_row(h, 0, 1).transpose();
    v.row(2 * k + 1) = (conic_row(h, 0, 0) - conic_row(h, 1, 1)).transpose();
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(v, Eigen::ComputeFullV);
  Eigen::Matrix<double, 5, 1> b = svd.matrixV().col(4);
  if (b[0] < 0.0) b = -b;
  const double b11 = b[0], b22 = b[1], b13 = b[2], b23 = b[3], b33 = b[4];
  if (!(b11 > 0.0) || !(b22 > 0.0)) {
    throw Error(ErrorCode::kDegenerateViews, "absolute conic is not positive definite");
  }
  const double v0 = -b23 / b22;
  const double lambda = b33 - (b13 * b13 - v0 * b11 * b23) / b11;
  if (!(lambda > 0.0)) {
    throw Error(ErrorCode::kDegenerateViews, "absolute conic is not positive definite");
  }
  const double alpha = std::sqrt(lambda / b11);
  const double beta = std::sqrt(lambda / b22);
  const double u0 = -b13 * alpha * alpha / lambda;
  Mat3 k;
  k << alpha, 0.0, u0, 0.0, beta, v0, 0.0, 0.0, 1.0;
  return k;
}

RigidTransform pose_from_homography(const Mat3& k, const Mat3& h) {
  const Mat3 a = k.inverse() * h;
  double scale = 1.0 / a.col(0).norm();
  if (a(2, 2) * scale < 0.0) scale = -scale;  // board in front of the camera
  const Vec3 r1 = scale * a.col(0);
  const Vec3 r2 = scale * a.col(1);
  Mat3 r;
  r << r1, r2, r1.cross(r2);
  return {Rotation::from_matrix(r), scale * a.col(2)};
}

double normal_spread_deg(const std::vector<RigidTransform>& poses) {
  double spread = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Vec3 ni = poses[i].rotation.rotate(Vec3::UnitZ());
    for (std::size_t j = i + 1; j < poses.size(); ++j) {
      const Vec3 nj = poses[j].rotation.rotate(Vec3::UnitZ());
      spread = std::max(spread, std::atan2(ni.cross(nj).norm(), ni.dot(nj)));
    }
  }
  return rad_to_deg(spread);
}

// Linear least squares for k1, k2 given K and the board poses.
Distortion radial_seed(const CameraModel& cam,
                       const std::vector<CheckerboardObservation>& observations,
                       const std::vector<RigidTransform>& poses) {
  std::vector<double> rows_a;
  std::vector<double> rows_b;
  for (std::size_t v = 0; v < observations.size(); ++v) {
    const auto model = observations[v].board.points();
    for (std::size_t i = 0; i < model.size(); ++i) {
      const Vec3 p = poses[v].apply(model[i]);
      if (!(p.z() > 0.0)) continue;
      const Vec2 xy = p.head<2>() / p.z();
      const double r2 = xy.squaredNorm();
      const double du = cam.fx * xy.x();
      const double dv = cam.fy * xy.y();
      const Pixel& obs = observations[v].corners[i];
      rows_a.insert(rows_a.end(), {du * r2, du * r2 * r2, dv * r2, dv * r2 * r2});
      rows_b.push_back(obs.u - (du + cam.cx));
      rows_b.push_back(obs.v - (dv + cam.cy));
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(rows_b.size());
  const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>> a(
      rows_a.data(), n, 2);
  const Eigen::Map<const Eigen::VectorXd> b(rows_b.data(), n);
  const Eigen::Vector2d k = a.colPivHouseholderQr().solve(b);
  Distortion d;
  if (k.allFinite()) {
    d.k1 = k[0];
    d.k2 = k[1];
  }
  return d;
}

struct Problem {
  const std::vector<CheckerboardObservation>& observations;
  std::vector<std::vector<Vec3>> models;
};

double total_cost(const Problem& prob, const CameraModel& cam,
                  const std::vector<RigidTransform>& poses) {
  double cost = 0.0;
  for (std::size_t v = 0; v < poses.size(); ++v) {
    const Mat3 r = poses[v].rotation.matrix();
    for (std::size_t i = 0; i < prob.models[v].size(); ++i) {
      const Vec3 p = r * prob.models[v][i] + poses[v].translation;
      if (!(p.z() > 0.0)) return std::numeric_limits<double>::infinity();
      const Pixel px = normalized_to_pixel(cam, p.head<2>() / p.z());
      cost += (px.vec() - prob.observations[v].corners[i].vec()).squaredNorm();
    }
  }
  return std::isfinite(cost) ? cost : std::numeric_limits<double>::infinity();
}

struct Normal {
  Mat9 u = Mat9::Zero();
  Vec9 gc = Vec9::Zero();
  std::vector<Mat6> v;
  std::vector<Mat96> w;
  std::vector<Vec6> gp;
};

Normal linearize(const Problem& prob, const CameraModel& cam,
                 const std::vector<RigidTransform>& poses) {
  Normal n;
  n.v.assign(poses.size(), Mat6::Zero());
  n.w.assign(poses.size(), Mat96::Zero());
  n.gp.assign(poses.size(), Vec6::Zero());
  const Eigen::Matrix2d fk = Eigen::Vector2d(cam.fx, cam.fy).asDiagonal();
  for (std::size_t v = 0; v < poses.size(); ++v) {
    const Mat3 r = poses[v].rotation.matrix();
    for (std::size_t i = 0; i < prob.models[v].size(); ++i) {
      const Vec3 rotated = r * prob.models[v][i];
      const Vec3 p = rotated + poses[v].translation;
      Eigen::Matrix<double, 2, 3> dp;
      const Projection proj = project(cam, p, dp);
      const Vec2 res = proj.pixel.vec() - prob.observations[v].corners[i].vec();
      const Vec2 xy = p.head<2>() / p.z();
      const Vec2 xd = distort(cam.distortion, xy);

      Eigen::Matrix<double, 2, kIntrinsics> jc = Eigen::Matrix<double, 2, kIntrinsics>::Zero();
      jc(0, 0) = xd.x();
      jc(1, 1) = xd.y();
      jc(0, 2) = 1.0;
      jc(1, 3) = 1.0;
      jc.rightCols<5>() = fk * distortion_jacobian(xy);
      Eigen::Matrix<double, 2, 6> jp;
      jp.leftCols<3>() = -dp * skew(rotated);
      jp.rightCols<3>() = dp;

      n.u += jc.transpose() * jc;
      n.gc += jc.transpose() * res;
      n.v[v] += jp.transpose() * jp;
      n.w[v] += jc.transpose() * jp;
      n.gp[v] += jp.transpose() * res;
    }
  }
  return n;
}

}  // namespace

std::vector<Vec3> BoardSpec::points() const {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) pts.emplace_back(c * square_mm, r * square_mm, 0.0);
  }
  return pts;
}

CalibrationReport calibrate(const std::vector<CheckerboardObservation>& observations,
                            int image_width, int image_height,
                            const CalibrationOptions& options) {
  validate(observations);
  if (image_width <= 0 || image_height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }

  // Pixels are conditioned to roughly unit scale before the conic solve.
  const double s = 0.5 * (image_width + image_height);
  Mat3 cond;
  cond << 1.0 / s, 0.0, -0.5 * image_width / s, 0.0, 1.0 / s, -0.5 * image_height / s, 0.0,
      0.0, 1.0;

  Problem prob{observations, {}};
  std::vector<Mat3> homographies;
  std::vector<Mat3> conditioned;
  for (const auto& obs : observations) {
    prob.models.push_back(obs.board.points());
    std::vector<Vec2> from;
    std::vector<Vec2> to;
    for (std::size_t i = 0; i < obs.corners.size(); ++i) {
      from.push_back(prob.models.back()[i].head<2>());
      to.push_back(obs.corners[i].vec());
    }
    homographies.push_back(estimate_homography(from, to));
    conditioned.push_back(cond * homographies.back());
  }

  const Mat3 k = cond.inverse() * closed_form_k(conditioned);
  CameraModel cam;
  cam.fx = k(0, 0);
  cam.fy = k(1, 1);
  cam.cx = k(0, 2);
  cam.cy = k(1, 2);
  cam.image_width = image_width;
  cam.image_height = image_height;

  std::vector<RigidTransform> poses;
  for (const Mat3& h : homographies) poses.push_back(pose_from_homography(k, h));
  if (normal_spread_deg(poses) < options.min_normal_spread_deg) {
    throw Error(ErrorCode::kDegenerateViews, "board normals span less than the minimum spread");
  }
  cam.distortion = radial_seed(cam, observations, poses);

  std::vector<bool> free(kIntrinsics, true);
  free[6] = free[7] = options.estimate_tangential;
  free[8] = options.estimate_k3;

  CalibrationReport report;
  double cost = total_cost(prob, cam, poses);
  if (!std::isfinite(cost)) {
    // A poor radial seed can fold the model; start undistorted instead.
    cam.distortion = {};
    cost = total_cost(prob, cam, poses);
  }
  if (!std::isfinite(cost)) {
    throw Error(ErrorCode::kDivergedRefinement, "initial estimate puts corners behind the camera");
  }
  report.initial_cost = cost;

  double lambda = 1e-3;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    report.iterations = iter + 1;
    if (cost < 1e-30) break;
    const Normal n = linearize(prob, cam, poses);

    bool improved = false;
    bool converged = false;
    while (lambda < 1e16) {
      Mat9 u = n.u;
      u.diagonal() += lambda * (n.u.diagonal().array() + 1e-12).matrix();
      Vec9 rhs = -n.gc;
      std::vector<Mat6> v_inv(poses.size());
      for (std::size_t v = 0; v < poses.size(); ++v) {
        Mat6 damped = n.v[v];
        damped.diagonal() += lambda * (n.v[v].diagonal().array() + 1e-12).matrix();
        v_inv[v] = damped.inverse();
        u -= n.w[v] * v_inv[v] * n.w[v].transpose();
        rhs += n.w[v] * v_inv[v] * n.gp[v];
      }
      for (int a = 0; a < kIntrinsics; ++a) {
        if (free[a]) continue;
        u.row(a).setZero();
        u.col(a).setZero();
        u(a, a) = 1.0;
        rhs[a] = 0.0;
      }
      const Vec9 dc = u.ldlt().solve(rhs);
      const CameraModel trial_cam = unpack(cam, pack(cam) + dc);
      std::vector<RigidTransform> trial_poses(poses.size());
      for (std::size_t v = 0; v < poses.size(); ++v) {
        const Vec6 dp = v_inv[v] * (-n.gp[v] - n.w[v].transpose() * dc);
        trial_poses[v] = {Rotation::from_rotation_vector(dp.head<3>()) * poses[v].rotation,
                          poses[v].translation + dp.tail<3>()};
      }
      const double trial = dc.allFinite() ? total_cost(prob, trial_cam, trial_poses)
                                          : std::numeric_limits<double>::infinity();
      if (trial < cost) {
        converged = (cost - trial) < options.relative_tolerance * cost;
        cam = trial_cam;
        poses = std::move(trial_poses);
        cost = trial;
        lambda = std::max(lambda * 0.1, 1e-15);
        improved = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved || converged) break;
  }

  if (!(cam.fx > 0.0) || !(cam.fy > 0.0) || !pack(cam).allFinite() || !(cam.cx > 0.0) ||
      !(cam.cx < image_width) || !(cam.cy > 0.0) || !(cam.cy < image_height)) {
    throw Error(ErrorCode::kDivergedRefinement, "refined intrinsics are not physical");
  }

  report.camera = cam;
  report.final_cost = cost;
  report.board_poses = poses;
  report.per_view_error_px = reprojection_report(cam, observations, poses);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < observations.size(); ++v) {
    sum += report.per_view_error_px[v] * static_cast<double>(observations[v].corners.size());
    count += observations[v].corners.size();
  }
  report.mean_error_px = sum / static_cast<double>(count);
  return report;
}

std::vector<double> reprojection_report(const CameraModel& cam,
                                        const std::vector<CheckerboardObservation>& observations,
                                        const std::vector<RigidTransform>& board_poses) {
  if (observations.size() != board_poses.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one board pose is needed per observation");
  }
  std::vector<double> errors;
  errors.reserve(observations.size());
  for (std::size_t v = 0; v < observations.size(); ++v) {
    const auto model = observations[v].board.points();
    double sum = 0.0;
    for (std::size_t i = 0; i < model.size() && i < observations[v].corners.size(); ++i) {
      const Vec3 p = board_poses[v].apply(model[i]);
      if (!(p.z() > 0.0)) {
        sum = std::numeric_limits<double>::infinity();
        break;
      }
      const Pixel px = normalized_to_pixel(cam, p.head<2>() / p.z());
      sum += (px.vec() - observations[v].corners[i].vec()).norm();
    }
    errors.push_back(model.empty() ? 0.0 : sum / static_cast<double>(model.size()));
  }
  return errors;
}

}  // namespace navtrace
