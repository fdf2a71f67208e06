#include <cmath>

#include <Eigen/Cholesky>

#include "obfloc/robust.hpp"

namespace obfloc {

namespace {

// Cost charged for a point that falls behind the camera during a trial step.
double behind_penalty(double scale) { return huber(100.0 * scale, scale); }

}  // namespace

CameraPose apply_update(const CameraPose& pose, const Vector6d& delta) {
  return {rotation_exp(delta.head<3>()) * pose.R, pose.t + delta.tail<3>()};
}

Eigen::Matrix<double, 2, 6> reprojection_jacobian(const CameraPose& pose, const Intrinsics& K,
                                                  const Point3& X) {
  const Vec3 RX = pose.R * X;
  const Vec3 x = RX + pose.t;
  const double iz = 1.0 / x.z();
  Eigen::Matrix<double, 2, 3> dproj;
  dproj << K.fx * iz, 0, -K.fx * x.x() * iz * iz, 0, K.fy * iz, -K.fy * x.y() * iz * iz;
  Eigen::Matrix<double, 3, 6> dx;
  dx.leftCols<3>() = -skew(RX);
  dx.rightCols<3>() = Mat3::Identity();
  return dproj * dx;
}

double huber(double residual_norm, double scale) {
  return residual_norm <= scale ? residual_norm * residual_norm
                                : 2.0 * scale * residual_norm - scale * scale;
}

double robust_cost(const CameraPose& pose, std::span<const Correspondence2D3D> corr,
                   const Intrinsics& K, double loss_scale_px) {
  double cost = 0.0;
  for (const auto& c : corr) {
    const auto e = reprojection_error(pose, K, c);
    cost += e ? huber(*e, loss_scale_px) : behind_penalty(loss_scale_px);
  }
  return cost;
}

CameraPose refine_pose(const CameraPose& initial, std::span<const Correspondence2D3D> corr,
                       const Intrinsics& K, double loss_scale_px) {
  constexpr int kMaxIterations = 100;
  constexpr double kRelativeTolerance = 1e-10;
  if (corr.size() < 4) return initial;

  CameraPose pose = initial;
  double cost = robust_cost(pose, corr, K, loss_scale_px);
  double lambda = 1e-3;

  for (int iter = 0; iter < kMaxIterations && cost > 0.0; ++iter) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Vector6d g = Vector6d::Zero();
    for (const auto& c : corr) {
      const Vec3 x = pose.transform(c.point);
      if (x.z() <= 0) continue;
      const Vec2 r(K.fx * x.x() / x.z() + K.cx - c.pixel.x(), K.fy * x.y() / x.z() + K.cy - c.pixel.y());
      const double norm = r.norm();
      // IRLS weight of the Huber loss.
      const double w = norm <= loss_scale_px ? 1.0 : loss_scale_px / norm;
      const auto J = reprojection_jacobian(pose, K, c.point);
      H.noalias() += w * J.transpose() * J;
      g.noalias() += w * J.transpose() * r;
    }
    if (g.norm() < 1e-14) break;

    bool improved = false;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += lambda * (H.diagonal().array() + 1e-12).matrix();
      const Vector6d delta = -A.ldlt().solve(g);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const CameraPose candidate = apply_update(pose, delta);
      const double new_cost = robust_cost(candidate, corr, K, loss_scale_px);
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / cost;
        pose = candidate;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (rel < kRelativeTolerance) return pose;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return pose;
}

namespace {

// Sampson distance of the query/reference pair under the epipolar geometry
// implied by the two poses, in query pixels.
std::optional<double> ray_residual(const CameraPose& pose, const E5p1Problem& problem,
                                   const RayCorrespondence& c) {
  const CameraPose& ref = problem.reference_poses[c.reference];
  const Mat3 R = pose.R * ref.R.transpose();
  const Vec3 t = pose.t - R * ref.t;
  if (t.norm() == 0.0 || c.ref_bearing.z() <= 0.0) return std::nullopt;
  const Mat3 E = skew(t.normalized()) * R;
  const Intrinsics& K = problem.query_intrinsics;
  const Vec3 xq((c.query_pixel.x() - K.cx) / K.fx, (c.query_pixel.y() - K.cy) / K.fy, 1.0);
  const Vec3 xr = c.ref_bearing / c.ref_bearing.z();
  const Vec3 a = E * xr;
  const Vec3 b = E.transpose() * xq;
  const double d = a.x() * a.x() + a.y() * a.y() + b.x() * b.x() + b.y() * b.y();
  if (!(d > 0.0)) return std::nullopt;
  return 0.5 * (K.fx + K.fy) * xq.dot(a) / std::sqrt(d);
}

}  // namespace

double robust_ray_cost(const CameraPose& pose, const E5p1Problem& problem,
                       std::span<const int> indices, double loss_scale_px) {
  double cost = 0.0;
  for (int i : indices) {
    const auto r = ray_residual(pose, problem, problem.correspondences[i]);
    cost += r ? huber(std::abs(*r), loss_scale_px) : behind_penalty(loss_scale_px);
  }
  return cost;
}

CameraPose refine_pose_rays(const CameraPose& initial, const E5p1Problem& problem,
                            std::span<const int> indices, double loss_scale_px) {
  constexpr int kMaxIterations = 100;
  constexpr double kRelativeTolerance = 1e-10;
  constexpr double kStep = 1e-7;
  if (indices.size() < 6) return initial;

  CameraPose pose = initial;
  double cost = robust_ray_cost(pose, problem, indices, loss_scale_px);
  double lambda = 1e-3;

  for (int iter = 0; iter < kMaxIterations && cost > 0.0; ++iter) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Vector6d g = Vector6d::Zero();
    for (int i : indices) {
      const auto& c = problem.correspondences[i];
      const auto r = ray_residual(pose, problem, c);
      if (!r) continue;
      Eigen::Matrix<double, 1, 6> J;
      bool valid = true;
      for (int k = 0; k < 6 && valid; ++k) {
        Vector6d d = Vector6d::Zero();
        d(k) = kStep;
        const auto up = ray_residual(apply_update(pose, d), problem, c);
        const auto dn = ray_residual(apply_update(pose, -d), problem, c);
        valid = up && dn;
        if (valid) J(k) = (*up - *dn) / (2.0 * kStep);
      }
      if (!valid) continue;
      const double norm = std::abs(*r);
      const double w = norm <= loss_scale_px ? 1.0 : loss_scale_px / norm;
      H.noalias() += w * J.transpose() * J;
      g.noalias() += w * *r * J.transpose();
    }
    if (g.norm() < 1e-14) break;

    bool improved = false;
    while (lambda < 1e12) {
      Eigen::Matrix<double, 6, 6> A = H;
      A.diagonal() += lambda * (H.diagonal().array() + 1e-12).matrix();
      const Vector6d delta = -A.ldlt().solve(g);
      if (!delta.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      const CameraPose candidate = apply_update(pose, delta);
      const double new_cost = robust_ray_cost(candidate, problem, indices, loss_scale_px);
      if (new_cost < cost) {
        const double rel = (cost - new_cost) / cost;
        pose = candidate;
        cost = new_cost;
        lambda = std::max(lambda * 0.1, 1e-12);
        improved = true;
        if (rel < kRelativeTolerance) return pose;
        break;
      }
      lambda *= 10.0;
    }
    if (!improved) break;
  }
  return pose;
}

}  // namespace obfloc
