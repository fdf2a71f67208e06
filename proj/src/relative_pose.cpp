#include <cmath>

#include <Eigen/SVD>

#include "obfloc/solvers.hpp"

namespace obfloc {

int count_in_front(const Mat3& R, const Vec3& t, std::span<const BearingPair> pairs) {
  // Camera 1 sits at the origin; camera 2 at -R^T t in camera-1 coordinates.
  const Vec3 center2 = -R.transpose() * t;
  int count = 0;
  for (const auto& p : pairs) {
    const auto closest = closest_points(Vec3::Zero(), p.first.normalized(), center2,
                                        (R.transpose() * p.second).normalized());
    if (closest && closest->depth_a > 0 && closest->depth_b > 0) ++count;
  }
  return count;
}

std::optional<RelativePose> decompose_essential(const EssentialMatrix& E,
                                                std::span<const BearingPair> pairs) {
  if (pairs.empty()) return std::nullopt;
  Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if (U.determinant() < 0) U = -U;
  if (V.determinant() < 0) V = -V;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;

  const Mat3 Ra = U * W * V.transpose();
  const Mat3 Rb = U * W.transpose() * V.transpose();
  const Vec3 t = U.col(2).normalized();
  const std::array<RelativePose, 4> candidates = {
      RelativePose{Ra, t}, RelativePose{Ra, -t}, RelativePose{Rb, t}, RelativePose{Rb, -t}};

  int best = -1;
  int best_count = -1;
  for (int i = 0; i < 4; ++i) {
    const int count = count_in_front(candidates[i].R, candidates[i].t_dir, pairs);
    if (count > best_count) {
      best_count = count;
      best = i;
    }
  }
  if (2 * best_count <= static_cast<int>(pairs.size())) return std::nullopt;
  return candidates[best];
}

CameraPose query_pose_from_relative(const RelativePose& rel, const CameraPose& ref_pose,
                                    double scale) {
  return {rel.R * ref_pose.R, rel.R * ref_pose.t + scale * rel.t_dir};
}

std::optional<double> solve_scale_e5p1(const RelativePose& rel, const CameraPose& ref1,
                                       const CameraPose& ref2, const BearingPair& sixth) {
  // Query center as a function of scale: c(s) = c_ref1 - s * v.
  const Mat3 Rq = rel.R * ref1.R;
  const Vec3 v = ref1.R.transpose() * rel.R.transpose() * rel.t_dir;
  const Vec3 dir_q = Rq.transpose() * sixth.first.normalized();
  const Vec3 dir_2 = ref2.R.transpose() * sixth.second.normalized();
  const Vec3 n = dir_q.cross(dir_2);
  if (n.norm() < std::sin(kParallelRayAngle)) return std::nullopt;
  const Vec3 n_hat = n.normalized();
  // Line-to-line distance is |(c(s) - c_ref2) . n_hat|, linear in s.
  const double slope = v.dot(n_hat);
  if (std::abs(slope) < kScaleSensitivityEps) return std::nullopt;
  return (ref1.center() - ref2.center()).dot(n_hat) / slope;
}

}  // namespace obfloc
