#include "obfloc/geometry.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace obfloc {

double CameraPose::orthonormality_error() const {
  const double ortho = (R.transpose() * R - Mat3::Identity()).norm();
  return std::max(ortho, std::abs(R.determinant() - 1.0));
}

CameraPose compose(const CameraPose& a, const CameraPose& b) {
  return {a.R * b.R, a.R * b.t + a.t};
}

bool Intrinsics::valid() const {
  return fx > 0 && fy > 0 && width > 0 && height > 0 && cx >= 0 && cx < width && cy >= 0 &&
         cy < height;
}

bool Intrinsics::contains(const Point2& u) const {
  return u.x() >= 0 && u.y() >= 0 && u.x() <= width - 1 && u.y() <= height - 1;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

Mat3 rotation_exp(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 W = skew(w);
  if (theta2 < 1e-16) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double theta = std::sqrt(theta2);
  return Mat3::Identity() + (std::sin(theta) / theta) * W +
         ((1.0 - std::cos(theta)) / theta2) * W * W;
}

Mat3 rotation_about(const Vec3& axis, double angle_rad) {
  return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

Mat3 look_rotation(const Vec3& forward, const Vec3& up) {
  const Vec3 z = forward.normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) x = z.cross(Vec3::UnitX().cross(z).norm() > 1e-6 ? Vec3::UnitX() : Vec3::UnitY());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return R;
}

std::optional<Point2> project(const CameraPose& pose, const Intrinsics& K, const Point3& X) {
  const Vec3 x = pose.transform(X);
  if (x.z() <= 0) return std::nullopt;
  return Point2(K.fx * x.x() / x.z() + K.cx, K.fy * x.y() / x.z() + K.cy);
}

Bearing backproject(const Intrinsics& K, const Point2& u) {
  return Vec3((u.x() - K.cx) / K.fx, (u.y() - K.cy) / K.fy, 1.0).normalized();
}

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

std::optional<RayPairClosest> closest_points(const Vec3& origin_a, const Vec3& dir_a,
                                             const Vec3& origin_b, const Vec3& dir_b) {
  if (dir_a.cross(dir_b).norm() < std::sin(kParallelRayAngle)) return std::nullopt;
  const Vec3 w0 = origin_a - origin_b;
  const double b = dir_a.dot(dir_b);
  const double d = dir_a.dot(w0);
  const double e = dir_b.dot(w0);
  const double denom = 1.0 - b * b;
  RayPairClosest out;
  out.depth_a = (b * e - d) / denom;
  out.depth_b = (e - b * d) / denom;
  out.point_a = origin_a + out.depth_a * dir_a;
  out.point_b = origin_b + out.depth_b * dir_b;
  return out;
}

std::optional<Point3> triangulate_two_view(const CameraPose& pose_a, const CameraPose& pose_b,
                                           const Bearing& ray_a, const Bearing& ray_b) {
  const Vec3 dir_a = (pose_a.R.transpose() * ray_a).normalized();
  const Vec3 dir_b = (pose_b.R.transpose() * ray_b).normalized();
  const auto closest = closest_points(pose_a.center(), dir_a, pose_b.center(), dir_b);
  if (!closest || closest->depth_a <= 0 || closest->depth_b <= 0) return std::nullopt;
  return 0.5 * (closest->point_a + closest->point_b);
}

std::optional<Point3> triangulate_multiview(std::span<const CameraPose> poses,
                                            std::span<const Bearing> rays) {
  const std::size_t n = poses.size();
  if (n < 2 || rays.size() != n) return std::nullopt;

  Eigen::MatrixXd A(3 * n, 4);
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Matrix<double, 3, 4> P;
    P.leftCols<3>() = poses[i].R;
    P.col(3) = poses[i].t;
    A.middleRows<3>(3 * i) = skew(rays[i].normalized()) * P;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Vector4d s = svd.singularValues();
  // Two vanishing singular values leave a pencil of solutions.
  if (s(2) <= 1e-12 * s(0) || s(3) / s(2) > kDltSingularRatio) return std::nullopt;

  const Eigen::Vector4d h = svd.matrixV().col(3);
  if (std::abs(h(3)) < 1e-14 * h.head<3>().norm()) return std::nullopt;
  const Point3 X = h.head<3>() / h(3);
  for (std::size_t i = 0; i < n; ++i) {
    if (rays[i].dot(poses[i].transform(X)) <= 0) return std::nullopt;
  }
  return X;
}

double position_error(const CameraPose& est, const CameraPose& gt) {
  return (est.center() - gt.center()).norm();
}

double rotation_error_deg(const CameraPose& est, const CameraPose& gt) {
  // atan2 form of arccos((tr - 1) / 2); identical in exact arithmetic,
  // stable near 0 and 180 degrees.
  const Mat3 D = gt.R.transpose() * est.R;
  const double c = std::clamp((D.trace() - 1.0) / 2.0, -1.0, 1.0);
  const Vec3 axis(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
  const double s = std::min(1.0, 0.5 * axis.norm());
  const double deg = std::atan2(s, c) * 180.0 / M_PI;
  return std::clamp(deg, 0.0, 180.0);
}

}  // namespace obfloc
