#pragma once

#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace obfloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Point2 = Vec2;
using Point3 = Vec3;

// Unit-norm direction in a camera frame.
using Bearing = Vec3;

// Rigid world-to-camera transform: x_cam = R * x_world + t.
struct CameraPose {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  static CameraPose identity() { return {}; }
  static CameraPose from_center(const Mat3& R, const Vec3& center) { return {R, -R * center}; }

  Vec3 center() const { return -R.transpose() * t; }
  Vec3 transform(const Vec3& x_world) const { return R * x_world + t; }
  CameraPose inverse() const { return {R.transpose(), -R.transpose() * t}; }

  // Frobenius distance of R^T R from I and |det R - 1|, whichever is larger.
  double orthonormality_error() const;
};

// (a * b)(x) = a(b(x)).
CameraPose compose(const CameraPose& a, const CameraPose& b);

struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const;
  bool contains(const Point2& u) const;
};

Mat3 skew(const Vec3& v);
// Rodrigues exponential map; exact for |w| -> 0.
Mat3 rotation_exp(const Vec3& w);
Mat3 rotation_about(const Vec3& axis, double angle_rad);
// Rotation whose rows make the camera look along `forward` with `up`
// roughly pointing to -y in the image.
Mat3 look_rotation(const Vec3& forward, const Vec3& up);

std::optional<Point2> project(const CameraPose& pose, const Intrinsics& K, const Point3& X);
Bearing backproject(const Intrinsics& K, const Point2& u);

// Angle between two directions in radians.
double angle_between(const Vec3& a, const Vec3& b);

// Parallelism threshold used by the two-view triangulation.
inline constexpr double kParallelRayAngle = 1e-6;
// Rank-deficiency threshold on sigma_min / sigma_second for the DLT.
inline constexpr double kDltSingularRatio = 0.99;

std::optional<Point3> triangulate_two_view(const CameraPose& pose_a, const CameraPose& pose_b,
                                           const Bearing& ray_a, const Bearing& ray_b);

std::optional<Point3> triangulate_multiview(std::span<const CameraPose> poses,
                                            std::span<const Bearing> rays);

struct RayPairClosest {
  double depth_a = 0.0;  // distance along ray a (unit direction)
  double depth_b = 0.0;
  Vec3 point_a = Vec3::Zero();
  Vec3 point_b = Vec3::Zero();
};

// Closest points between two world-space rays origin + depth * dir (dirs unit).
// Empty when the rays are parallel within kParallelRayAngle.
std::optional<RayPairClosest> closest_points(const Vec3& origin_a, const Vec3& dir_a,
                                             const Vec3& origin_b, const Vec3& dir_b);

double position_error(const CameraPose& est, const CameraPose& gt);
double rotation_error_deg(const CameraPose& est, const CameraPose& gt);

}  // namespace obfloc
