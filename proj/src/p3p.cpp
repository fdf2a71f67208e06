#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "obfloc/solvers.hpp"

namespace obfloc {

namespace {

// Rigid transform with cam = R * world + t from three exact point pairs.
CameraPose rigid_from_three(std::span<const Point3, 3> world, const std::array<Vec3, 3>& cam) {
  Vec3 mw = Vec3::Zero();
  Vec3 mc = Vec3::Zero();
  for (int i = 0; i < 3; ++i) {
    mw += world[i];
    mc += cam[i];
  }
  mw /= 3.0;
  mc /= 3.0;
  Mat3 H = Mat3::Zero();
  for (int i = 0; i < 3; ++i) H += (cam[i] - mc) * (world[i] - mw).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 S = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) S(2, 2) = -1;
  const Mat3 R = svd.matrixU() * S * svd.matrixV().transpose();
  return {R, mc - R * mw};
}

}  // namespace

std::vector<CameraPose> p3p(std::span<const Point3, 3> points, std::span<const Bearing, 3> rays) {
  const Vec3& X1 = points[0];
  const Vec3& X2 = points[1];
  const Vec3& X3 = points[2];
  const double a2 = (X2 - X3).squaredNorm();
  const double b2 = (X1 - X3).squaredNorm();
  const double c2 = (X1 - X2).squaredNorm();
  const double longest = std::max({a2, b2, c2});
  if (longest == 0.0 || (X2 - X1).cross(X3 - X1).norm() <= 1e-10 * longest) return {};

  const std::array<Vec3, 3> j = {rays[0].normalized(), rays[1].normalized(), rays[2].normalized()};
  const double ca = j[1].dot(j[2]);
  const double cb = j[0].dot(j[2]);
  const double cg = j[0].dot(j[1]);
  if (std::max({ca, cb, cg}) > 1.0 - 1e-15) return {};

  // Grunert's quartic in v = s3 / s1, written with ratios to b^2.
  const double amc = (a2 - c2) / b2;
  const double apc = (a2 + c2) / b2;
  const double A4 = (amc - 1) * (amc - 1) - 4 * c2 / b2 * ca * ca;
  const double A3 = 4 * (amc * (1 - amc) * cb - (1 - apc) * ca * cg + 2 * c2 / b2 * ca * ca * cb);
  const double A2 = 2 * (amc * amc - 1 + 2 * amc * amc * cb * cb + 2 * (b2 - c2) / b2 * ca * ca -
                         4 * apc * ca * cb * cg + 2 * (b2 - a2) / b2 * cg * cg);
  const double A1 = 4 * (-amc * (1 + amc) * cb + 2 * a2 / b2 * cg * cg * cb - (1 - apc) * ca * cg);
  const double A0 = (1 + amc) * (1 + amc) - 4 * a2 / b2 * cg * cg;
  const std::array<double, 5> quartic = {A0, A1, A2, A3, A4};
  const std::vector<double> vs = detail::real_polynomial_roots(quartic, 2);

  // Squared distances opposite each ray pair: (1,2) c, (1,3) b, (2,3) a.
  const std::array<std::array<int, 2>, 3> edges = {{{0, 1}, {0, 2}, {1, 2}}};
  const std::array<double, 3> d2 = {c2, b2, a2};
  const std::array<double, 3> cosines = {cg, cb, ca};

  std::vector<CameraPose> out;
  for (double v : vs) {
    if (!(v > 0)) continue;
    const double denom = 1 + v * v - 2 * v * cb;
    if (denom <= 0) continue;
    const double s1 = std::sqrt(b2 / denom);
    const double s3 = v * s1;

    // u = s2 / s1 from the (1,2) edge; keep the root that best fits (2,3).
    const double disc = cg * cg - 1 + c2 / (s1 * s1);
    if (disc < -1e-9) continue;
    const double root = std::sqrt(std::max(0.0, disc));
    double best_u = 0;
    double best_residual = std::numeric_limits<double>::infinity();
    for (double u : {cg + root, cg - root}) {
      if (!(u > 0)) continue;
      const double s2 = u * s1;
      const double residual = std::abs(s2 * s2 + s3 * s3 - 2 * s2 * s3 * ca - a2);
      if (residual < best_residual) {
        best_residual = residual;
        best_u = u;
      }
    }
    if (!std::isfinite(best_residual)) continue;

    Vec3 s(s1, best_u * s1, s3);
    // Newton polish on the three law-of-cosines equations.
    for (int it = 0; it < 5; ++it) {
      Vec3 f;
      Mat3 J = Mat3::Zero();
      for (int e = 0; e < 3; ++e) {
        const int p = edges[e][0];
        const int q = edges[e][1];
        f(e) = s(p) * s(p) + s(q) * s(q) - 2 * s(p) * s(q) * cosines[e] - d2[e];
        J(e, p) = 2 * s(p) - 2 * s(q) * cosines[e];
        J(e, q) = 2 * s(q) - 2 * s(p) * cosines[e];
      }
      if (f.norm() <= 1e-15 * longest) break;
      const Eigen::FullPivLU<Mat3> lu(J);
      if (!lu.isInvertible()) break;
      const Vec3 step = lu.solve(f);
      if (!step.allFinite()) break;
      s -= step;
    }
    if ((s.array() <= 0).any()) continue;

    const std::array<Vec3, 3> cam = {s(0) * j[0], s(1) * j[1], s(2) * j[2]};
    const CameraPose pose = rigid_from_three(points, cam);

    bool ok = true;
    for (int i = 0; i < 3 && ok; ++i) {
      const Vec3 x = pose.transform(points[i]);
      ok = x.dot(j[i]) > 0 && angle_between(x, j[i]) < 1e-8;
    }
    if (!ok) continue;
    const bool duplicate = std::any_of(out.begin(), out.end(), [&](const CameraPose& o) {
      return (o.R - pose.R).norm() < 1e-9 && (o.t - pose.t).norm() < 1e-9 * (1 + pose.t.norm());
    });
    if (!duplicate) out.push_back(pose);
  }
  return out;
}

}  // namespace obfloc
