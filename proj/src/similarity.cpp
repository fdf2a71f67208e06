#include <cmath>

#include <Eigen/SVD>

#include "obfloc/error.hpp"
#include "obfloc/solvers.hpp"

namespace obfloc {

namespace {

bool collinear(std::span<const Point3> pts, const Vec3& mean) {
  Eigen::MatrixXd C(3, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) C.col(i) = pts[i] - mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(C);
  const auto s = svd.singularValues();
  return s(0) == 0.0 || s(1) <= 1e-9 * s(0);
}

}  // namespace

SimilarityTransform SimilarityTransform::inverse() const {
  const Mat3 Rt = R.transpose();
  return {1.0 / scale, Rt, -(Rt * t) / scale};
}

SimilarityTransform compose(const SimilarityTransform& a, const SimilarityTransform& b) {
  return {a.scale * b.scale, a.R * b.R, a.scale * (a.R * b.t) + a.t};
}

SimilarityTransform align_similarity(std::span<const Point3> source,
                                     std::span<const Point3> target) {
  if (source.size() != target.size())
    throw Error(ErrorCode::DegenerateConfiguration, "source and target sizes differ");
  if (source.size() < 3)
    throw Error(ErrorCode::DegenerateConfiguration, "need at least 3 point pairs");

  const double n = static_cast<double>(source.size());
  Vec3 mx = Vec3::Zero();
  Vec3 my = Vec3::Zero();
  for (std::size_t i = 0; i < source.size(); ++i) {
    mx += source[i];
    my += target[i];
  }
  mx /= n;
  my /= n;
  if (collinear(source, mx) || collinear(target, my))
    throw Error(ErrorCode::DegenerateConfiguration, "collinear point set");

  Mat3 cov = Mat3::Zero();
  double var_x = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const Vec3 dx = source[i] - mx;
    cov += (target[i] - my) * dx.transpose();
    var_x += dx.squaredNorm();
  }
  cov /= n;
  var_x /= n;

  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 S = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0) S(2) = -1;

  SimilarityTransform out;
  out.R = svd.matrixU() * S.asDiagonal() * svd.matrixV().transpose();
  out.scale = svd.singularValues().dot(S) / var_x;
  out.t = my - out.scale * out.R * mx;
  return out;
}

CameraPose transform_pose(const CameraPose& pose, const SimilarityTransform& sim) {
  const Mat3 R = pose.R * sim.R.transpose();
  return {R, sim.scale * pose.t - R * sim.t};
}

}  // namespace obfloc
