#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "obfloc/geometry.hpp"

namespace obfloc {

// A bearing pair (b1 in the first camera, b2 in the second) satisfying
// b2^T E b1 = 0 for E = [t]_x R with x2 = R x1 + t.
struct BearingPair {
  Bearing first;
  Bearing second;
};

// Scale-normalised (|E|_F = 1), sign-canonical essential matrix.
using EssentialMatrix = Mat3;

// Returns at most 10 essential matrices. An empty result means the sample
// is degenerate (EmptySolutionSet); callers resample.
std::vector<EssentialMatrix> essential_5pt(std::span<const BearingPair, 5> pairs);

// Residuals used by the algebraic invariants of an essential matrix.
double essential_det_residual(const EssentialMatrix& E);
double essential_trace_residual(const EssentialMatrix& E);
EssentialMatrix normalize_essential(const Mat3& E);

struct RelativePose {
  Mat3 R = Mat3::Identity();
  Vec3 t_dir = Vec3::UnitZ();  // unit norm; scale undetermined
};

// Number of pairs triangulating in front of both cameras under (R, t).
int count_in_front(const Mat3& R, const Vec3& t, std::span<const BearingPair> pairs);

// Cheirality-selected decomposition. Empty means AmbiguousCheirality: no
// candidate places a strict majority of pairs in front of both cameras.
std::optional<RelativePose> decompose_essential(const EssentialMatrix& E,
                                                std::span<const BearingPair> pairs);

// Builds the query pose from a reference pose, the reference-to-query
// relative pose and a translation scale: x_q = R (R_ref X + t_ref) + s t_dir.
CameraPose query_pose_from_relative(const RelativePose& rel, const CameraPose& ref_pose,
                                    double scale);

// Coefficient below which the E5+1 scale is reported as indeterminate.
inline constexpr double kScaleSensitivityEps = 1e-12;

// Translation scale of `rel` (reference 1 -> query) that makes the query's
// sixth ray meet the second reference's ray in the least-squares sense.
// `sixth.first` is the query bearing, `sixth.second` the reference-2 bearing.
// Empty means ScaleIndeterminate.
std::optional<double> solve_scale_e5p1(const RelativePose& rel, const CameraPose& ref1,
                                       const CameraPose& ref2, const BearingPair& sixth);

// Up to four poses mapping the world points onto the rays. Empty on
// collinear points or when no real solution exists.
std::vector<CameraPose> p3p(std::span<const Point3, 3> points, std::span<const Bearing, 3> rays);

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (R * x) + t; }
  SimilarityTransform inverse() const;
};

SimilarityTransform compose(const SimilarityTransform& a, const SimilarityTransform& b);

// Least-squares similarity mapping source onto target. Throws
// Error(DegenerateConfiguration) for < 3 points, mismatched sizes or
// collinear sets.
SimilarityTransform align_similarity(std::span<const Point3> source,
                                     std::span<const Point3> target);

// Moves a camera pose into the frame reached by applying `sim` to world points.
CameraPose transform_pose(const CameraPose& pose, const SimilarityTransform& sim);

namespace detail {
// Real roots of sum_i coeffs[i] x^i via the companion matrix, each polished
// with one Newton step. Leading zero coefficients are dropped.
std::vector<double> real_polynomial_roots(std::span<const double> coeffs, int newton_steps = 1);
}  // namespace detail

}  // namespace obfloc
