#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "obfloc/geometry.hpp"

namespace obfloc {

struct RansacConfig {
  int max_iterations = 10000;
  double inlier_threshold_px = 3.0;
  double confidence = 0.999;
  int lo_iterations = 10;
  int min_inliers = 12;
  std::uint64_t seed = 0;

  // Throws Error(InvalidArgument) when an invariant is violated.
  void validate() const;
};

enum class LocalizationStatus { Success, Failure, InsufficientReferences };

const char* to_string(LocalizationStatus status);

struct LocalizationResult {
  LocalizationStatus status = LocalizationStatus::Failure;
  std::optional<CameraPose> pose;
  int num_inliers = 0;
  int num_correspondences = 0;
  int iterations_run = 0;
  std::vector<bool> inlier_mask;
  double score = std::numeric_limits<double>::infinity();  // MSAC

  bool ok() const { return status == LocalizationStatus::Success && pose.has_value(); }
};

bool operator==(const LocalizationResult& a, const LocalizationResult& b);

struct Correspondence2D3D {
  Point2 pixel;
  Point3 point;
};

// Query pixel matched to a ray of a posed reference image.
struct RayCorrespondence {
  Point2 query_pixel;
  int reference = 0;      // index into E5p1Problem::reference_poses
  Bearing ref_bearing;    // reference camera frame
};

struct E5p1Problem {
  Intrinsics query_intrinsics;
  std::vector<CameraPose> reference_poses;
  std::vector<RayCorrespondence> correspondences;
};

// Records every hypothesis score when attached to a RANSAC run.
struct RansacTrace {
  std::vector<double> hypothesis_scores;
};

// ---- scoring ---------------------------------------------------------------

// Reprojection error in pixels, empty when the point is behind the camera.
std::optional<double> reprojection_error(const CameraPose& pose, const Intrinsics& K,
                                         const Correspondence2D3D& c);

// Query-image reprojection error of the midpoint between the query ray and
// the reference ray; empty when the rays are parallel or meet behind a camera.
std::optional<double> ray_reprojection_error(const CameraPose& query_pose, const Intrinsics& K,
                                             const CameraPose& ref_pose,
                                             const RayCorrespondence& c);

// Point on the reference ray closest to the query ray (in front of both).
std::optional<Point3> anchor_on_reference_ray(const CameraPose& query_pose, const Intrinsics& K,
                                              const CameraPose& ref_pose,
                                              const RayCorrespondence& c);

double msac_score(const CameraPose& pose, const Intrinsics& K,
                  std::span<const Correspondence2D3D> corr, double tau_px,
                  std::vector<bool>* inliers = nullptr);
double msac_score(const CameraPose& pose, const E5p1Problem& problem, double tau_px,
                  std::vector<bool>* inliers = nullptr);

// ---- refinement ------------------------------------------------------------

using Vector6d = Eigen::Matrix<double, 6, 1>;

// Left-multiplied update: R <- exp(w) R, t <- t + dt, with delta = (w, dt).
CameraPose apply_update(const CameraPose& pose, const Vector6d& delta);

// d(residual)/d(delta) at delta = 0 for residual = project(pose, X) - pixel.
Eigen::Matrix<double, 2, 6> reprojection_jacobian(const CameraPose& pose, const Intrinsics& K,
                                                  const Point3& X);

double huber(double residual_norm, double scale);
double robust_cost(const CameraPose& pose, std::span<const Correspondence2D3D> corr,
                   const Intrinsics& K, double loss_scale_px);

// Levenberg-Marquardt on the Huber-robustified reprojection error. Never
// increases robust_cost; needs at least 4 correspondences (else returns the
// input).
CameraPose refine_pose(const CameraPose& initial, std::span<const Correspondence2D3D> corr,
                       const Intrinsics& K, double loss_scale_px);

// Same damping schedule as refine_pose, applied to the Sampson epipolar
// distances (query pixels) of the listed ray correspondences, numerical
// Jacobian. Never increases robust_ray_cost over those correspondences.
CameraPose refine_pose_rays(const CameraPose& initial, const E5p1Problem& problem,
                            std::span<const int> indices, double loss_scale_px);
double robust_ray_cost(const CameraPose& pose, const E5p1Problem& problem,
                       std::span<const int> indices, double loss_scale_px);

// ---- estimators ------------------------------------------------------------

LocalizationResult ransac_p3p(std::span<const Correspondence2D3D> corr, const Intrinsics& K,
                              const RansacConfig& cfg, RansacTrace* trace = nullptr);

// Minimal samples take 5 correspondences from one reference and 1 from a
// different one. With `primary_reference` set, the 5 are always drawn from
// that reference.
LocalizationResult ransac_e5p1(const E5p1Problem& problem, const RansacConfig& cfg,
                               std::optional<int> primary_reference = std::nullopt,
                               RansacTrace* trace = nullptr);

// Iterations needed so that an all-inlier sample of `sample_size` has been
// drawn with probability `confidence`.
std::uint64_t required_iterations(double inlier_ratio, int sample_size, double confidence);

}  // namespace obfloc
