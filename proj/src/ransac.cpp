#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>

#include "obfloc/error.hpp"
#include "obfloc/random.hpp"
#include "obfloc/robust.hpp"
#include "obfloc/solvers.hpp"

namespace obfloc {

void RansacConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorCode::InvalidArgument, "max_iterations must be >= 1");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw Error(ErrorCode::InvalidArgument, "confidence must lie in (0, 1)");
  if (!(inlier_threshold_px > 0.0))
    throw Error(ErrorCode::InvalidArgument, "inlier threshold must be positive");
  if (lo_iterations < 0 || min_inliers < 0)
    throw Error(ErrorCode::InvalidArgument, "negative iteration or inlier count");
}

const char* to_string(LocalizationStatus status) {
  switch (status) {
    case LocalizationStatus::Success: return "ok";
    case LocalizationStatus::Failure: return "failure";
    case LocalizationStatus::InsufficientReferences: return "insufficient_references";
  }
  return "unknown";
}

bool operator==(const LocalizationResult& a, const LocalizationResult& b) {
  if (a.status != b.status || a.num_inliers != b.num_inliers ||
      a.num_correspondences != b.num_correspondences || a.iterations_run != b.iterations_run ||
      a.inlier_mask != b.inlier_mask || a.pose.has_value() != b.pose.has_value())
    return false;
  if (std::isfinite(a.score) || std::isfinite(b.score)) {
    if (a.score != b.score) return false;
  }
  if (a.pose) return a.pose->R == b.pose->R && a.pose->t == b.pose->t;
  return true;
}

std::optional<double> reprojection_error(const CameraPose& pose, const Intrinsics& K,
                                         const Correspondence2D3D& c) {
  const auto u = project(pose, K, c.point);
  if (!u) return std::nullopt;
  return (*u - c.pixel).norm();
}

namespace {

std::optional<RayPairClosest> query_ref_closest(const CameraPose& query_pose, const Intrinsics& K,
                                                const CameraPose& ref_pose,
                                                const RayCorrespondence& c) {
  const Vec3 dir_q = query_pose.R.transpose() * backproject(K, c.query_pixel);
  const Vec3 dir_r = (ref_pose.R.transpose() * c.ref_bearing).normalized();
  auto closest = closest_points(query_pose.center(), dir_q, ref_pose.center(), dir_r);
  if (!closest || closest->depth_a <= 0 || closest->depth_b <= 0) return std::nullopt;
  return closest;
}

}  // namespace

std::optional<double> ray_reprojection_error(const CameraPose& query_pose, const Intrinsics& K,
                                             const CameraPose& ref_pose,
                                             const RayCorrespondence& c) {
  const auto closest = query_ref_closest(query_pose, K, ref_pose, c);
  if (!closest) return std::nullopt;
  const auto u = project(query_pose, K, 0.5 * (closest->point_a + closest->point_b));
  if (!u) return std::nullopt;
  return (*u - c.query_pixel).norm();
}

std::optional<Point3> anchor_on_reference_ray(const CameraPose& query_pose, const Intrinsics& K,
                                              const CameraPose& ref_pose,
                                              const RayCorrespondence& c) {
  const auto closest = query_ref_closest(query_pose, K, ref_pose, c);
  if (!closest) return std::nullopt;
  return closest->point_b;
}

double msac_score(const CameraPose& pose, const Intrinsics& K,
                  std::span<const Correspondence2D3D> corr, double tau_px,
                  std::vector<bool>* inliers) {
  const double tau2 = tau_px * tau_px;
  if (inliers) inliers->assign(corr.size(), false);
  double score = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const auto e = reprojection_error(pose, K, corr[i]);
    const double e2 = e ? *e * *e : tau2;
    if (e2 < tau2) {
      score += e2;
      if (inliers) (*inliers)[i] = true;
    } else {
      score += tau2;
    }
  }
  return score;
}

double msac_score(const CameraPose& pose, const E5p1Problem& problem, double tau_px,
                  std::vector<bool>* inliers) {
  const double tau2 = tau_px * tau_px;
  const auto& corr = problem.correspondences;
  if (inliers) inliers->assign(corr.size(), false);
  double score = 0.0;
  for (std::size_t i = 0; i < corr.size(); ++i) {
    const auto e = ray_reprojection_error(pose, problem.query_intrinsics,
                                          problem.reference_poses[corr[i].reference], corr[i]);
    const double e2 = e ? *e * *e : tau2;
    if (e2 < tau2) {
      score += e2;
      if (inliers) (*inliers)[i] = true;
    } else {
      score += tau2;
    }
  }
  return score;
}

std::uint64_t required_iterations(double inlier_ratio, int sample_size, double confidence) {
  const double p_good = std::pow(std::clamp(inlier_ratio, 0.0, 1.0), sample_size);
  if (p_good >= 1.0) return 1;
  if (p_good <= 0.0) return std::numeric_limits<std::uint64_t>::max();
  const double k = std::log(1.0 - confidence) / std::log(1.0 - p_good);
  if (!std::isfinite(k) || k > 1e18) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::ceil(std::max(k, 1.0)));
}

namespace {

// Draws `count` distinct values from `pool` into `out` (partial Fisher-Yates
// on a scratch copy).
template <std::size_t N>
void sample_distinct(CounterRng& rng, std::vector<int>& pool, std::size_t pool_size,
                     std::array<int, N>& out, std::size_t count = N) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(pool_size - i);
    std::swap(pool[i], pool[j]);
    out[i] = pool[i];
  }
}

// Shared LO-RANSAC bookkeeping for both estimators.
struct BestModel {
  std::optional<CameraPose> pose;
  double score = std::numeric_limits<double>::infinity();
  int inliers = 0;
};

LocalizationResult finish(const BestModel& best, int n, int iterations, const RansacConfig& cfg,
                          const std::function<double(const CameraPose&, std::vector<bool>*)>& score_fn) {
  LocalizationResult out;
  out.num_correspondences = n;
  out.iterations_run = iterations;
  out.inlier_mask.assign(n, false);
  if (!best.pose) return out;
  out.score = score_fn(*best.pose, &out.inlier_mask);
  out.num_inliers = static_cast<int>(std::count(out.inlier_mask.begin(), out.inlier_mask.end(), true));
  if (out.num_inliers < cfg.min_inliers || out.num_inliers == 0) {
    out.status = LocalizationStatus::Failure;
    return out;
  }
  out.status = LocalizationStatus::Success;
  out.pose = best.pose;
  return out;
}

}  // namespace

LocalizationResult ransac_p3p(std::span<const Correspondence2D3D> corr, const Intrinsics& K,
                              const RansacConfig& cfg, RansacTrace* trace) {
  cfg.validate();
  const int n = static_cast<int>(corr.size());
  const double tau = cfg.inlier_threshold_px;
  auto score_fn = [&](const CameraPose& pose, std::vector<bool>* mask) {
    return msac_score(pose, K, corr, tau, mask);
  };
  BestModel best;
  if (n < 4) return finish(best, n, 0, cfg, score_fn);

  std::vector<Bearing> bearings(n);
  for (int i = 0; i < n; ++i) bearings[i] = backproject(K, corr[i].pixel);

  CounterRng rng(cfg.seed);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<bool> mask;
  std::vector<Correspondence2D3D> inlier_set;

  auto consider = [&](const CameraPose& pose) {
    const double s = score_fn(pose, nullptr);
    if (trace) trace->hypothesis_scores.push_back(s);
    return s;
  };

  std::uint64_t needed = static_cast<std::uint64_t>(cfg.max_iterations);
  int iter = 0;
  for (; iter < cfg.max_iterations && static_cast<std::uint64_t>(iter) < needed; ++iter) {
    std::array<int, 3> idx{};
    sample_distinct(rng, pool, n, idx);
    const std::array<Point3, 3> pts = {corr[idx[0]].point, corr[idx[1]].point, corr[idx[2]].point};
    const std::array<Bearing, 3> rays = {bearings[idx[0]], bearings[idx[1]], bearings[idx[2]]};

    bool improved = false;
    for (const auto& pose : p3p(pts, rays)) {
      const double s = consider(pose);
      if (s < best.score) {
        best.score = s;
        best.pose = pose;
        improved = true;
      }
    }
    if (!improved) continue;

    // Local optimisation on the inliers of the new best model.
    for (int lo = 0; lo < cfg.lo_iterations; ++lo) {
      score_fn(*best.pose, &mask);
      inlier_set.clear();
      for (int i = 0; i < n; ++i)
        if (mask[i]) inlier_set.push_back(corr[i]);
      if (inlier_set.size() < 4) break;
      const CameraPose refined = refine_pose(*best.pose, inlier_set, K, tau);
      const double s = consider(refined);
      if (!(s < best.score)) break;
      best.score = s;
      best.pose = refined;
    }
    score_fn(*best.pose, &mask);
    best.inliers = static_cast<int>(std::count(mask.begin(), mask.end(), true));
    needed = std::min<std::uint64_t>(needed, required_iterations(static_cast<double>(best.inliers) / n, 3, cfg.confidence));
  }
  return finish(best, n, iter, cfg, score_fn);
}

LocalizationResult ransac_e5p1(const E5p1Problem& problem, const RansacConfig& cfg,
                               std::optional<int> primary_reference, RansacTrace* trace) {
  cfg.validate();
  const auto& corr = problem.correspondences;
  const Intrinsics& K = problem.query_intrinsics;
  const int n = static_cast<int>(corr.size());
  const double tau = cfg.inlier_threshold_px;
  auto score_fn = [&](const CameraPose& pose, std::vector<bool>* mask) {
    return msac_score(pose, problem, tau, mask);
  };
  BestModel best;

  const int num_refs = static_cast<int>(problem.reference_poses.size());
  std::vector<std::vector<int>> by_ref(num_refs);
  for (int i = 0; i < n; ++i) {
    const int r = corr[i].reference;
    if (r < 0 || r >= num_refs) throw Error(ErrorCode::InvalidArgument, "correspondence references unknown image");
    by_ref[r].push_back(i);
  }
  int refs_with_matches = 0;
  for (const auto& v : by_ref) refs_with_matches += v.empty() ? 0 : 1;

  // Primary candidates: references with >= 5 matches; a draw picks a
  // correspondence uniformly among them and uses its reference.
  std::vector<int> primary_pool;
  for (int r = 0; r < num_refs; ++r) {
    if (primary_reference && r != *primary_reference) continue;
    if (by_ref[r].size() >= 5 && static_cast<int>(by_ref[r].size()) < n)
      primary_pool.insert(primary_pool.end(), by_ref[r].begin(), by_ref[r].end());
  }
  if (n < 6 || refs_with_matches < 2 || primary_pool.empty()) return finish(best, n, 0, cfg, score_fn);

  std::vector<BearingPair> pairs_all(n);
  for (int i = 0; i < n; ++i)
    pairs_all[i] = {corr[i].ref_bearing.normalized(), backproject(K, corr[i].query_pixel)};

  CounterRng rng(cfg.seed);
  std::vector<std::vector<int>> pools = by_ref;
  std::vector<bool> mask;
  std::vector<int> inlier_idx;

  auto consider = [&](const CameraPose& pose) {
    const double s = score_fn(pose, nullptr);
    if (trace) trace->hypothesis_scores.push_back(s);
    return s;
  };

  std::uint64_t needed = static_cast<std::uint64_t>(cfg.max_iterations);
  int iter = 0;
  for (; iter < cfg.max_iterations && static_cast<std::uint64_t>(iter) < needed; ++iter) {
    const int ref1 = corr[primary_pool[rng.below(primary_pool.size())]].reference;
    std::array<int, 5> idx{};
    sample_distinct(rng, pools[ref1], pools[ref1].size(), idx);
    // Sixth correspondence: uniform over matches to any other reference.
    const std::uint64_t others = static_cast<std::uint64_t>(n) - by_ref[ref1].size();
    std::uint64_t k = rng.below(others);
    int sixth = -1;
    for (int r = 0; r < num_refs && sixth < 0; ++r) {
      if (r == ref1) continue;
      if (k < by_ref[r].size()) {
        sixth = by_ref[r][k];
      } else {
        k -= by_ref[r].size();
      }
    }

    std::array<BearingPair, 5> five;
    for (int i = 0; i < 5; ++i) five[i] = pairs_all[idx[i]];
    const CameraPose& pose1 = problem.reference_poses[ref1];
    const CameraPose& pose2 = problem.reference_poses[corr[sixth].reference];
    const BearingPair sixth_pair{pairs_all[sixth].second, pairs_all[sixth].first};

    bool improved = false;
    for (const auto& E : essential_5pt(five)) {
      const auto rel = decompose_essential(E, five);
      if (!rel) continue;
      const auto scale = solve_scale_e5p1(*rel, pose1, pose2, sixth_pair);
      if (!scale || !(*scale > 0)) continue;
      const CameraPose pose = query_pose_from_relative(*rel, pose1, *scale);
      const double s = consider(pose);
      if (s < best.score) {
        best.score = s;
        best.pose = pose;
        improved = true;
      }
    }
    if (!improved) continue;

    // Local optimisation: damped least squares on the inliers' Sampson
    // residuals, repeated while the MSAC score keeps improving.
    for (int lo = 0; lo < cfg.lo_iterations; ++lo) {
      score_fn(*best.pose, &mask);
      inlier_idx.clear();
      for (int i = 0; i < n; ++i)
        if (mask[i]) inlier_idx.push_back(i);
      if (inlier_idx.size() < 6) break;
      const CameraPose refined = refine_pose_rays(*best.pose, problem, inlier_idx, tau);
      const double s = consider(refined);
      if (!(s < best.score)) break;
      best.score = s;
      best.pose = refined;
    }
    score_fn(*best.pose, &mask);
    best.inliers = static_cast<int>(std::count(mask.begin(), mask.end(), true));
    needed = std::min<std::uint64_t>(needed, required_iterations(static_cast<double>(best.inliers) / n, 6, cfg.confidence));
  }
  return finish(best, n, iter, cfg, score_fn);
}

}  // namespace obfloc
