#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "obfloc/dataio.hpp"
#include "obfloc/robust.hpp"

namespace obfloc {

// Ids of the k database entries with the largest inner product to the
// query, ties broken by ascending id.
std::vector<std::string> retrieve_topk(const GlobalDescriptor& query, std::span<const GlobalDescriptor> database,
                                       std::size_t k);

inline constexpr std::size_t kPoseMatches = 1024;
inline constexpr std::size_t kSegmentMatches = 4096;

// The n most confident matches, descending confidence, input order on ties.
MatchSet select_top_matches(const MatchSet& m, std::size_t n = kPoseMatches);

struct TrackObservation {
  std::string reference_id;
  Point2 pixel;
  double confidence = 1.0;
};

struct Track {
  Point2 query_pixel;
  std::vector<TrackObservation> observations;  // distinct references
};

// Groups matches by the grid cell of their query endpoint. Within a cell
// each reference keeps its most confident match (first on ties); cells with
// fewer than two references are dropped. Tracks come out in cell order.
std::vector<Track> build_tracks(std::span<const MatchSet> query_matches, double quantization_px = 2.0);

inline constexpr double kMinTriangulationAngleDeg = 1.0;

// Ray correspondences of `matches` against the posed references in `db`;
// throws IdMismatch for a reference id missing from db.
E5p1Problem make_ray_problem(const Intrinsics& query_K, const SceneDatabase& db, std::span<const MatchSet> matches);

// Number of distinct references with at least one match.
int matched_reference_count(std::span<const MatchSet> matches);

LocalizationResult localize_e5p1(const Intrinsics& query_K, const SceneDatabase& db, std::span<const MatchSet> matches,
                                 const RansacConfig& cfg);

// Triangulated 2D-3D correspondences from tracks (angle and cheirality
// filtered), in track order.
std::vector<Correspondence2D3D> triangulate_tracks(std::span<const Track> tracks, const SceneDatabase& db,
                                                   double min_angle_deg = kMinTriangulationAngleDeg);

LocalizationResult localize_lt(const Intrinsics& query_K, const SceneDatabase& db, std::span<const MatchSet> matches,
                               const RansacConfig& cfg, double quantization_px = 2.0);

// ---- segments --------------------------------------------------------------

struct SegmentStats {
  std::int32_t label = 0;
  long area = 0;
  Point2 centroid;          // mean pixel coordinate of the segment
  std::vector<int> keypoints;  // indices into the keypoint list, ascending
};

inline constexpr int kSegmentDilationPx = 5;
inline constexpr int kSegmentMinAreaPx = 100;
inline constexpr double kSegmentMinIou = 0.1;

// Label 0 (unlabeled) never forms a segment. Output is sorted by label.
std::vector<SegmentStats> assign_keypoints_to_segments(const LabelMap& labels, std::span<const Point2> keypoints,
                                                       int dilation_px = kSegmentDilationPx,
                                                       int min_area_px = kSegmentMinAreaPx);

struct SegmentPair {
  std::int32_t label_q = 0;
  std::int32_t label_r = 0;
  int links = 0;
  double iou = 0;
};

// Keypoint indices in stats_q refer to the query endpoints of `matches`,
// those in stats_r to the reference endpoints. Each query segment proposes
// its best reference segment (ties to the smaller label); proposals are
// accepted greedily by descending IoU (ties to the smaller query label),
// skipping reference segments already taken.
std::vector<SegmentPair> match_segments(std::span<const SegmentStats> stats_q, std::span<const SegmentStats> stats_r,
                                        const MatchSet& matches, double min_iou = kSegmentMinIou);

MatchSet segment_centroid_matches(std::span<const SegmentPair> pairs, std::span<const SegmentStats> stats_q,
                                  std::span<const SegmentStats> stats_r, const std::string& id_q = "",
                                  const std::string& id_r = "");

// MSAC over the original matches, midpoint metric.
double original_msac(const CameraPose& pose, const E5p1Problem& original, double tau_px);

// Appends centroid matches, triangulated against the current pose, to the
// inlier set and re-runs refine_pose; keeps the refinement only when the
// MSAC score over the original matches does not increase.
LocalizationResult refine_with_segments(const LocalizationResult& result, std::span<const MatchSet> original_matches,
                                        std::span<const MatchSet> centroid_matches, const SceneDatabase& db,
                                        const Intrinsics& query_K, double tau_px);

// ---- batch -----------------------------------------------------------------

enum class Solver { E5p1, LT };

struct QueryInput {
  std::string id;
  Intrinsics K;
  std::vector<MatchSet> matches;      // all pairs with this query on side a
  const GlobalDescriptor* descriptor = nullptr;
  const LabelMap* labels = nullptr;   // for segment refinement
};

struct BatchOptions {
  Solver solver = Solver::E5p1;
  RansacConfig ransac;
  std::size_t topk = 20;
  std::size_t pose_matches = kPoseMatches;
  double quantization_px = 2.0;
  bool refine_segments = false;
  // Reference label maps by id, required when refine_segments is set.
  const std::unordered_map<std::string, LabelMap>* reference_labels = nullptr;
};

// Localizes one query: retrieval, match selection, solver and optional
// segment refinement. The RANSAC seed is cfg.seed as given.
LocalizationResult localize_query(const QueryInput& query, const SceneDatabase& db,
                                  std::span<const GlobalDescriptor> database, const BatchOptions& options);

// Queries are independent: each uses seed derive_seed(options.ransac.seed, i)
// and results come back in input order regardless of thread count.
std::vector<QueryResult> localize_batch(std::span<const QueryInput> queries, const SceneDatabase& db,
                                        const BatchOptions& options);

}  // namespace obfloc
