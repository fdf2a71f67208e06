#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "obfloc/dataio.hpp"

namespace obfloc {

struct SynthConfig {
  int num_cameras = 20;  // references
  int num_points = 200;
  int num_queries = 10;
  double scene_extent = 4.0;  // cube side length
  double noise_px = 0.0;
  double outlier_frac = 0.0;
  std::uint64_t seed = 0;
  Intrinsics intrinsics{800, 800, 512, 384, 1024, 768};
  int descriptor_dim = 64;
  int num_segments = 0;  // > 0 adds Voronoi label maps

  void validate() const;
};

struct SynthScene {
  SceneDatabase references;
  SceneDatabase queries;  // poses are ground truth
  std::vector<Point3> points;
  std::vector<MatchSet> matches;  // one set per (query, reference), query on side a
  std::vector<GlobalDescriptor> descriptors;  // references then queries
  std::unordered_map<std::string, LabelMap> labelmaps;
};

// Cameras on a randomized ring looking into a cube of points; matches are
// exact projection pairs, confidences in [0.5, 1]. Noise and outliers from
// the config are applied through corrupt_matches.
SynthScene generate_scene(const SynthConfig& cfg);

// Radial-basis descriptor of a camera center (unit norm).
std::vector<float> synth_descriptor(const Vec3& center, double scene_extent, int dim);

// Replaces floor(outlier_frac * n) matches of each set with uniform
// in-bounds endpoints and adds N(0, noise_px) to both endpoints of the rest
// (clamped to the image). Set s draws from derive_seed(seed, s).
std::vector<MatchSet> corrupt_matches(const std::vector<MatchSet>& sets, const IntrinsicsLookup& sizes,
                                      double noise_px, double outlier_frac, std::uint64_t seed);

// scene.txt, queries.txt, matches.txt, descriptors.gdsc and labelmaps/<id>.png.
void write_fixture(const SynthScene& scene, const fs::path& dir);

// ---- evaluation ------------------------------------------------------------

struct Threshold {
  double position = 0;     // scene units (meters on real data)
  double rotation_deg = 0;
};
using ThresholdSet = std::vector<Threshold>;

// "0.25,2;0.5,5;5,10"
ThresholdSet parse_thresholds(std::string_view text);
std::string format_threshold(const Threshold& t);

struct QueryEvaluation {
  std::string id;
  double position_error = 0;  // +inf for failures
  double rotation_error_deg = 0;
  int num_inliers = 0;
  LocalizationStatus status = LocalizationStatus::Failure;
  std::vector<bool> success;  // per threshold
};

struct EvaluationReport {
  ThresholdSet thresholds;
  std::vector<QueryEvaluation> queries;  // ground-truth order
  std::vector<double> recall;             // fractions in [0, 1]
  double mpe = 0;
  double moe = 0;
};

// Lower-middle element of the sorted values.
double lower_median(std::vector<double> values);

// Throws IdMismatch unless every ground-truth query has exactly one result.
EvaluationReport evaluate(const std::vector<QueryResult>& results, const SceneDatabase& gt,
                          const ThresholdSet& thresholds);

// `query_id,pos_err_m,rot_err_deg,num_inliers,status`
std::string format_evaluation_csv(const EvaluationReport& report);
std::string format_evaluation_summary(const EvaluationReport& report);

struct Table {
  std::string text;
  std::string csv;
};

// Recalls as `a / b / c` percentages with one decimal, then MPE and MOE.
Table emit_table(const std::vector<std::pair<std::string, EvaluationReport>>& reports);

}  // namespace obfloc
