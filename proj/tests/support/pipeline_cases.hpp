// Multi-reference scenes as SceneDatabase + MatchSets, built by projection.
#pragma once

#include <string>
#include <vector>

#include "obfloc/dataio.hpp"
#include "support/scene_cases.hpp"

namespace oracle {

struct PipelineScene {
  CameraPose truth;
  Intrinsics K = default_intrinsics();
  SceneDatabase db;
  std::vector<Point3> points;
  std::vector<MatchSet> matches;  // query id "query"
};

struct SceneOptions {
  int num_refs = 4;
  int num_points = 100;
  double noise_px = 0;
  double outlier_frac = 0;
  bool co_located = false;  // all references share one center
};

inline PipelineScene make_pipeline_scene(Rand& rng, const SceneOptions& o) {
  PipelineScene s;
  const double az = rng.uniform(0, 2 * M_PI);
  s.truth = ring_camera(az, 4.0, rng.uniform(-1, 2));
  const Vec3 shared(5 * std::cos(az + 0.4), 5 * std::sin(az + 0.4), 1.0);
  for (int r = 0; r < o.num_refs; ++r) {
    CameraPose pose;
    if (o.co_located) {
      pose = looking_at(shared, Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)));
    } else {
      const double offset = (r % 2 == 0 ? 1 : -1) * rng.uniform(0.25, 0.6);
      pose = ring_camera(az + offset, rng.uniform(3.5, 6), rng.uniform(-2, 3));
    }
    // Round-trip through the serialized form so stored poses are exact.
    s.db.add(SceneRecord::make("ref" + std::to_string(r), s.K, pose));
  }
  while (static_cast<int>(s.points.size()) < o.num_points) {
    const Point3 X = rng.box(2.0);
    const auto u = project(s.truth, s.K, X);
    if (!u || !s.K.contains(*u)) continue;
    int seen = 0;
    for (const auto& rec : s.db.records()) {
      const auto v = project(rec.pose, s.K, X);
      seen += v && s.K.contains(*v);
    }
    if (seen >= 2) s.points.push_back(X);
  }
  for (const auto& rec : s.db.records()) {
    MatchSet m{"query", rec.id, {}};
    for (const Point3& X : s.points) {
      const auto u = project(s.truth, s.K, X);
      const auto v = project(rec.pose, s.K, X);
      if (!v || !s.K.contains(*v)) continue;
      m.matches.push_back({noisy(rng, *u, o.noise_px), noisy(rng, *v, o.noise_px), rng.uniform(0.5, 1.0)});
    }
    const int outliers = static_cast<int>(o.outlier_frac * m.matches.size());
    for (int k = 0; k < outliers; ++k) {
      m.matches[k].a = random_pixel(rng, s.K);
      m.matches[k].b = random_pixel(rng, s.K);
    }
    s.matches.push_back(std::move(m));
  }
  return s;
}

}  // namespace oracle
