#include "obfloc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <unordered_map>

#include "obfloc/error.hpp"
#include "obfloc/random.hpp"

namespace obfloc {

// ---- retrieval -------------------------------------------------------------

std::vector<std::string> retrieve_topk(const GlobalDescriptor& query, std::span<const GlobalDescriptor> database,
                                       std::size_t k) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "retrieve_topk needs k >= 1");
  if (database.empty()) throw Error(ErrorCode::InvalidArgument, "retrieve_topk needs a non-empty database");
  const std::size_t dim = query.values.size();
  for (const auto& d : database)
    if (d.values.size() != dim)
      throw Error(ErrorCode::DimensionMismatch, "descriptor '" + d.id + "' has dimension " +
                                                    std::to_string(d.values.size()) + ", query has " + std::to_string(dim));
  const long n = static_cast<long>(database.size());
  std::vector<double> score(n);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < dim; ++j) s += static_cast<double>(query.values[j]) * database[i].values[j];
    score[i] = s;
  }
  std::vector<long> order(n);
  std::iota(order.begin(), order.end(), 0L);
  const std::size_t m = std::min<std::size_t>(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<long>(m), order.end(), [&](long a, long b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return database[a].id < database[b].id;
  });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(database[order[i]].id);
  return out;
}

MatchSet select_top_matches(const MatchSet& m, std::size_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "select_top_matches needs n >= 1");
  MatchSet out{m.id_a, m.id_b, m.matches};
  std::stable_sort(out.matches.begin(), out.matches.end(),
                   [](const Match& a, const Match& b) { return a.confidence > b.confidence; });
  if (out.matches.size() > n) out.matches.resize(n);
  return out;
}

// ---- tracks ----------------------------------------------------------------

std::vector<Track> build_tracks(std::span<const MatchSet> query_matches, double quantization_px) {
  if (!(quantization_px > 0)) throw Error(ErrorCode::InvalidArgument, "quantization must be positive");
  struct Member {
    Point2 query;
    Point2 ref;
    double confidence;
  };
  std::map<std::pair<long, long>, std::map<std::string, Member>> cells;
  for (const auto& set : query_matches) {
    if (!query_matches.empty() && set.id_a != query_matches.front().id_a)
      throw Error(ErrorCode::InvalidArgument, "build_tracks needs one query image on side a");
    for (const auto& m : set.matches) {
      const std::pair<long, long> cell{static_cast<long>(std::floor(m.a.x() / quantization_px)),
                                       static_cast<long>(std::floor(m.a.y() / quantization_px))};
      auto& refs = cells[cell];
      const auto it = refs.find(set.id_b);
      if (it == refs.end() || m.confidence > it->second.confidence) refs[set.id_b] = {m.a, m.b, m.confidence};
    }
  }
  std::vector<Track> out;
  for (const auto& [cell, refs] : cells) {
    if (refs.size() < 2) continue;
    Track t;
    Point2 acc = Point2::Zero(), plain = Point2::Zero();
    double wsum = 0;
    for (const auto& [id, mem] : refs) {
      t.observations.push_back({id, mem.ref, mem.confidence});
      acc += mem.confidence * mem.query;
      plain += mem.query;
      wsum += mem.confidence;
    }
    t.query_pixel = wsum > 0 ? Point2(acc / wsum) : Point2(plain / static_cast<double>(refs.size()));
    out.push_back(std::move(t));
  }
  return out;
}

// ---- solvers ---------------------------------------------------------------

E5p1Problem make_ray_problem(const Intrinsics& query_K, const SceneDatabase& db, std::span<const MatchSet> matches) {
  E5p1Problem p;
  p.query_intrinsics = query_K;
  std::unordered_map<std::string, int> ref_index;
  for (const auto& set : matches) {
    if (set.matches.empty()) continue;
    const SceneRecord& ref = db.at(set.id_b);
    auto [it, fresh] = ref_index.emplace(set.id_b, static_cast<int>(p.reference_poses.size()));
    if (fresh) p.reference_poses.push_back(ref.pose);
    for (const auto& m : set.matches) p.correspondences.push_back({m.a, it->second, backproject(ref.K, m.b)});
  }
  return p;
}

int matched_reference_count(std::span<const MatchSet> matches) {
  std::set<std::string> refs;
  for (const auto& s : matches)
    if (!s.matches.empty()) refs.insert(s.id_b);
  return static_cast<int>(refs.size());
}

namespace {

constexpr int kFinalRefineRounds = 10;

LocalizationResult with_status(LocalizationStatus status, int num_correspondences) {
  LocalizationResult r;
  r.status = status;
  r.num_correspondences = num_correspondences;
  r.inlier_mask.assign(num_correspondences, false);
  return r;
}

void rescore(LocalizationResult& r, double score, std::vector<bool> mask) {
  r.score = score;
  r.num_inliers = static_cast<int>(std::count(mask.begin(), mask.end(), true));
  r.inlier_mask = std::move(mask);
}

// Midpoint triangulation of the listed ray correspondences at `pose`.
std::vector<Correspondence2D3D> triangulate_rays(const CameraPose& pose, const E5p1Problem& p,
                                                 const std::vector<bool>& keep) {
  std::vector<Correspondence2D3D> out;
  for (std::size_t i = 0; i < p.correspondences.size(); ++i) {
    if (!keep[i]) continue;
    const auto& c = p.correspondences[i];
    const auto X = triangulate_two_view(pose, p.reference_poses[c.reference], backproject(p.query_intrinsics, c.query_pixel),
                                        c.ref_bearing);
    if (X) out.push_back({c.query_pixel, *X});
  }
  return out;
}

double max_ray_angle_deg(std::span<const CameraPose> poses, const Point3& X) {
  double best = 0;
  for (std::size_t i = 0; i < poses.size(); ++i)
    for (std::size_t j = i + 1; j < poses.size(); ++j)
      best = std::max(best, angle_between(X - poses[i].center(), X - poses[j].center()));
  return best * 180.0 / M_PI;
}

}  // namespace

LocalizationResult localize_e5p1(const Intrinsics& query_K, const SceneDatabase& db, std::span<const MatchSet> matches,
                                 const RansacConfig& cfg) {
  const E5p1Problem problem = make_ray_problem(query_K, db, matches);
  const int n = static_cast<int>(problem.correspondences.size());
  if (matched_reference_count(matches) < 2) return with_status(LocalizationStatus::InsufficientReferences, n);
  LocalizationResult r = ransac_e5p1(problem, cfg);
  if (!r.ok()) return r;

  // Triangulate and refine until the ray MSAC stops improving.
  const double tau = cfg.inlier_threshold_px;
  for (int round = 0; round < kFinalRefineRounds; ++round) {
    const auto points = triangulate_rays(*r.pose, problem, r.inlier_mask);
    const CameraPose refined = refine_pose(*r.pose, points, query_K, tau);
    std::vector<bool> mask;
    const double s = msac_score(refined, problem, tau, &mask);
    if (!(s <= r.score)) break;
    const double gain = r.score - s;
    r.pose = refined;
    rescore(r, s, std::move(mask));
    if (gain <= 1e-9 * std::max(1.0, s)) break;
  }
  return r;
}

std::vector<Correspondence2D3D> triangulate_tracks(std::span<const Track> tracks, const SceneDatabase& db,
                                                   double min_angle_deg) {
  std::vector<Correspondence2D3D> out;
  std::vector<CameraPose> poses;
  std::vector<Bearing> rays;
  for (const auto& t : tracks) {
    poses.clear();
    rays.clear();
    for (const auto& o : t.observations) {
      const SceneRecord& ref = db.at(o.reference_id);
      poses.push_back(ref.pose);
      rays.push_back(backproject(ref.K, o.pixel));
    }
    const auto X = triangulate_multiview(poses, rays);
    if (!X || max_ray_angle_deg(poses, *X) < min_angle_deg) continue;
    out.push_back({t.query_pixel, *X});
  }
  return out;
}

LocalizationResult localize_lt(const Intrinsics& query_K, const SceneDatabase& db, std::span<const MatchSet> matches,
                               const RansacConfig& cfg, double quantization_px) {
  if (matched_reference_count(matches) < 2)
    return with_status(LocalizationStatus::InsufficientReferences, 0);
  const auto tracks = build_tracks(matches, quantization_px);
  const auto corr = triangulate_tracks(tracks, db);
  const int n = static_cast<int>(corr.size());
  if (n < 4) return with_status(LocalizationStatus::Failure, n);
  LocalizationResult r = ransac_p3p(corr, query_K, cfg);
  if (!r.ok()) return r;

  const double tau = cfg.inlier_threshold_px;
  std::vector<Correspondence2D3D> inliers;
  for (int i = 0; i < n; ++i)
    if (r.inlier_mask[i]) inliers.push_back(corr[i]);
  const CameraPose refined = refine_pose(*r.pose, inliers, query_K, tau);
  std::vector<bool> mask;
  const double s = msac_score(refined, query_K, corr, tau, &mask);
  if (s <= r.score) {
    r.pose = refined;
    rescore(r, s, std::move(mask));
  }
  return r;
}

// ---- segments --------------------------------------------------------------

std::vector<SegmentStats> assign_keypoints_to_segments(const LabelMap& labels, std::span<const Point2> keypoints,
                                                       int dilation_px, int min_area_px) {
  if (dilation_px < 0 || min_area_px < 1) throw Error(ErrorCode::InvalidArgument, "bad segment parameters");
  struct Acc {
    long area = 0;
    double sx = 0, sy = 0;
  };
  std::map<std::int32_t, Acc> acc;
  for (int y = 0; y < labels.height; ++y)
    for (int x = 0; x < labels.width; ++x) {
      const std::int32_t l = labels.at(x, y);
      if (l == 0) continue;
      Acc& a = acc[l];
      ++a.area;
      a.sx += x;
      a.sy += y;
    }
  std::map<std::int32_t, std::size_t> slot;
  std::vector<SegmentStats> out;
  for (const auto& [l, a] : acc) {
    if (a.area < min_area_px) continue;
    slot[l] = out.size();
    out.push_back({l, a.area, Point2(a.sx / a.area, a.sy / a.area), {}});
  }
  std::set<std::int32_t> hit;
  for (std::size_t k = 0; k < keypoints.size(); ++k) {
    const long px = std::lround(keypoints[k].x()), py = std::lround(keypoints[k].y());
    hit.clear();
    for (long y = std::max(0L, py - dilation_px); y <= std::min<long>(labels.height - 1, py + dilation_px); ++y)
      for (long x = std::max(0L, px - dilation_px); x <= std::min<long>(labels.width - 1, px + dilation_px); ++x)
        hit.insert(labels.at(static_cast<int>(x), static_cast<int>(y)));
    for (std::int32_t l : hit) {
      const auto it = slot.find(l);
      if (it != slot.end()) out[it->second].keypoints.push_back(static_cast<int>(k));
    }
  }
  return out;
}

std::vector<SegmentPair> match_segments(std::span<const SegmentStats> stats_q, std::span<const SegmentStats> stats_r,
                                        const MatchSet& matches, double min_iou) {
  const std::size_t n = matches.matches.size();
  std::vector<std::vector<std::size_t>> q_of(n), r_of(n);
  for (std::size_t s = 0; s < stats_q.size(); ++s)
    for (int k : stats_q[s].keypoints)
      if (k >= 0 && static_cast<std::size_t>(k) < n) q_of[k].push_back(s);
  for (std::size_t s = 0; s < stats_r.size(); ++s)
    for (int k : stats_r[s].keypoints)
      if (k >= 0 && static_cast<std::size_t>(k) < n) r_of[k].push_back(s);
  std::map<std::pair<std::size_t, std::size_t>, int> links;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t a : q_of[k])
      for (std::size_t b : r_of[k]) ++links[{a, b}];

  std::vector<SegmentPair> proposals;
  std::vector<SegmentPair> best(stats_q.size());
  std::vector<bool> has(stats_q.size(), false);
  for (const auto& [ab, cnt] : links) {
    const auto [a, b] = ab;
    const double iou = cnt / static_cast<double>(stats_q[a].keypoints.size() + stats_r[b].keypoints.size() - cnt);
    const SegmentPair cand{stats_q[a].label, stats_r[b].label, cnt, iou};
    if (!has[a] || iou > best[a].iou || (iou == best[a].iou && cand.label_r < best[a].label_r)) {
      best[a] = cand;
      has[a] = true;
    }
  }
  for (std::size_t a = 0; a < stats_q.size(); ++a)
    if (has[a] && best[a].links > 0 && best[a].iou >= min_iou) proposals.push_back(best[a]);
  std::sort(proposals.begin(), proposals.end(), [](const SegmentPair& x, const SegmentPair& y) {
    if (x.iou != y.iou) return x.iou > y.iou;
    return x.label_q < y.label_q;
  });
  std::vector<SegmentPair> out;
  std::set<std::int32_t> taken;
  for (const auto& p : proposals)
    if (taken.insert(p.label_r).second) out.push_back(p);
  return out;
}

MatchSet segment_centroid_matches(std::span<const SegmentPair> pairs, std::span<const SegmentStats> stats_q,
                                  std::span<const SegmentStats> stats_r, const std::string& id_q,
                                  const std::string& id_r) {
  std::map<std::int32_t, const SegmentStats*> q, r;
  for (const auto& s : stats_q) q[s.label] = &s;
  for (const auto& s : stats_r) r[s.label] = &s;
  MatchSet out{id_q, id_r, {}};
  for (const auto& p : pairs) {
    const auto iq = q.find(p.label_q);
    const auto ir = r.find(p.label_r);
    if (iq == q.end() || ir == r.end())
      throw Error(ErrorCode::InvalidArgument, "segment pair refers to an unknown label");
    out.matches.push_back({iq->second->centroid, ir->second->centroid, p.iou});
  }
  return out;
}

double original_msac(const CameraPose& pose, const E5p1Problem& original, double tau_px) {
  return msac_score(pose, original, tau_px);
}

LocalizationResult refine_with_segments(const LocalizationResult& result, std::span<const MatchSet> original_matches,
                                        std::span<const MatchSet> centroid_matches, const SceneDatabase& db,
                                        const Intrinsics& query_K, double tau_px) {
  if (!result.ok()) return result;
  const E5p1Problem original = make_ray_problem(query_K, db, original_matches);
  const E5p1Problem centroids = make_ray_problem(query_K, db, centroid_matches);
  if (centroids.correspondences.empty()) return result;

  const CameraPose& pose = *result.pose;
  std::vector<bool> mask;
  const double before = msac_score(pose, original, tau_px, &mask);
  auto points = triangulate_rays(pose, original, mask);
  const auto extra = triangulate_rays(pose, centroids, std::vector<bool>(centroids.correspondences.size(), true));
  if (extra.empty()) return result;
  points.insert(points.end(), extra.begin(), extra.end());
  const CameraPose refined = refine_pose(pose, points, query_K, tau_px);
  if (!(msac_score(refined, original, tau_px) <= before)) return result;
  LocalizationResult out = result;
  out.pose = refined;
  return out;
}

// ---- batch -----------------------------------------------------------------

LocalizationResult localize_query(const QueryInput& query, const SceneDatabase& db,
                                  std::span<const GlobalDescriptor> database, const BatchOptions& options) {
  std::set<std::string> allowed;
  const bool filter = query.descriptor && !database.empty() && options.topk > 0;
  if (filter)
    for (auto& id : retrieve_topk(*query.descriptor, database, options.topk)) allowed.insert(std::move(id));

  std::vector<MatchSet> selected, full;
  for (const auto& set : query.matches) {
    if (set.id_a != query.id) continue;
    if (filter && !allowed.count(set.id_b)) continue;
    full.push_back(set);
    selected.push_back(select_top_matches(set, options.pose_matches));
  }

  LocalizationResult r = options.solver == Solver::E5p1
                             ? localize_e5p1(query.K, db, selected, options.ransac)
                             : localize_lt(query.K, db, selected, options.ransac, options.quantization_px);

  if (options.refine_segments && r.ok() && query.labels && options.reference_labels) {
    std::vector<MatchSet> centroid_sets;
    for (const auto& set : full) {
      const auto it = options.reference_labels->find(set.id_b);
      if (it == options.reference_labels->end()) continue;
      const MatchSet seg = select_top_matches(set, kSegmentMatches);
      std::vector<Point2> kq, kr;
      for (const auto& m : seg.matches) {
        kq.push_back(m.a);
        kr.push_back(m.b);
      }
      const auto sq = assign_keypoints_to_segments(*query.labels, kq);
      const auto sr = assign_keypoints_to_segments(it->second, kr);
      const auto pairs = match_segments(sq, sr, seg);
      centroid_sets.push_back(segment_centroid_matches(pairs, sq, sr, set.id_a, set.id_b));
    }
    r = refine_with_segments(r, selected, centroid_sets, db, query.K, options.ransac.inlier_threshold_px);
  }
  return r;
}

std::vector<QueryResult> localize_batch(std::span<const QueryInput> queries, const SceneDatabase& db,
                                        const BatchOptions& options) {
  options.ransac.validate();
  std::vector<GlobalDescriptor> database;
  for (const auto& rec : db.records())
    if (rec.descriptor) database.push_back(*rec.descriptor);

  const long n = static_cast<long>(queries.size());
  std::vector<QueryResult> out(n);
  std::vector<std::optional<Error>> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < n; ++i) {
    BatchOptions local = options;
    local.ransac.seed = derive_seed(options.ransac.seed, static_cast<std::uint64_t>(i));
    out[i].query_id = queries[i].id;
    try {
      out[i].result = localize_query(queries[i], db, database, local);
    } catch (const Error& e) {
      errors[i] = e;
    }
  }
  for (long i = 0; i < n; ++i)
    if (errors[i]) throw Error(errors[i]->code(), "query '" + queries[i].id + "': " + errors[i]->what());
  return out;
}

}  // namespace obfloc
