#include <doctest.h>

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "obfloc/error.hpp"
#include "obfloc/pipeline.hpp"
#include "support/pipeline_cases.hpp"

using namespace obfloc;
using oracle::Rand;

namespace {

RansacConfig clean_cfg(std::uint64_t seed) {
  RansacConfig c;
  c.seed = seed;
  c.inlier_threshold_px = 2.0;
  return c;
}

double pos_err(const LocalizationResult& r, const CameraPose& gt) { return position_error(*r.pose, gt); }
double rot_err(const LocalizationResult& r, const CameraPose& gt) { return rotation_error_deg(*r.pose, gt); }

// Disc-shaped segments on a blank map.
LabelMap disc_map(int w, int h, const std::vector<std::array<int, 4>>& discs) {  // cx, cy, r, label
  LabelMap m(w, h);
  for (const auto& d : discs)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if ((x - d[0]) * (x - d[0]) + (y - d[1]) * (y - d[1]) <= d[2] * d[2]) m.at(x, y) = d[3];
  return m;
}

}  // namespace

TEST_CASE("retrieve_topk equals full sort truncation") {
  Rand rng(3);
  std::vector<GlobalDescriptor> db;
  for (int i = 0; i < 200; ++i) {
    GlobalDescriptor d{"id" + std::to_string(1000 - i), std::vector<float>(16)};
    for (float& v : d.values) v = static_cast<float>(rng.index(3));  // coarse values force ties
    db.push_back(d);
  }
  db.push_back(db[5]);
  db.back().id = "aaa";  // exact duplicate of another entry
  for (int trial = 0; trial < 20; ++trial) {
    GlobalDescriptor q{"q", std::vector<float>(16)};
    for (float& v : q.values) v = static_cast<float>(rng.uniform(-1, 1));
    std::vector<std::pair<double, std::string>> all;
    for (const auto& d : db) {
      double s = 0;
      for (int j = 0; j < 16; ++j) s += double(q.values[j]) * d.values[j];
      all.push_back({-s, d.id});
    }
    std::sort(all.begin(), all.end());
    for (std::size_t k : {1, 2, 7, 20, 201, 500}) {
      const auto got = retrieve_topk(q, db, k);
      REQUIRE(got.size() == std::min(k, db.size()));
      for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == all[i].second);
    }
  }
  CHECK_THROWS_AS(retrieve_topk(GlobalDescriptor{"q", {1, 2}}, db, 3), Error);
  CHECK_THROWS_AS(retrieve_topk(db[0], db, 0), Error);
}

TEST_CASE("select_top_matches is a stable confidence sort") {
  Rand rng(4);
  MatchSet m{"q", "r", {}};
  for (int i = 0; i < 3000; ++i) m.matches.push_back({Point2(i, 0), Point2(0, i), rng.index(10) / 10.0});
  const MatchSet top = select_top_matches(m);
  REQUIRE(top.matches.size() == kPoseMatches);
  std::vector<int> order(m.matches.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (m.matches[a].confidence != m.matches[b].confidence) return m.matches[a].confidence > m.matches[b].confidence;
    return a < b;
  });
  for (std::size_t i = 0; i < kPoseMatches; ++i) CHECK(top.matches[i].a.x() == order[i]);
  CHECK(select_top_matches(m, 5000).matches.size() == 3000);
}

TEST_CASE("build_tracks small cases") {
  const std::vector<MatchSet> same{{"q", "r1", {{Point2(10.2, 20.7), Point2(1, 1), 0.5}}},
                                   {"q", "r2", {{Point2(10.2, 20.7), Point2(2, 2), 1.0}}}};
  auto t = build_tracks(same, 2.0);
  REQUIRE(t.size() == 1);
  CHECK(t[0].observations.size() == 2);
  CHECK((t[0].query_pixel - Point2(10.2, 20.7)).norm() < 1e-12);

  const std::vector<MatchSet> apart{{"q", "r1", {{Point2(10.5, 20.5), Point2(1, 1), 0.5}}},
                                    {"q", "r2", {{Point2(13.5, 20.5), Point2(2, 2), 1.0}}}};
  CHECK(build_tracks(apart, 1.0).empty());

  // weighted mean and best-per-reference within a cell
  const std::vector<MatchSet> mixed{
      {"q", "r1", {{Point2(4.0, 4.0), Point2(1, 1), 0.2}, {Point2(4.5, 4.5), Point2(7, 7), 0.8}}},
      {"q", "r2", {{Point2(5.5, 5.5), Point2(2, 2), 0.4}}}};
  t = build_tracks(mixed, 2.0);
  REQUIRE(t.size() == 1);
  REQUIRE(t[0].observations.size() == 2);
  CHECK(t[0].observations[0].reference_id == "r1");
  CHECK(t[0].observations[0].pixel == Point2(7, 7));
  const Point2 expect = (0.8 * Point2(4.5, 4.5) + 0.4 * Point2(5.5, 5.5)) / 1.2;
  CHECK((t[0].query_pixel - expect).norm() < 1e-12);

  CHECK_THROWS_AS(build_tracks(std::vector<MatchSet>{{"q", "r", {}}, {"p", "r", {}}}, 2.0), Error);
}

TEST_CASE("tracks of a 100-point scene triangulate to ground truth") {
  Rand rng(21);
  const auto s = oracle::make_pipeline_scene(rng, {4, 100});
  const auto tracks = build_tracks(s.matches, 2.0);
  const auto corr = triangulate_tracks(tracks, s.db);
  int hits = 0;
  for (const auto& c : corr) {
    double best = 1e9;
    for (const auto& X : s.points) best = std::min(best, (X - c.point).norm());
    hits += best < 0.01;
  }
  CHECK(hits >= 95);
  // partition: every match lands in at most one track
  std::size_t observations = 0;
  for (const auto& t : tracks) observations += t.observations.size();
  std::size_t total = 0;
  for (const auto& m : s.matches) total += m.matches.size();
  CHECK(observations <= total);
}

TEST_CASE("both solvers are exact on clean scenes") {
  int checked = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rand rng(100 + seed);
    const auto s = oracle::make_pipeline_scene(rng, {4, 100});
    const auto e = localize_e5p1(s.K, s.db, s.matches, clean_cfg(seed));
    const auto l = localize_lt(s.K, s.db, s.matches, clean_cfg(seed));
    REQUIRE(e.ok());
    REQUIRE(l.ok());
    CHECK(pos_err(e, s.truth) < 1e-6);
    CHECK(rot_err(e, s.truth) < 1e-6);
    CHECK(pos_err(l, s.truth) < 1e-6);
    CHECK(rot_err(l, s.truth) < 1e-6);
    CHECK(position_error(*e.pose, *l.pose) < 0.01);
    CHECK(rotation_error_deg(*e.pose, *l.pose) < 0.1);
    ++checked;
  }
  CHECK(checked == 10);
}

TEST_CASE("LT and E5+1 agree on noisy scenes") {
  std::vector<double> dp, dr;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rand rng(200 + seed);
    const auto s = oracle::make_pipeline_scene(rng, {4, 150, 0.5, 0.1});
    RansacConfig c;
    c.seed = seed;
    const auto e = localize_e5p1(s.K, s.db, s.matches, c);
    const auto l = localize_lt(s.K, s.db, s.matches, c);
    REQUIRE(e.ok());
    REQUIRE(l.ok());
    dp.push_back(position_error(*e.pose, *l.pose));
    dr.push_back(rotation_error_deg(*e.pose, *l.pose));
  }
  std::sort(dp.begin(), dp.end());
  std::sort(dr.begin(), dr.end());
  CHECK(dp[4] < 0.05);
  CHECK(dr[4] < 0.5);
}

TEST_CASE("solver status cases") {
  Rand rng(7);
  const auto s = oracle::make_pipeline_scene(rng, {4, 60});
  const std::vector<MatchSet> one{s.matches[0]};
  CHECK(localize_e5p1(s.K, s.db, one, clean_cfg(1)).status == LocalizationStatus::InsufficientReferences);
  CHECK(localize_lt(s.K, s.db, one, clean_cfg(1)).status == LocalizationStatus::InsufficientReferences);
  std::vector<MatchSet> empty_second{s.matches[0], s.matches[1]};
  empty_second[1].matches.clear();
  CHECK(localize_e5p1(s.K, s.db, empty_second, clean_cfg(1)).status == LocalizationStatus::InsufficientReferences);

  Rand rng2(8);
  const auto z = oracle::make_pipeline_scene(rng2, {4, 100, 0, 0, true});
  const auto r = localize_lt(z.K, z.db, z.matches, clean_cfg(1));
  CHECK(r.status == LocalizationStatus::Failure);
  CHECK(triangulate_tracks(build_tracks(z.matches, 2.0), z.db).empty());

  std::vector<MatchSet> unknown{s.matches[0], s.matches[1]};
  unknown[1].id_b = "nope";
  CHECK_THROWS_AS(localize_e5p1(s.K, s.db, unknown, clean_cfg(1)), Error);
}

TEST_CASE("batch localization is deterministic across thread counts") {
  Rand rng(31);
  std::vector<oracle::PipelineScene> scenes;
  SceneDatabase db;
  std::vector<QueryInput> queries;
  // Independent scenes sharing one database with distinct reference ids.
  for (int q = 0; q < 6; ++q) {
    auto s = oracle::make_pipeline_scene(rng, {3, 80, 1.0, 0.2});
    QueryInput in{"q" + std::to_string(q), s.K, {}, nullptr, nullptr};
    for (auto m : s.matches) {
      const std::string new_id = "s" + std::to_string(q) + "_" + m.id_b;
      SceneRecord rec = s.db.at(m.id_b);
      rec.id = new_id;
      db.add(rec);
      m.id_a = in.id;
      m.id_b = new_id;
      in.matches.push_back(m);
    }
    queries.push_back(std::move(in));
  }
  for (Solver solver : {Solver::E5p1, Solver::LT}) {
    BatchOptions opt;
    opt.solver = solver;
    opt.ransac.seed = 99;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = localize_batch(queries, db, opt);
    omp_set_num_threads(4);
    const auto b = localize_batch(queries, db, opt);
    omp_set_num_threads(saved);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].query_id == queries[i].id);
      CHECK(a[i].result == b[i].result);
      CHECK(a[i].result.ok());
    }
  }
}

TEST_CASE("batch errors keep their code") {
  Rand rng(32);
  const auto s = oracle::make_pipeline_scene(rng, {3, 40});
  QueryInput in{"query", s.K, s.matches, nullptr, nullptr};
  in.matches[1].id_b = "missing";
  std::vector<QueryInput> qs{in};
  try {
    localize_batch(qs, s.db, BatchOptions{});
    FAIL("expected IdMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IdMismatch);
  }
}

TEST_CASE("retrieval filters the references used") {
  Rand rng(33);
  auto s = oracle::make_pipeline_scene(rng, {4, 80});
  std::vector<GlobalDescriptor> descs;
  for (int r = 0; r < 4; ++r) descs.push_back({"ref" + std::to_string(r), {r == 3 ? 1.0f : 0.0f, r == 3 ? 0.0f : 1.0f}});
  s.db.attach_descriptors(descs);
  const GlobalDescriptor qd{"query", {1.0f, 0.0f}};
  QueryInput in{"query", s.K, s.matches, &qd, nullptr};
  BatchOptions opt;
  opt.topk = 1;
  // only ref3 survives retrieval
  CHECK(localize_query(in, s.db, descs, opt).status == LocalizationStatus::InsufficientReferences);
  opt.topk = 2;
  CHECK(localize_query(in, s.db, descs, opt).ok());
}

// ---- segments --------------------------------------------------------------

TEST_CASE("segment keypoint assignment") {
  LabelMap m(60, 40);
  for (int y = 10; y < 30; ++y)
    for (int x = 20; x < 30; ++x) m.at(x, y) = 4;  // 200 px
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 10; ++x) m.at(x, y) = 9;  // 50 px
  const std::vector<Point2> kp{Point2(24.5, 19.5), Point2(32, 20), Point2(36, 20), Point2(2, 2), Point2(50, 35)};
  auto st = assign_keypoints_to_segments(m, kp);
  REQUIRE(st.size() == 1);
  CHECK(st[0].label == 4);
  CHECK(st[0].area == 200);
  CHECK(st[0].centroid == Point2(24.5, 19.5));
  // 3 px outside -> in, 7 px outside -> out
  CHECK(st[0].keypoints == std::vector<int>{0, 1});
  st = assign_keypoints_to_segments(m, kp, 7);
  CHECK(st[0].keypoints == std::vector<int>{0, 1, 2});
  st = assign_keypoints_to_segments(m, kp, 5, 50);
  REQUIRE(st.size() == 2);
  CHECK(st[1].label == 9);
  CHECK(st[1].keypoints == std::vector<int>{3});
}

TEST_CASE("segment centroids") {
  LabelMap m(20, 20);
  for (int y = 0; y <= 9; ++y)
    for (int x = 0; x <= 9; ++x) m.at(x, y) = 1;
  const auto st = assign_keypoints_to_segments(m, std::vector<Point2>{});
  REQUIRE(st.size() == 1);
  CHECK(st[0].centroid == Point2(4.5, 4.5));
}

TEST_CASE("translated segmentation gives displaced centroid matches") {
  const std::vector<std::array<int, 4>> discs{{40, 40, 15, 1}, {100, 50, 20, 2}, {60, 100, 12, 3}, {150, 110, 18, 4}};
  std::vector<std::array<int, 4>> shifted = discs;
  for (auto& d : shifted) d[0] += 10;
  const LabelMap mq = disc_map(200, 150, discs), mr = disc_map(200, 150, shifted);
  Rand rng(5);
  MatchSet ms{"q", "r", {}};
  std::vector<Point2> kq, kr;
  for (int i = 0; i < 400; ++i) {
    const Point2 u(rng.uniform(0, 185), rng.uniform(0, 149));
    ms.matches.push_back({u, u + Point2(10, 0), 1.0});
    kq.push_back(u);
    kr.push_back(u + Point2(10, 0));
  }
  const auto sq = assign_keypoints_to_segments(mq, kq), sr = assign_keypoints_to_segments(mr, kr);
  const auto pairs = match_segments(sq, sr, ms);
  REQUIRE(pairs.size() == 4);
  for (const auto& p : pairs) CHECK(p.label_q == p.label_r);
  const auto cm = segment_centroid_matches(pairs, sq, sr, "q", "r");
  for (const auto& m : cm.matches) CHECK((m.b - m.a - Point2(10, 0)).norm() < 0.5);

  // identical segmentations: zero displacement, IoU 1
  MatchSet ident{"q", "q", {}};
  for (const auto& u : kq) ident.matches.push_back({u, u, 1.0});
  const auto same = match_segments(sq, sq, ident);
  REQUIRE(same.size() == 4);
  for (const auto& p : same) CHECK(p.iou == 1.0);
  for (const auto& m : segment_centroid_matches(same, sq, sq).matches) CHECK(m.a == m.b);
  CHECK(match_segments(sq, sr, MatchSet{}).empty());
}

namespace {

// Brute force: IoU of every pair from membership sets, best partner per
// query segment, then repeatedly take the global best remaining proposal.
std::vector<SegmentPair> exhaustive_segments(const std::vector<SegmentStats>& q, const std::vector<SegmentStats>& r,
                                             std::size_t n, double min_iou) {
  std::vector<SegmentPair> proposals;
  for (const auto& a : q) {
    std::set<int> ka(a.keypoints.begin(), a.keypoints.end());
    std::optional<SegmentPair> best;
    for (const auto& b : r) {
      int inter = 0;
      for (int k : b.keypoints) inter += k < static_cast<int>(n) && ka.count(k);
      if (inter == 0) continue;
      const double iou = inter / double(a.keypoints.size() + b.keypoints.size() - inter);
      if (!best || iou > best->iou || (iou == best->iou && b.label < best->label_r))
        best = SegmentPair{a.label, b.label, inter, iou};
    }
    if (best && best->iou >= min_iou) proposals.push_back(*best);
  }
  std::vector<SegmentPair> out;
  std::set<std::int32_t> used_r;
  std::vector<bool> done(proposals.size(), false);
  for (;;) {
    int pick = -1;
    for (std::size_t i = 0; i < proposals.size(); ++i) {
      if (done[i]) continue;
      if (pick < 0 || proposals[i].iou > proposals[pick].iou ||
          (proposals[i].iou == proposals[pick].iou && proposals[i].label_q < proposals[pick].label_q))
        pick = static_cast<int>(i);
    }
    if (pick < 0) break;
    done[pick] = true;
    if (used_r.insert(proposals[pick].label_r).second) out.push_back(proposals[pick]);
  }
  return out;
}

}  // namespace

TEST_CASE("match_segments equals the exhaustive oracle") {
  Rand rng(77);
  for (int scene = 0; scene < 100; ++scene) {
    const int n = 60 + rng.index(200);
    auto make = [&](int count) {
      std::vector<SegmentStats> st;
      std::set<int> labels;
      while (static_cast<int>(labels.size()) < count) labels.insert(1 + rng.index(500));
      for (int l : labels) {
        SegmentStats s;
        s.label = l;
        for (int k = 0; k < n; ++k)
          if (rng.uniform(0, 1) < 0.08) s.keypoints.push_back(k);
        st.push_back(s);
      }
      return st;
    };
    const auto q = make(20), r = make(20);
    MatchSet ms;
    ms.matches.resize(n);
    const auto got = match_segments(q, r, ms);
    const auto want = exhaustive_segments(q, r, n, kSegmentMinIou);
    REQUIRE(got.size() == want.size());
    std::set<std::int32_t> lq, lr;
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].label_q == want[i].label_q);
      CHECK(got[i].label_r == want[i].label_r);
      CHECK(got[i].links == want[i].links);
      CHECK(got[i].iou == want[i].iou);
      lq.insert(got[i].label_q);
      lr.insert(got[i].label_r);
    }
    CHECK(lq.size() == got.size());
    CHECK(lr.size() == got.size());
  }
}

TEST_CASE("refine_with_segments never worsens MSAC") {
  int changed = 0;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    Rand rng(500 + seed);
    const auto s = oracle::make_pipeline_scene(rng, {3, 80, 1.0, 0.2});
    RansacConfig c;
    c.seed = seed;
    const auto r = localize_e5p1(s.K, s.db, s.matches, c);
    REQUIRE(r.ok());
    // centroid matches range from exact to garbage
    std::vector<MatchSet> centroids;
    for (const auto& rec : s.db.records()) {
      MatchSet m{"query", rec.id, {}};
      for (int k = 0; k < 6; ++k) {
        const Point3 X = rng.box(2.0);
        const auto u = project(s.truth, s.K, X), v = project(rec.pose, s.K, X);
        if (!u || !v) continue;
        const double junk = seed % 3 == 0 ? 0 : (seed % 3 == 1 ? 5 : 200);
        m.matches.push_back({oracle::noisy(rng, *u, junk), *v, 0.5});
      }
      centroids.push_back(m);
    }
    const E5p1Problem orig = make_ray_problem(s.K, s.db, s.matches);
    const auto out = refine_with_segments(r, s.matches, centroids, s.db, s.K, c.inlier_threshold_px);
    REQUIRE(out.ok());
    CHECK(original_msac(*out.pose, orig, c.inlier_threshold_px) <= original_msac(*r.pose, orig, c.inlier_threshold_px));
    changed += out.pose->R != r.pose->R || out.pose->t != r.pose->t;
  }
  CHECK(changed > 0);

  LocalizationResult fail;
  Rand rng(1);
  const auto s = oracle::make_pipeline_scene(rng, {3, 40});
  CHECK(refine_with_segments(fail, s.matches, s.matches, s.db, s.K, 3.0) == fail);
  const auto ok = localize_e5p1(s.K, s.db, s.matches, clean_cfg(0));
  CHECK(refine_with_segments(ok, s.matches, {}, s.db, s.K, 3.0) == ok);
}

TEST_CASE("unbiased centroid matches correct a biased pose") {
  int not_worse = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rand rng(900 + seed);
    auto s = oracle::make_pipeline_scene(rng, {3, 120, 0.3, 0});
    for (auto& m : s.matches)
      for (auto& mm : m.matches) {
        mm.a += Point2(0.5, 0.0);
        mm.b += Point2(0.5, 0.0);
      }
    RansacConfig c;
    c.seed = seed;
    const auto r = localize_e5p1(s.K, s.db, s.matches, c);
    if (!r.ok()) continue;
    std::vector<MatchSet> centroids;
    for (const auto& rec : s.db.records()) {
      MatchSet m{"query", rec.id, {}};
      for (int k = 0; k < 8; ++k) {
        const Point3 X = rng.box(2.0);
        const auto u = project(s.truth, s.K, X), v = project(rec.pose, s.K, X);
        if (u && v && s.K.contains(*u) && s.K.contains(*v)) m.matches.push_back({*u, *v, 1.0});
      }
      centroids.push_back(m);
    }
    const auto out = refine_with_segments(r, s.matches, centroids, s.db, s.K, c.inlier_threshold_px);
    not_worse += position_error(*out.pose, s.truth) <= position_error(*r.pose, s.truth);
  }
  CHECK(not_worse >= 80);
}
