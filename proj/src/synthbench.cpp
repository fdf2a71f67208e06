#include "obfloc/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>

#include "obfloc/error.hpp"
#include "obfloc/random.hpp"

namespace obfloc {

namespace {

// Stream tags kept apart from the per-camera indices.
constexpr std::uint64_t kQueryStream = 1ull << 32;
constexpr std::uint64_t kPointStream = 2ull << 32;
constexpr std::uint64_t kSegmentStream = 3ull << 32;

std::string fmt(const char* f, double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

CameraPose ring_pose(CounterRng& rng, double az, double radius, double height, double jitter) {
  const Vec3 c(radius * std::cos(az), radius * std::sin(az), height);
  const Vec3 target(rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter), rng.uniform(-jitter, jitter));
  return CameraPose::from_center(look_rotation(target - c, Vec3::UnitZ()), c);
}

LabelMap voronoi_labels(const CameraPose& pose, const Intrinsics& K, const std::vector<Point3>& sites) {
  std::vector<Point2> proj;
  std::vector<std::int32_t> ids;
  for (std::size_t i = 0; i < sites.size(); ++i)
    if (const auto u = project(pose, K, sites[i])) {
      proj.push_back(*u);
      ids.push_back(static_cast<std::int32_t>(i + 1));
    }
  LabelMap m(K.width, K.height);
  if (proj.empty()) return m;
  for (int y = 0; y < K.height; ++y)
    for (int x = 0; x < K.width; ++x) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < proj.size(); ++i) {
        const double d = (proj[i] - Point2(x, y)).squaredNorm();
        if (d < bd) bd = d, best = i;
      }
      m.at(x, y) = ids[best];
    }
  return m;
}

}  // namespace

void SynthConfig::validate() const {
  if (num_cameras < 0 || num_points < 0 || num_queries < 0)
    throw Error(ErrorCode::InvalidArgument, "synth counts must be non-negative");
  if (!(scene_extent > 0)) throw Error(ErrorCode::InvalidArgument, "scene extent must be positive");
  if (!(noise_px >= 0)) throw Error(ErrorCode::InvalidArgument, "noise must be >= 0");
  if (!(outlier_frac >= 0 && outlier_frac < 1)) throw Error(ErrorCode::InvalidArgument, "outlier fraction must be in [0, 1)");
  if (!intrinsics.valid()) throw Error(ErrorCode::InvalidArgument, "invalid intrinsics template");
  if (descriptor_dim < 1) throw Error(ErrorCode::InvalidArgument, "descriptor dimension must be >= 1");
  if (num_segments < 0 || num_segments > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "segment count out of range");
}

std::vector<float> synth_descriptor(const Vec3& center, double scene_extent, int dim) {
  // Anchors on a Fibonacci sphere around the scene; Gaussian bumps of the
  // distance to each anchor.
  const double radius = 1.25 * scene_extent;
  const double sigma = 0.6 * scene_extent;
  std::vector<float> v(dim);
  double norm2 = 0;
  for (int j = 0; j < dim; ++j) {
    const double z = 1.0 - (2.0 * j + 1.0) / dim;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = j * 2.399963229728653;
    const Vec3 a = radius * Vec3(r * std::cos(phi), r * std::sin(phi), z);
    const double f = std::exp(-(center - a).squaredNorm() / (2 * sigma * sigma));
    v[j] = static_cast<float>(f);
    norm2 += f * f;
  }
  const double n = std::sqrt(norm2);
  for (float& f : v) f = n > 0 ? static_cast<float>(f / n) : 1.0f / std::sqrt(static_cast<float>(dim));
  return v;
}

SynthScene generate_scene(const SynthConfig& cfg) {
  cfg.validate();
  const double s = cfg.scene_extent / 4.0;  // geometry below is for a 4-unit cube
  const Intrinsics& K = cfg.intrinsics;

  std::vector<CameraPose> refs(cfg.num_cameras), queries(cfg.num_queries);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.num_cameras; ++i) {
    CounterRng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)));
    const double az = 2 * M_PI * (i + rng.uniform(-0.3, 0.3)) / std::max(1, cfg.num_cameras);
    refs[i] = ring_pose(rng, az, s * rng.uniform(3.5, 6.0), s * rng.uniform(-2.0, 3.0), 0.3 * s);
  }
#pragma omp parallel for schedule(static)
  for (int q = 0; q < cfg.num_queries; ++q) {
    CounterRng rng(derive_seed(cfg.seed, kQueryStream | static_cast<std::uint64_t>(q)));
    queries[q] = ring_pose(rng, rng.uniform(0, 2 * M_PI), 4.0 * s, s * rng.uniform(-1.0, 2.0), 0.3 * s);
  }

  SynthScene out;
  CounterRng prng(derive_seed(cfg.seed, kPointStream));
  const double half = cfg.scene_extent / 2;
  for (int j = 0; j < cfg.num_points; ++j)
    out.points.emplace_back(prng.uniform(-half, half), prng.uniform(-half, half), prng.uniform(-half, half));
  std::vector<double> conf(cfg.num_points);
  for (double& c : conf) c = prng.uniform(0.5, 1.0);

  auto name = [](const char* prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%04d", prefix, i);
    return std::string(buf);
  };
  for (int i = 0; i < cfg.num_cameras; ++i) out.references.add(SceneRecord::make(name("ref", i), K, refs[i]));
  for (int q = 0; q < cfg.num_queries; ++q) out.queries.add(SceneRecord::make(name("query", q), K, queries[q]));

  // Projections use the serialized (quaternion-rounded) poses so fixtures
  // read back from disk stay exact.
  auto visible = [&](const CameraPose& pose) {
    std::vector<std::optional<Point2>> uv(cfg.num_points);
    for (int j = 0; j < cfg.num_points; ++j) {
      const auto u = project(pose, K, out.points[j]);
      if (u && K.contains(*u)) uv[j] = *u;
    }
    return uv;
  };
  std::vector<std::vector<std::optional<Point2>>> ref_uv(cfg.num_cameras);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < cfg.num_cameras; ++i) ref_uv[i] = visible(out.references.records()[i].pose);
  for (int q = 0; q < cfg.num_queries; ++q) {
    const auto quv = visible(out.queries.records()[q].pose);
    for (int i = 0; i < cfg.num_cameras; ++i) {
      MatchSet set{out.queries.records()[q].id, out.references.records()[i].id, {}};
      for (int j = 0; j < cfg.num_points; ++j)
        if (quv[j] && ref_uv[i][j]) set.matches.push_back({*quv[j], *ref_uv[i][j], conf[j]});
      out.matches.push_back(std::move(set));
    }
  }
  if (cfg.noise_px > 0 || cfg.outlier_frac > 0) {
    const auto sizes = intrinsics_lookup({&out.references, &out.queries});
    out.matches = corrupt_matches(out.matches, sizes, cfg.noise_px, cfg.outlier_frac, cfg.seed);
  }

  for (const auto& r : out.references.records())
    out.descriptors.push_back({r.id, synth_descriptor(r.pose.center(), cfg.scene_extent, cfg.descriptor_dim)});
  for (const auto& r : out.queries.records())
    out.descriptors.push_back({r.id, synth_descriptor(r.pose.center(), cfg.scene_extent, cfg.descriptor_dim)});
  out.references.attach_descriptors(out.descriptors);
  out.queries.attach_descriptors(out.descriptors);

  if (cfg.num_segments > 0) {
    CounterRng srng(derive_seed(cfg.seed, kSegmentStream));
    std::vector<Point3> sites;
    for (int k = 0; k < cfg.num_segments; ++k)
      sites.emplace_back(srng.uniform(-half, half), srng.uniform(-half, half), srng.uniform(-half, half));
    std::vector<const SceneRecord*> all;
    for (const auto& r : out.references.records()) all.push_back(&r);
    for (const auto& r : out.queries.records()) all.push_back(&r);
    std::vector<LabelMap> maps(all.size());
#pragma omp parallel for schedule(dynamic, 1)
    for (long i = 0; i < static_cast<long>(all.size()); ++i) maps[i] = voronoi_labels(all[i]->pose, K, sites);
    for (std::size_t i = 0; i < all.size(); ++i) out.labelmaps.emplace(all[i]->id, std::move(maps[i]));
  }
  return out;
}

std::vector<MatchSet> corrupt_matches(const std::vector<MatchSet>& sets, const IntrinsicsLookup& sizes,
                                      double noise_px, double outlier_frac, std::uint64_t seed) {
  if (!(noise_px >= 0)) throw Error(ErrorCode::InvalidArgument, "noise must be >= 0");
  if (!(outlier_frac >= 0 && outlier_frac < 1)) throw Error(ErrorCode::InvalidArgument, "outlier fraction must be in [0, 1)");
  std::vector<MatchSet> out = sets;
  for (std::size_t s = 0; s < out.size(); ++s) {
    MatchSet& set = out[s];
    const auto ia = sizes.find(set.id_a);
    const auto ib = sizes.find(set.id_b);
    if (ia == sizes.end() || ib == sizes.end())
      throw Error(ErrorCode::IdMismatch, "no image size for pair " + set.id_a + "/" + set.id_b);
    const Intrinsics& Ka = ia->second;
    const Intrinsics& Kb = ib->second;
    CounterRng rng(derive_seed(seed, s));
    const std::size_t n = set.matches.size();
    const auto k = static_cast<std::size_t>(std::floor(outlier_frac * static_cast<double>(n)));
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    std::vector<bool> outlier(n, false);
    for (std::size_t i = 0; i < k; ++i) outlier[idx[i]] = true;
    auto clamp_to = [](const Intrinsics& K, Point2 u) {
      return Point2(std::clamp(u.x(), 0.0, K.width - 1.0), std::clamp(u.y(), 0.0, K.height - 1.0));
    };
    for (std::size_t i = 0; i < n; ++i) {
      Match& m = set.matches[i];
      if (outlier[i]) {
        m.a = Point2(rng.uniform(0, Ka.width - 1.0), rng.uniform(0, Ka.height - 1.0));
        m.b = Point2(rng.uniform(0, Kb.width - 1.0), rng.uniform(0, Kb.height - 1.0));
      } else if (noise_px > 0) {
        const double ax = rng.normal(), ay = rng.normal(), bx = rng.normal(), by = rng.normal();
        m.a = clamp_to(Ka, m.a + noise_px * Point2(ax, ay));
        m.b = clamp_to(Kb, m.b + noise_px * Point2(bx, by));
      }
    }
  }
  return out;
}

void write_fixture(const SynthScene& scene, const fs::path& dir) {
  fs::create_directories(dir);
  SceneDatabase refs = scene.references, queries = scene.queries;
  if (!scene.labelmaps.empty()) {
    fs::create_directories(dir / "labelmaps");
    auto attach = [&](const SceneDatabase& in) {
      SceneDatabase db;
      for (SceneRecord r : in.records()) {
        const auto it = scene.labelmaps.find(r.id);
        if (it != scene.labelmaps.end()) {
          r.labelmap_path = "labelmaps/" + r.id + ".png";
          write_labelmap(it->second, dir / *r.labelmap_path);
        }
        db.add(std::move(r));
      }
      return db;
    };
    refs = attach(scene.references);
    queries = attach(scene.queries);
  }
  write_scene(refs, dir / "scene.txt");
  write_scene(queries, dir / "queries.txt");
  write_matches(scene.matches, dir / "matches.txt");
  write_descriptors(scene.descriptors, dir / "descriptors.gdsc");
}

// ---- evaluation ------------------------------------------------------------

ThresholdSet parse_thresholds(std::string_view text) {
  ThresholdSet out;
  std::size_t pos = 0;
  int index = 0;
  while (pos <= text.size()) {
    const std::size_t semi = text.find(';', pos);
    const std::string_view item = text.substr(pos, semi == std::string_view::npos ? std::string_view::npos : semi - pos);
    const std::size_t comma = item.find(',');
    Threshold t;
    bool ok = comma != std::string_view::npos;
    if (ok) {
      const std::string a(item.substr(0, comma)), b(item.substr(comma + 1));
      char* end = nullptr;
      t.position = std::strtod(a.c_str(), &end);
      ok = !a.empty() && *end == '\0';
      t.rotation_deg = std::strtod(b.c_str(), &end);
      ok = ok && !b.empty() && *end == '\0';
    }
    if (!ok || !(t.position > 0) || !(t.rotation_deg > 0) || !std::isfinite(t.position) || !std::isfinite(t.rotation_deg))
      throw Error(ErrorCode::InvalidArgument, "threshold " + std::to_string(index + 1) + " ('" + std::string(item) +
                                                  "') is not 'position,degrees' with positive values");
    out.push_back(t);
    ++index;
    if (semi == std::string_view::npos) break;
    pos = semi + 1;
  }
  return out;
}

std::string format_threshold(const Threshold& t) { return "(" + fmt("%g", t.position) + ", " + fmt("%g", t.rotation_deg) + ")"; }

double lower_median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid), values.end());
  return values[mid];
}

EvaluationReport evaluate(const std::vector<QueryResult>& results, const SceneDatabase& gt,
                          const ThresholdSet& thresholds) {
  if (thresholds.empty()) throw Error(ErrorCode::InvalidArgument, "empty threshold set");
  std::map<std::string, const QueryResult*> by_id;
  for (const auto& r : results) {
    if (!gt.find(r.query_id)) throw Error(ErrorCode::IdMismatch, "result for unknown query '" + r.query_id + "'");
    if (!by_id.emplace(r.query_id, &r).second) throw Error(ErrorCode::IdMismatch, "duplicate result for '" + r.query_id + "'");
  }
  EvaluationReport rep;
  rep.thresholds = thresholds;
  rep.recall.assign(thresholds.size(), 0.0);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pos, rot;
  for (const auto& rec : gt.records()) {
    const auto it = by_id.find(rec.id);
    if (it == by_id.end()) throw Error(ErrorCode::IdMismatch, "no result for query '" + rec.id + "'");
    const LocalizationResult& r = it->second->result;
    QueryEvaluation q;
    q.id = rec.id;
    q.status = r.status;
    q.num_inliers = r.num_inliers;
    if (r.ok()) {
      q.position_error = position_error(*r.pose, rec.pose);
      q.rotation_error_deg = rotation_error_deg(*r.pose, rec.pose);
    } else {
      q.position_error = q.rotation_error_deg = inf;
    }
    for (std::size_t t = 0; t < thresholds.size(); ++t) {
      const bool hit = q.position_error <= thresholds[t].position && q.rotation_error_deg <= thresholds[t].rotation_deg;
      q.success.push_back(hit);
      if (hit) rep.recall[t] += 1;
    }
    pos.push_back(q.position_error);
    rot.push_back(q.rotation_error_deg);
    rep.queries.push_back(std::move(q));
  }
  if (rep.queries.empty()) throw Error(ErrorCode::IdMismatch, "ground truth has no queries");
  for (double& r : rep.recall) r /= static_cast<double>(rep.queries.size());
  rep.mpe = lower_median(pos);
  rep.moe = lower_median(rot);
  return rep;
}

std::string format_evaluation_csv(const EvaluationReport& report) {
  std::string out = "query_id,pos_err_m,rot_err_deg,num_inliers,status\n";
  for (const auto& q : report.queries)
    out += q.id + "," + fmt("%.17g", q.position_error) + "," + fmt("%.17g", q.rotation_error_deg) + "," +
           std::to_string(q.num_inliers) + "," + to_string(q.status) + "\n";
  return out;
}

std::string format_evaluation_summary(const EvaluationReport& report) {
  std::string out = "queries " + std::to_string(report.queries.size()) + "\n";
  for (std::size_t t = 0; t < report.thresholds.size(); ++t)
    out += "recall " + format_threshold(report.thresholds[t]) + " " + fmt("%.1f", 100 * report.recall[t]) + "\n";
  out += "MPE " + fmt("%.6g", report.mpe) + "\nMOE " + fmt("%.6g", report.moe) + "\n";
  return out;
}

Table emit_table(const std::vector<std::pair<std::string, EvaluationReport>>& reports) {
  if (reports.empty()) throw Error(ErrorCode::InvalidArgument, "emit_table needs at least one report");
  const ThresholdSet& th = reports.front().second.thresholds;
  for (const auto& [label, rep] : reports)
    if (rep.thresholds.size() != th.size())
      throw Error(ErrorCode::DimensionMismatch, "report '" + label + "' has a different threshold set");

  std::string head;
  for (std::size_t t = 0; t < th.size(); ++t) head += (t ? " / " : "") + format_threshold(th[t]);
  std::vector<std::array<std::string, 4>> rows{{"method", head, "MPE", "MOE"}};
  Table out;
  out.csv = "method";
  for (const auto& t : th) out.csv += ",recall_" + fmt("%g", t.position) + "_" + fmt("%g", t.rotation_deg);
  out.csv += ",mpe,moe\n";
  for (const auto& [label, rep] : reports) {
    std::string cells;
    for (std::size_t t = 0; t < rep.recall.size(); ++t) cells += (t ? " / " : "") + fmt("%.1f", 100 * rep.recall[t]);
    rows.push_back({label, cells, fmt("%.3f", rep.mpe), fmt("%.2f", rep.moe)});
    out.csv += label;
    for (double r : rep.recall) out.csv += "," + fmt("%.1f", 100 * r);
    out.csv += "," + fmt("%.6g", rep.mpe) + "," + fmt("%.6g", rep.moe) + "\n";
  }
  std::array<std::size_t, 4> width{};
  for (const auto& r : rows)
    for (int c = 0; c < 4; ++c) width[c] = std::max(width[c], r[c].size());
  for (const auto& r : rows) {
    std::string line;
    for (int c = 0; c < 4; ++c) {
      if (c) line += " | ";
      line += r[c] + std::string(width[c] - r[c].size(), ' ');
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out.text += line + "\n";
  }
  return out;
}

}  // namespace obfloc
