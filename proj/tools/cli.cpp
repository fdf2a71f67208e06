#include "obfloc/cli.hpp"

#include <omp.h>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "obfloc/dataio.hpp"
#include "obfloc/error.hpp"
#include "obfloc/obfuscate.hpp"
#include "obfloc/pipeline.hpp"
#include "obfloc/solvers.hpp"
#include "obfloc/synthbench.hpp"

namespace obfloc {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Argument-derived values rethrow as usage errors.
template <class F>
auto as_usage(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

struct Common {
  std::uint64_t seed = 0;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
  cmd->add_option("--threads", c.threads, "worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
}

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingFile, "not a directory: '" + dir.string() + "'");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Same stem, any image extension.
fs::path companion(const fs::path& dir, const fs::path& image) {
  for (const char* ext : {".png", ".jpg", ".jpeg"}) {
    const fs::path p = dir / (image.stem().string() + ext);
    if (fs::exists(p)) return p;
  }
  throw Error(ErrorCode::MissingFile, "no file for '" + image.stem().string() + "' in '" + dir.string() + "'");
}

RasterImage to_gray(const RasterImage& img) {
  if (img.channels == 1) return img;
  RasterImage g(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int r = img.at(x, y, 0), gr = img.at(x, y, 1), b = img.at(x, y, 2);
      g.at(x, y) = static_cast<std::uint8_t>((299 * r + 587 * gr + 114 * b + 500) / 1000);
    }
  return g;
}

RasterImage mask_image(const BinaryMask& m) {
  RasterImage img(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.bits.size(); ++i) img.data[i] = m.bits[i] ? 255 : 0;
  return img;
}

// ---- obfuscate -------------------------------------------------------------

struct ObfuscateArgs {
  std::string in, out, method, labelmaps, masks, palette;
  double canny_low = 50, canny_high = 150;
};

int cmd_obfuscate(const ObfuscateArgs& a, const Common& c, std::ostream& out) {
  if (a.canny_low < 0 || a.canny_low > a.canny_high) throw UsageError("--canny-low must be in [0, --canny-high]");
  const bool label_method = a.method == "borders" || a.method == "random-colors" || a.method == "semantic-colors";
  if ((a.method == "mask-fill" || a.method == "infill") && a.masks.empty())
    throw UsageError("--method " + a.method + " needs --masks");
  if (a.method == "semantic-colors" && a.palette.empty()) throw UsageError("--method semantic-colors needs --palette");
  const Palette palette = a.palette.empty() ? Palette{} : read_palette(a.palette);

  const fs::path src = label_method && !a.labelmaps.empty() ? fs::path(a.labelmaps) : fs::path(a.in);
  const auto files = list_images(src);
  fs::create_directories(a.out);
  for (const auto& f : files) {
    RasterImage result;
    if (label_method) {
      const LabelMap labels = read_labelmap(f);
      if (a.method == "borders") result = render_borders(labels);
      else if (a.method == "random-colors") result = render_random_colors(labels, c.seed);
      else result = render_semantic_colors(labels, palette);
    } else {
      const RasterImage img = read_raster(f);
      if (a.method == "blur41") result = gaussian_blur(img, 41, 6.5);
      else if (a.method == "blur81") result = gaussian_blur(img, 81, 12.5);
      else if (a.method == "pixelate10") result = pixelate(img, 10);
      else if (a.method == "pixelate20") result = pixelate(img, 20);
      else if (a.method == "canny") result = mask_image(canny(clahe(to_gray(img)), {a.canny_low, a.canny_high}));
      else {
        const BinaryMask mask = read_mask(companion(a.masks, f));
        result = a.method == "mask-fill" ? mask_fill(img, mask) : infill_diffusion(img, mask);
      }
    }
    write_png(result, fs::path(a.out) / (f.stem().string() + ".png"));
  }
  out << "obfuscated " << files.size() << " image(s) with " << a.method << "\n";
  return kExitOk;
}

// ---- localize --------------------------------------------------------------

struct LocalizeArgs {
  std::string scene, queries, matches, descriptors, solver = "e5p1", labelmaps, out;
  std::size_t topk = 20;
  bool refine_segments = false;
  double tau = 3.0;
  double quantization = 2.0;
  int max_iterations = 10000;
};

int cmd_localize(const LocalizeArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  SceneDatabase refs = read_scene(a.scene);
  SceneDatabase queries = read_scene(a.queries);
  const auto sizes = intrinsics_lookup({&refs, &queries});
  const auto matches = read_matches(a.matches, &sizes);
  if (!a.descriptors.empty()) {
    std::vector<std::string> warnings;
    const auto desc = read_descriptors(a.descriptors, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << "\n";
    refs.attach_descriptors(desc);
    queries.attach_descriptors(desc);
  }

  BatchOptions opt;
  opt.solver = a.solver == "lt" ? Solver::LT : Solver::E5p1;
  opt.topk = a.topk;
  opt.quantization_px = a.quantization;
  opt.ransac.seed = c.seed;
  opt.ransac.inlier_threshold_px = a.tau;
  opt.ransac.max_iterations = a.max_iterations;
  as_usage([&] { opt.ransac.validate(); });

  std::unordered_map<std::string, LabelMap> labels;
  const fs::path scene_dir = fs::path(a.scene).parent_path();
  auto load_labels = [&](const SceneRecord& r) {
    fs::path p;
    if (!a.labelmaps.empty()) p = fs::path(a.labelmaps) / (r.id + ".png");
    else if (r.labelmap_path) p = scene_dir / *r.labelmap_path;
    else throw Error(ErrorCode::MissingFile, "no label map for '" + r.id + "' (use --labelmaps)");
    labels.emplace(r.id, read_labelmap(p, r.K.width, r.K.height));
  };
  if (a.refine_segments) {
    for (const auto& r : refs.records()) load_labels(r);
    for (const auto& r : queries.records()) load_labels(r);
    opt.refine_segments = true;
    opt.reference_labels = &labels;
  }

  std::vector<QueryInput> inputs;
  std::map<std::string, std::size_t> slot;
  for (const auto& q : queries.records()) {
    slot[q.id] = inputs.size();
    QueryInput in{q.id, q.K, {}, q.descriptor ? &*q.descriptor : nullptr, nullptr};
    if (a.refine_segments) in.labels = &labels.at(q.id);
    inputs.push_back(std::move(in));
  }
  for (const auto& m : matches) {
    const auto it = slot.find(m.id_a);
    if (it == slot.end()) {
      if (!queries.find(m.id_b) && !refs.find(m.id_a))
        throw Error(ErrorCode::IdMismatch, "match pair " + m.id_a + "/" + m.id_b + " has no query on side a");
      continue;  // reference-reference pairs are not used
    }
    if (!refs.find(m.id_b)) throw Error(ErrorCode::IdMismatch, "match pair " + m.id_a + "/" + m.id_b + ": unknown reference");
    inputs[it->second].matches.push_back(m);
  }

  const auto results = localize_batch(inputs, refs, opt);
  write_localize_results(results, a.out);
  const auto ok = std::count_if(results.begin(), results.end(), [](const QueryResult& r) { return r.result.ok(); });
  out << "localized " << ok << "/" << results.size() << " queries (" << a.solver << ")\n";
  return ok == 0 && !results.empty() ? kExitNoneLocalized : kExitOk;
}

// ---- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string results, gt, thresholds = "0.25,2;0.5,5;5,10", out, table_csv, label;
};

int cmd_evaluate(const EvaluateArgs& a, std::ostream& out) {
  const ThresholdSet th = as_usage([&] { return parse_thresholds(a.thresholds); });
  const auto results = read_localize_results(a.results);
  const auto gt = read_scene(a.gt);
  const EvaluationReport rep = evaluate(results, gt, th);
  if (!a.out.empty()) write_file(a.out, format_evaluation_csv(rep));
  const std::string label = a.label.empty() ? fs::path(a.results).stem().string() : a.label;
  const Table t = emit_table({{label, rep}});
  if (!a.table_csv.empty()) write_file(a.table_csv, t.csv);
  out << format_evaluation_summary(rep) << t.text;
  return kExitOk;
}

// ---- align -----------------------------------------------------------------

struct AlignArgs {
  std::string est, gt, out;
};

int cmd_align(const AlignArgs& a, std::ostream& out) {
  const SceneDatabase est = read_scene(a.est);
  const SceneDatabase gt = read_scene(a.gt);
  std::vector<Point3> src, dst;
  for (const auto& r : est.records())
    if (const SceneRecord* g = gt.find(r.id)) {
      src.push_back(r.pose.center());
      dst.push_back(g->pose.center());
    }
  if (src.size() < 3)
    throw Error(ErrorCode::IdMismatch, "align needs at least 3 ids present in both scenes, found " + std::to_string(src.size()));
  const SimilarityTransform sim = align_similarity(src, dst);
  SceneDatabase aligned;
  double sq = 0;
  for (const auto& r : est.records()) {
    SceneRecord moved = r;
    const CameraPose p = transform_pose(r.pose, sim);
    moved.q = quaternion_from_rotation(p.R);
    moved.pose = {rotation_from_quaternion(moved.q), p.t};
    if (const SceneRecord* g = gt.find(r.id)) sq += (moved.pose.center() - g->pose.center()).squaredNorm();
    aligned.add(std::move(moved));
  }
  write_scene(aligned, a.out);
  char buf[160];
  std::snprintf(buf, sizeof buf, "aligned %zu common cameras: scale %.9g, center rms %.6g\n", src.size(), sim.scale,
                std::sqrt(sq / static_cast<double>(src.size())));
  out << buf;
  return kExitOk;
}

// ---- synth -----------------------------------------------------------------

int cmd_synth(const SynthConfig& cfg, const std::string& dir, std::ostream& out) {
  as_usage([&] { cfg.validate(); });
  const SynthScene s = generate_scene(cfg);
  write_fixture(s, dir);
  std::size_t n = 0;
  for (const auto& m : s.matches) n += m.matches.size();
  out << "wrote " << s.references.size() << " references, " << s.queries.size() << " queries, " << n
      << " matches to " << dir << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Localization on obfuscated images"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Common common;

  ObfuscateArgs ob;
  auto* obf = app.add_subcommand("obfuscate", "apply an obfuscation to every image of a directory");
  add_common(obf, common);
  obf->add_option("--in", ob.in, "input image directory")->required();
  obf->add_option("--out", ob.out, "output directory")->required();
  obf->add_option("--method", ob.method)
      ->required()
      ->check(CLI::IsMember({"blur41", "blur81", "pixelate10", "pixelate20", "canny", "mask-fill", "infill", "borders",
                             "random-colors", "semantic-colors"}));
  obf->add_option("--labelmaps", ob.labelmaps, "label map directory (label-based methods)");
  obf->add_option("--masks", ob.masks, "mask directory, one <stem>.png per image");
  obf->add_option("--canny-low", ob.canny_low)->capture_default_str();
  obf->add_option("--canny-high", ob.canny_high)->capture_default_str();
  obf->add_option("--palette", ob.palette, "'label r g b' table for semantic-colors");

  LocalizeArgs lo;
  auto* loc = app.add_subcommand("localize", "estimate query poses");
  add_common(loc, common);
  loc->add_option("--scene", lo.scene, "reference scene file")->required();
  loc->add_option("--queries", lo.queries, "query scene file (poses ignored)")->required();
  loc->add_option("--matches", lo.matches)->required();
  loc->add_option("--descriptors", lo.descriptors, "global descriptors for retrieval");
  loc->add_option("--solver", lo.solver)->check(CLI::IsMember({"e5p1", "lt"}))->capture_default_str();
  loc->add_option("--topk", lo.topk, "retrieved references per query")->check(CLI::PositiveNumber)->capture_default_str();
  loc->add_flag("--refine-segments", lo.refine_segments);
  loc->add_option("--labelmaps", lo.labelmaps, "directory of <id>.png label maps");
  loc->add_option("--tau", lo.tau, "inlier threshold in pixels")->capture_default_str();
  loc->add_option("--quantization", lo.quantization, "track grid cell in pixels (lt)")->capture_default_str();
  loc->add_option("--max-iterations", lo.max_iterations)->capture_default_str();
  loc->add_option("--out", lo.out, "results CSV")->required();

  EvaluateArgs ev;
  auto* eva = app.add_subcommand("evaluate", "recall and median errors against ground truth");
  add_common(eva, common);
  eva->add_option("--results", ev.results)->required();
  eva->add_option("--gt", ev.gt, "ground-truth scene file")->required();
  eva->add_option("--thresholds", ev.thresholds, "'pos,deg;pos,deg;...'")->capture_default_str();
  eva->add_option("--out", ev.out, "per-query CSV");
  eva->add_option("--table-csv", ev.table_csv, "summary row as CSV");
  eva->add_option("--label", ev.label, "row label (default: results file stem)");

  AlignArgs al;
  auto* ali = app.add_subcommand("align", "similarity-align estimated cameras to ground truth");
  add_common(ali, common);
  ali->add_option("--est", al.est)->required();
  ali->add_option("--gt", al.gt)->required();
  ali->add_option("--out", al.out)->required();

  SynthConfig sc;
  std::string synth_out;
  auto* syn = app.add_subcommand("synth", "write a synthetic scene fixture");
  add_common(syn, common);
  syn->add_option("--cameras", sc.num_cameras)->capture_default_str();
  syn->add_option("--points", sc.num_points)->capture_default_str();
  syn->add_option("--queries", sc.num_queries)->capture_default_str();
  syn->add_option("--noise-px", sc.noise_px)->capture_default_str();
  syn->add_option("--outlier-frac", sc.outlier_frac)->capture_default_str();
  syn->add_option("--extent", sc.scene_extent, "cube side length")->capture_default_str();
  syn->add_option("--descriptor-dim", sc.descriptor_dim)->capture_default_str();
  syn->add_option("--labelmaps", sc.num_segments, "number of Voronoi segments (0 = none)")->capture_default_str();
  syn->add_option("--out", synth_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  const int saved_threads = omp_get_max_threads();
  if (common.threads > 0) omp_set_num_threads(common.threads);
  int code = kExitOk;
  try {
    if (*obf) code = cmd_obfuscate(ob, common, out);
    else if (*loc) code = cmd_localize(lo, common, out, err);
    else if (*eva) code = cmd_evaluate(ev, out);
    else if (*ali) code = cmd_align(al, out);
    else {
      sc.seed = common.seed;
      code = cmd_synth(sc, synth_out, out);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    code = kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    code = kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    code = kExitData;
  }
  omp_set_num_threads(saved_threads);
  return code;
}

}  // namespace obfloc
