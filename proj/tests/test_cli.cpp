#include <doctest.h>

#include <sstream>

#include "obfloc/cli.hpp"
#include "obfloc/dataio.hpp"
#include "obfloc/synthbench.hpp"

using namespace obfloc;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "obfloc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("obfloc_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("cli usage errors exit 1") {
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"localize", "--scene", "x"}).code == kExitUsage);
  CHECK(run({"evaluate", "--results", "r", "--gt", "g", "--thresholds", "0.5"}).code == kExitUsage);
  CHECK(run({"synth", "--out", "x", "--outlier-frac", "2"}).code == kExitUsage);
  CHECK(run({"obfuscate", "--in", ".", "--out", ".", "--method", "sharpen"}).code == kExitUsage);
}

TEST_CASE("cli data errors exit 2") {
  const CliRun r = run({"evaluate", "--results", "/nonexistent/r.csv", "--gt", "/nonexistent/gt.txt"});
  CHECK(r.code == kExitData);
  CHECK(r.err.find("/nonexistent/") != std::string::npos);
}

TEST_CASE("cli synth, localize, evaluate and align") {
  const fs::path dir = temp_dir("flow");
  REQUIRE(run({"synth", "--cameras", "8", "--queries", "3", "--points", "150", "--seed", "4", "--out",
               (dir / "fx").string()})
              .code == kExitOk);
  const std::string scene = (dir / "fx" / "scene.txt").string(), queries = (dir / "fx" / "queries.txt").string();
  REQUIRE(run({"localize", "--scene", scene, "--queries", queries, "--matches", (dir / "fx" / "matches.txt").string(),
               "--out", (dir / "r.csv").string()})
              .code == kExitOk);
  CHECK(read_localize_results(dir / "r.csv").size() == 3);

  const CliRun ev = run({"evaluate", "--results", (dir / "r.csv").string(), "--gt", queries, "--thresholds",
                         "0.001,0.01", "--out", (dir / "e.csv").string()});
  CHECK(ev.code == kExitOk);
  CHECK(ev.out.find("queries 3") != std::string::npos);
  CHECK(ev.out.find("recall (0.001, 0.01) 100.0") != std::string::npos);
  CHECK(read_file(dir / "e.csv").rfind("query_id,pos_err_m,rot_err_deg,num_inliers,status\n", 0) == 0);

  CHECK(run({"align", "--est", queries, "--gt", queries, "--out", (dir / "aligned.txt").string()}).code == kExitOk);
  const SceneDatabase a = read_scene(dir / "aligned.txt"), g = read_scene(queries);
  REQUIRE(a.size() == g.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(position_error(a.records()[i].pose, g.records()[i].pose) < 1e-9);
  fs::remove_all(dir);
}

TEST_CASE("cli localize exits 3 when nothing localizes") {
  const fs::path dir = temp_dir("none");
  REQUIRE(run({"synth", "--cameras", "4", "--queries", "2", "--points", "0", "--out", (dir / "fx").string()}).code ==
          kExitOk);
  const CliRun r = run({"localize", "--scene", (dir / "fx" / "scene.txt").string(), "--queries",
                        (dir / "fx" / "queries.txt").string(), "--matches", (dir / "fx" / "matches.txt").string(),
                        "--out", (dir / "r.csv").string()});
  CHECK(r.code == kExitNoneLocalized);
  CHECK(read_localize_results(dir / "r.csv").size() == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli obfuscate writes one image per input") {
  const fs::path dir = temp_dir("obf");
  fs::create_directories(dir / "in");
  RasterImage img(64, 48, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 13);
  write_png(img, dir / "in" / "a.png");
  for (const std::string m : {"blur41", "pixelate10", "canny"}) {
    CAPTURE(m);
    const fs::path out = dir / m;
    REQUIRE(run({"obfuscate", "--in", (dir / "in").string(), "--out", out.string(), "--method", m}).code == kExitOk);
    const RasterImage o = read_raster(out / "a.png");
    CHECK(o.width == 64);
    CHECK(o.height == 48);
  }
  fs::remove_all(dir);
}
