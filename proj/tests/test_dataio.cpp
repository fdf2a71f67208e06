#include <doctest.h>

#include <cmath>
#include <random>
#include <regex>

#include "obfloc/dataio.hpp"
#include "obfloc/error.hpp"
#include "support/oracle.hpp"

using namespace obfloc;

namespace {

const fs::path kFixtures = OBFLOC_FIXTURES;

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("obfloc_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

SceneDatabase random_scene(oracle::Rand& rng, int n) {
  SceneDatabase db;
  for (int i = 0; i < n; ++i) {
    const Intrinsics K{rng.uniform(300, 1500), rng.uniform(300, 1500), rng.uniform(100, 600), rng.uniform(100, 400),
                       640 + 16 * rng.index(40), 480 + 16 * rng.index(30)};
    SceneRecord r = SceneRecord::make("img_" + std::to_string(i), K, rng.pose(5.0));
    if (i % 3 == 1) r.raster_path = "images/" + r.id + ".jpg";
    if (i % 3 == 2) r.labelmap_path = "labels/" + r.id + ".png";
    db.add(std::move(r));
  }
  return db;
}

}  // namespace

TEST_CASE("quaternion conversion matches hand-computed rotations") {
  const double c = std::sqrt(0.5);
  Mat3 Ry;
  Ry << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  const Quaternion q = quaternion_from_rotation(Ry);
  CHECK(q[0] == doctest::Approx(c).epsilon(1e-12));
  CHECK(q[2] == doctest::Approx(c).epsilon(1e-12));
  CHECK(std::abs(q[1]) < 1e-12);
  CHECK((rotation_from_quaternion({c, 0, c, 0}) - Ry).norm() < 1e-12);
  // 180 degrees about x: scalar part zero, sign canonical on the vector part
  const Quaternion qx = quaternion_from_rotation(Vec3(1, -1, -1).asDiagonal());
  CHECK(std::abs(qx[0]) < 1e-12);
  CHECK(std::abs(std::abs(qx[1]) - 1) < 1e-12);
}

TEST_CASE("hand-written two camera scene") {
  const SceneDatabase db = read_scene(kFixtures / "two_cam" / "scene.txt");
  REQUIRE(db.size() == 2);
  const SceneRecord& a = db.at("cam_a");
  const SceneRecord& b = db.at("cam_b");
  CHECK(a.K.fx == 700);
  CHECK(a.K.fy == 710);
  CHECK(a.K.width == 640);
  CHECK((a.pose.R - Mat3::Identity()).norm() < 1e-15);
  CHECK(a.pose.center().norm() < 1e-15);
  CHECK(!a.raster_path);
  Mat3 Rb;
  Rb << 0, 0, 1, 0, 1, 0, -1, 0, 0;
  CHECK((b.pose.R - Rb).norm() < 1e-12);
  CHECK((b.pose.t - Vec3(1, 2, 3)).norm() == 0);
  // center = -R^T t worked out by hand
  CHECK((b.pose.center() - Vec3(3, -2, -1)).norm() < 1e-12);
  CHECK(b.raster_path == "img/b.jpg");
  CHECK(b.labelmap_path == "labels/b.png");
  CHECK_THROWS_AS(db.at("cam_c"), Error);
}

TEST_CASE("scene and matches round trip byte for byte") {
  oracle::Rand rng(11);
  const SceneDatabase db = random_scene(rng, 25);
  const std::string text = format_scene(db);
  const SceneDatabase back = parse_scene(text);
  CHECK(format_scene(back) == text);
  for (std::size_t i = 0; i < db.size(); ++i) {
    const auto& x = db.records()[i];
    const auto& y = back.records()[i];
    CHECK(x.id == y.id);
    CHECK(x.K.fx == y.K.fx);
    CHECK(x.q == y.q);
    CHECK(x.pose.t == y.pose.t);
    CHECK((x.pose.R - y.pose.R).norm() < 1e-15);
    CHECK(x.raster_path == y.raster_path);
    CHECK(x.labelmap_path == y.labelmap_path);
  }

  std::vector<MatchSet> sets;
  for (int s = 0; s < 6; ++s) {
    MatchSet m{"img_0", "img_" + std::to_string(s + 1), {}};
    const int n = s == 3 ? 0 : 1 + rng.index(50);
    for (int k = 0; k < n; ++k)
      m.matches.push_back({Point2(rng.uniform(0, 600), rng.uniform(0, 400)),
                           Point2(rng.uniform(0, 600), rng.uniform(0, 400)), rng.uniform(0, 1)});
    sets.push_back(m);
  }
  const std::string mt = format_matches(sets);
  const auto sizes = intrinsics_lookup({&db});
  const auto mback = parse_matches(mt, &sizes);
  CHECK(format_matches(mback) == mt);
  REQUIRE(mback.size() == sets.size());
  CHECK(mback[3].matches.empty());
  for (std::size_t s = 0; s < sets.size(); ++s)
    for (std::size_t k = 0; k < sets[s].matches.size(); ++k) {
      CHECK(mback[s].matches[k].a == sets[s].matches[k].a);
      CHECK(mback[s].matches[k].confidence == sets[s].matches[k].confidence);
    }
  CHECK(parse_matches("").empty());

  const fs::path dir = temp_dir("roundtrip");
  write_scene(db, dir / "s.txt");
  write_matches(sets, dir / "m.txt");
  CHECK(read_file(dir / "s.txt") == text);
  CHECK(format_matches(read_matches(dir / "m.txt")) == mt);
  fs::remove_all(dir);
}

TEST_CASE("pixel area bounds") {
  const Intrinsics K{500, 500, 320, 240, 640, 480};
  CHECK(on_pixel_area(K, Point2(-0.5, -0.5)));
  CHECK(on_pixel_area(K, Point2(639.5, 479.5)));
  CHECK_FALSE(on_pixel_area(K, Point2(639.51, 0)));
  CHECK_FALSE(on_pixel_area(K, Point2(0, -0.51)));
}

TEST_CASE("descriptors round trip at 2048 dimensions") {
  std::mt19937 g(5);
  std::normal_distribution<float> d;
  std::vector<GlobalDescriptor> in;
  for (int i = 0; i < 12; ++i) {
    GlobalDescriptor gd{"desc_" + std::to_string(i), std::vector<float>(2048)};
    double n2 = 0;
    for (float& v : gd.values) n2 += double(v = d(g)) * v;
    for (float& v : gd.values) v = static_cast<float>(v / std::sqrt(n2));
    in.push_back(gd);
  }
  std::vector<std::string> warn;
  const auto out = decode_descriptors(encode_descriptors(in), &warn);
  REQUIRE(out.size() == in.size());
  double worst = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(out[i].id == in[i].id);
    for (std::size_t j = 0; j < 2048; ++j) worst = std::max(worst, double(std::abs(out[i].values[j] - in[i].values[j])));
  }
  CHECK(worst <= 1e-7);
  CHECK(warn.empty());
  CHECK(encode_descriptors(out) == encode_descriptors(in));
}

TEST_CASE("descriptor normalization warnings") {
  std::vector<GlobalDescriptor> in{{"a", {3, 4}}, {"b", {0.6f, 0.8f}}};
  std::vector<std::string> warn;
  const auto out = decode_descriptors(encode_descriptors(in), &warn);
  CHECK(out[0].values[0] == doctest::Approx(0.6));
  CHECK(out[0].values[1] == doctest::Approx(0.8));
  CHECK(warn.size() == 1);
  CHECK(decode_descriptors(encode_descriptors({})).empty());
  CHECK_THROWS_AS(encode_descriptors({{"a", {1, 0}}, {"b", {1}}}), Error);
}

TEST_CASE("16-bit label maps") {
  LabelMap m(37, 21);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) m.at(x, y) = (x * 1777 + y * 31337) % 65536;
  m.at(0, 0) = 65535;
  m.at(1, 0) = 256;  // high byte only
  m.at(2, 0) = 1;
  const fs::path dir = temp_dir("labels");
  write_labelmap(m, dir / "l.png");
  const LabelMap back = read_labelmap(dir / "l.png");
  CHECK(back == m);
  CHECK(back.at(0, 0) == 65535);
  CHECK(back.at(1, 0) == 256);
  CHECK_NOTHROW(read_labelmap(dir / "l.png", 37, 21));
  try {
    read_labelmap(dir / "l.png", 38, 21);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DimensionMismatch);
  }
  LabelMap big(2, 1);
  big.at(0, 0) = 70000;
  CHECK_THROWS_AS(write_labelmap(big, dir / "big.png"), Error);

  RasterImage rgb(5, 4, 3);
  for (std::size_t i = 0; i < rgb.data.size(); ++i) rgb.data[i] = static_cast<std::uint8_t>(i * 7);
  write_png(rgb, dir / "rgb.png");
  CHECK(read_raster(dir / "rgb.png") == rgb);
  RasterImage maskimg(3, 2, 1);
  maskimg.at(1, 1) = 9;
  write_png(maskimg, dir / "mask.png");
  const BinaryMask mask = read_mask(dir / "mask.png");
  CHECK(mask.count() == 1);
  CHECK(mask.at(1, 1));
  fs::remove_all(dir);
}

TEST_CASE("palette and results formats") {
  const Palette p = parse_palette("# comment\n0 0 0 0\n\n7 10 20 30\n");
  CHECK(p.size() == 2);
  CHECK(p.at(7) == Rgb{10, 20, 30});
  CHECK_THROWS_AS(parse_palette("1 2 3 4\n1 2 3 4\n"), Error);

  std::vector<QueryResult> rs(3);
  rs[0].query_id = "q0";
  rs[0].result.status = LocalizationStatus::Success;
  rs[0].result.pose = CameraPose{rotation_about(Vec3(1, 2, 3).normalized(), 0.7), Vec3(0.1, -2, 3)};
  rs[0].result.num_inliers = 40;
  rs[0].result.num_correspondences = 90;
  rs[0].result.iterations_run = 17;
  rs[1].query_id = "q1";
  rs[1].result.status = LocalizationStatus::Failure;
  rs[2].query_id = "q2";
  rs[2].result.status = LocalizationStatus::InsufficientReferences;
  const std::string text = format_localize_results(rs);
  CHECK(text.rfind(std::string(kLocalizeHeader) + "\n", 0) == 0);
  const auto back = parse_localize_results(text);
  REQUIRE(back.size() == 3);
  CHECK((back[0].result.pose->R - rs[0].result.pose->R).norm() < 1e-12);
  CHECK(back[0].result.pose->t == rs[0].result.pose->t);
  CHECK(back[0].result.num_inliers == 40);
  CHECK(back[0].result.iterations_run == 17);
  CHECK(!back[1].result.pose);
  CHECK(back[2].result.status == LocalizationStatus::InsufficientReferences);
  CHECK(format_localize_results(back) == text);
}

TEST_CASE("malformed corpus is rejected with a position") {
  const SceneDatabase sizes_db = parse_scene("SCENE v1\nq 800 800 512 384 1024 768 1 0 0 0 0 0 0\n"
                                             "cam0 800 800 512 384 1024 768 1 0 0 0 0 0 0\n");
  const auto sizes = intrinsics_lookup({&sizes_db});
  const std::regex line_col(R"(:\d+:\d+: )");
  const std::regex byte_pos(R"(: byte \d+)");
  int files = 0;
  for (const auto& entry : fs::directory_iterator(kFixtures / "malformed")) {
    const fs::path p = entry.path();
    const std::string name = p.filename().string();
    auto ends = [&](const char* suffix) {
      const std::string s(suffix);
      return name.size() >= s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0;
    };
    CAPTURE(name);
    ++files;
    try {
      if (ends(".scene.txt")) read_scene(p);
      else if (ends(".matches.txt")) read_matches(p, &sizes);
      else if (ends(".gdsc")) read_descriptors(p);
      else if (ends(".png")) read_labelmap(p);
      else if (ends(".results.csv")) read_localize_results(p);
      else if (ends(".palette.txt")) read_palette(p);
      else FAIL("unclassified fixture");
      FAIL("accepted a malformed file");
    } catch (const Error& e) {
      const std::string msg = e.what();
      CAPTURE(msg);
      CHECK(msg.find(p.string()) != std::string::npos);
      const bool positioned = std::regex_search(msg, line_col) || std::regex_search(msg, byte_pos) ||
                              msg.find("label map must be") != std::string::npos;
      CHECK(positioned);
    }
  }
  CHECK(files >= 10);
}

TEST_CASE("missing files") {
  try {
    read_scene(kFixtures / "does_not_exist.txt");
    FAIL("expected MissingFile");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingFile);
  }
}
