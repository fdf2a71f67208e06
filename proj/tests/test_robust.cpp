#include <doctest.h>

#include <cmath>

#include "obfloc/error.hpp"
#include "obfloc/random.hpp"
#include "obfloc/robust.hpp"
#include "support/scene_cases.hpp"

using namespace obfloc;

TEST_CASE("CounterRng is a pure function of seed and counter") {
  CounterRng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const auto x = a();
    CHECK(x == b());
    CHECK(x != c());
  }
  CounterRng d(5);
  std::array<int, 7> hist{};
  for (int i = 0; i < 70000; ++i) ++hist[d.below(7)];
  for (int h : hist) CHECK(std::abs(h - 10000) < 500);
}

TEST_CASE("RansacConfig validation") {
  RansacConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.max_iterations = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.confidence = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.inlier_threshold_px = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("required_iterations") {
  CHECK(required_iterations(1.0, 3, 0.999) == 1);
  // (1 - 0.5^3)^k < 0.001 -> k = ceil(log(0.001) / log(0.875)) = 52
  CHECK(required_iterations(0.5, 3, 0.999) == 52);
  CHECK(required_iterations(0.0, 3, 0.999) == std::numeric_limits<std::uint64_t>::max());
}

TEST_CASE("refine_pose") {
  oracle::Rand rng(10);
  SUBCASE("ground truth is stationary") {
    const auto p = oracle::make_absolute_problem(rng, 30, 0.0, 0.0);
    const CameraPose out = refine_pose(p.truth, p.corr, p.K, 3.0);
    CHECK((out.R - p.truth.R).norm() < 1e-10);
    CHECK((out.t - p.truth.t).norm() < 1e-10);
  }

  SUBCASE("recovers from a perturbation") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = oracle::make_absolute_problem(rng, 30, 0.0, 0.0);
      Vector6d delta;
      delta.head<3>() = rng.unit() * (1.0 * M_PI / 180.0);
      delta.tail<3>() = rng.unit() * 0.1;
      const CameraPose start = apply_update(p.truth, delta);
      const CameraPose out = refine_pose(start, p.corr, p.K, 3.0);
      CHECK(position_error(out, p.truth) < 1e-6);
      CHECK(rotation_error_deg(out, p.truth) < 1e-6);
    }
  }

  SUBCASE("never increases the robust cost") {
    for (int trial = 0; trial < 50; ++trial) {
      const auto p = oracle::make_absolute_problem(rng, 40, 0.3, 1.0);
      Vector6d delta;
      delta.head<3>() = rng.unit() * 0.05;
      delta.tail<3>() = rng.unit() * 0.3;
      const CameraPose start = apply_update(p.truth, delta);
      const double before = robust_cost(start, p.corr, p.K, 3.0);
      const CameraPose out = refine_pose(start, p.corr, p.K, 3.0);
      CHECK(robust_cost(out, p.corr, p.K, 3.0) <= before);
    }
  }

  SUBCASE("fewer than four correspondences returns the input") {
    const auto p = oracle::make_absolute_problem(rng, 3, 0.0, 0.0);
    const CameraPose start{p.truth.R, p.truth.t + Vec3(0.1, 0, 0)};
    const CameraPose out = refine_pose(start, p.corr, p.K, 3.0);
    CHECK(out.t == start.t);
  }
}

TEST_CASE("reprojection Jacobian matches central differences") {
  oracle::Rand rng(12);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const auto p = oracle::make_absolute_problem(rng, 1, 0.0, 0.0);
    const CameraPose pose = apply_update(p.truth, Vector6d::Random() * 0.05);
    const Point3& X = p.corr[0].point;
    const auto J = reprojection_jacobian(pose, p.K, X);
    Eigen::Matrix<double, 2, 6> fd;
    for (int k = 0; k < 6; ++k) {
      Vector6d d = Vector6d::Zero();
      d(k) = h;
      const auto up = project(apply_update(pose, d), p.K, X);
      const auto dn = project(apply_update(pose, -d), p.K, X);
      REQUIRE(up);
      REQUIRE(dn);
      fd.col(k) = (*up - *dn) / (2 * h);
    }
    CHECK((J - fd).norm() <= 1e-4 * fd.norm());
  }
}

TEST_CASE("ransac_p3p") {
  RansacConfig cfg;
  SUBCASE("noise-free") {
    oracle::Rand rng(20);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = oracle::make_absolute_problem(rng, 20, 0.0, 0.0);
      cfg.seed = trial;
      const auto res = ransac_p3p(p.corr, p.K, cfg);
      REQUIRE(res.ok());
      CHECK(position_error(*res.pose, p.truth) < 1e-7);
      CHECK(rotation_error_deg(*res.pose, p.truth) < 1e-7);
      CHECK(res.num_inliers == 20);
    }
  }

  SUBCASE("collinear points fail") {
    const Intrinsics K = oracle::default_intrinsics();
    const CameraPose pose = CameraPose::identity();
    std::vector<Correspondence2D3D> corr;
    for (int i = 0; i < 20; ++i) {
      const Point3 X(-1 + 0.1 * i, 0.2, 6);
      corr.push_back({*project(pose, K, X), X});
    }
    cfg.max_iterations = 200;
    const auto res = ransac_p3p(corr, K, cfg);
    CHECK_FALSE(res.ok());
    CHECK(res.status == LocalizationStatus::Failure);
    CHECK(res.num_inliers < cfg.min_inliers);
  }

  SUBCASE("too few correspondences") {
    oracle::Rand rng(21);
    const auto p = oracle::make_absolute_problem(rng, 3, 0.0, 0.0);
    CHECK_FALSE(ransac_p3p(p.corr, p.K, cfg).ok());
  }

  SUBCASE("mask, monotonicity and determinism") {
    oracle::Rand rng(22);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = oracle::make_absolute_problem(rng, 80, 0.4, 1.0);
      cfg.seed = 1000 + trial;
      RansacTrace trace;
      const auto res = ransac_p3p(p.corr, p.K, cfg, &trace);
      REQUIRE(res.ok());
      std::vector<bool> mask;
      const double score = msac_score(*res.pose, p.K, p.corr, cfg.inlier_threshold_px, &mask);
      CHECK(mask == res.inlier_mask);
      CHECK(score == res.score);
      for (double s : trace.hypothesis_scores) CHECK(res.score <= s);
      CHECK(ransac_p3p(p.corr, p.K, cfg) == res);
    }
  }
}

TEST_CASE("ransac_e5p1") {
  RansacConfig cfg;
  SUBCASE("noise-free, two references") {
    oracle::Rand rng(30);
    for (int trial = 0; trial < 20; ++trial) {
      const auto p = oracle::make_relative_problem(rng, 2, 50, 0.0, 0.0);
      cfg.seed = trial;
      const auto res = ransac_e5p1(p.problem, cfg);
      REQUIRE(res.ok());
      CHECK(position_error(*res.pose, p.truth) < 1e-6);
      CHECK(rotation_error_deg(*res.pose, p.truth) < 1e-5);
    }
  }

  SUBCASE("explicit primary reference") {
    oracle::Rand rng(31);
    const auto p = oracle::make_relative_problem(rng, 3, 30, 0.0, 0.0);
    const auto res = ransac_e5p1(p.problem, cfg, 1);
    REQUIRE(res.ok());
    CHECK(position_error(*res.pose, p.truth) < 1e-6);
  }

  SUBCASE("four matches fail") {
    oracle::Rand rng(32);
    auto p = oracle::make_relative_problem(rng, 2, 2, 0.0, 0.0);
    const auto res = ransac_e5p1(p.problem, cfg);
    CHECK(res.status == LocalizationStatus::Failure);
    CHECK_FALSE(res.pose);
    CHECK(res.num_correspondences == 4);
  }

  SUBCASE("single reference cannot fix scale") {
    oracle::Rand rng(33);
    auto p = oracle::make_relative_problem(rng, 1, 40, 0.0, 0.0);
    CHECK_FALSE(ransac_e5p1(p.problem, cfg).ok());
  }

  SUBCASE("mask, monotonicity and determinism") {
    oracle::Rand rng(34);
    for (int trial = 0; trial < 10; ++trial) {
      const auto p = oracle::make_relative_problem(rng, 3, 40, 0.3, 1.0);
      cfg.seed = 77 + trial;
      RansacTrace trace;
      const auto res = ransac_e5p1(p.problem, cfg, std::nullopt, &trace);
      REQUIRE(res.ok());
      std::vector<bool> mask;
      msac_score(*res.pose, p.problem, cfg.inlier_threshold_px, &mask);
      CHECK(mask == res.inlier_mask);
      for (double s : trace.hypothesis_scores) CHECK(res.score <= s);
      CHECK(ransac_e5p1(p.problem, cfg) == res);
    }
  }
}
