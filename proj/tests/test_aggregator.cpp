#include "doctest.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "handvote/aggregator.hpp"
#include "handvote/codec.hpp"
#include "handvote/rng.hpp"
#include "test_util.hpp"

using namespace handvote;

namespace {

CandidateSet random_set(Rng& rng, int k) {
  CandidateSet cs;
  for (int i = 0; i < k; ++i) {
    cs.points.emplace_back(rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(400, 700));
    cs.weights.push_back(rng.uniform(0.05, 1.0));
    cs.source_pixels.push_back(i);
  }
  return cs;
}

// independent fixed-point iteration, scalar arithmetic only
Eigen::Vector3d fixed_point_oracle(const CandidateSet& cs, double sigma, int iters) {
  double px = 0, py = 0, pz = 0, wsum = 0;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    px += cs.weights[i] * cs.points[i].x();
    py += cs.weights[i] * cs.points[i].y();
    pz += cs.weights[i] * cs.points[i].z();
    wsum += cs.weights[i];
  }
  px /= wsum;
  py /= wsum;
  pz /= wsum;
  for (int n = 0; n < iters; ++n) {
    double nx = 0, ny = 0, nz = 0, denom = 0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double dx = cs.points[i].x() - px;
      const double dy = cs.points[i].y() - py;
      const double dz = cs.points[i].z() - pz;
      const double kw = std::exp(-(dx * dx + dy * dy + dz * dz) / (2 * sigma * sigma)) *
                        cs.weights[i];
      nx += kw * cs.points[i].x();
      ny += kw * cs.points[i].y();
      nz += kw * cs.points[i].z();
      denom += kw;
    }
    const double sx = nx / denom - px, sy = ny / denom - py, sz = nz / denom - pz;
    px += sx;
    py += sy;
    pz += sz;
    if (std::sqrt(sx * sx + sy * sy + sz * sz) < 1e-13) break;
  }
  return {px, py, pz};
}

}  // namespace

TEST_CASE("select_candidates keeps the k best S values deterministically") {
  const auto scene = testutil::render_scene(31);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const auto S = encode_heatmap3d(pm, scene.pose, 80.0);
  const auto V = encode_vectorfield(pm, scene.pose, 80.0);
  const CandidateGrid cg = recover_candidates(pm, S[4], V[4], 80.0);

  // exhaustive scan oracle over (S desc, index asc)
  std::vector<int> order;
  for (std::size_t i = 0; i < cg.points.size(); ++i) {
    if (cg.valid[i]) order.push_back(static_cast<int>(i));
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (S[4].values[a] != S[4].values[b]) return S[4].values[a] > S[4].values[b];
    return a < b;
  });

  const CandidateSet cs = select_candidates(S[4], cg, 5);
  REQUIRE(cs.size() == 5);
  for (int i = 0; i < 5; ++i) CHECK(cs.source_pixels[i] == order[i]);

  // k = 1 is the pixel whose point is 3D-nearest the joint
  const CandidateSet best = select_candidates(S[4], cg, 1);
  double best_dist = 1e30;
  int best_idx = -1;
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    if (!cg.valid[i]) continue;
    const double d = (pm.points[i] - scene.pose.joints[4]).norm();
    if (d < best_dist) {
      best_dist = d;
      best_idx = static_cast<int>(i);
    }
  }
  CHECK(best.source_pixels[0] == best_idx);
}

TEST_CASE("select_candidates reports no evidence on an empty grid") {
  HeatMap3D S;
  S.values = Grid<double>(4, 4, 0.0);
  CandidateGrid cg;
  cg.points = Grid<Eigen::Vector3d>(4, 4, Eigen::Vector3d::Zero());
  cg.valid = Mask(4, 4, 0);
  CHECK_THROWS_AS(select_candidates(S, cg, 5), no_evidence_error);
}

TEST_CASE("select_candidates returns everything when fewer than k exist") {
  HeatMap3D S;
  S.values = Grid<double>(2, 2, 0.0);
  S.values(0, 0) = 0.5;
  S.values(1, 1) = 0.25;
  CandidateGrid cg;
  cg.points = Grid<Eigen::Vector3d>(2, 2, Eigen::Vector3d(1, 2, 3));
  cg.valid = Mask(2, 2, 0);
  cg.valid(0, 0) = 1;
  cg.valid(1, 1) = 1;
  const CandidateSet cs = select_candidates(S, cg, 10);
  REQUIRE(cs.size() == 2);
  CHECK(cs.source_pixels[0] == 0);
  CHECK(cs.source_pixels[1] == 3);
}

TEST_CASE("weighted weights sample R bilinearly at the candidate projection") {
  CameraIntrinsics cam{100.0, 100.0, 8.0, 8.0, 16, 16};
  HeatMap2D R;
  R.values = Grid<double>(16, 16, 0.0);
  R.values(8, 8) = 0.2;
  R.values(8, 9) = 0.4;

  CandidateSet cs;
  cs.points.push_back(unproject(8.0, 8.0, 500.0, cam));  // node-exact
  cs.points.push_back(unproject(8.5, 8.0, 500.0, cam));  // midway between cells
  cs.weights = {1.0, 1.0};
  cs.source_pixels = {0, 1};
  weights_weighted(cs, R, cam);
  REQUIRE(cs.size() == 2);
  CHECK(cs.weights[0] == doctest::Approx(0.2));
  CHECK(cs.weights[1] == doctest::Approx(0.3));
}

TEST_CASE("weighted weights fall back to uniform when all projections miss") {
  CameraIntrinsics cam{100.0, 100.0, 8.0, 8.0, 16, 16};
  HeatMap2D R;
  R.values = Grid<double>(16, 16, 0.0);
  CandidateSet cs;
  cs.points.push_back(unproject(40.0, 40.0, 500.0, cam));   // outside the grid
  cs.points.push_back(unproject(-9.0, -9.0, 500.0, cam));   // outside the grid
  cs.weights = {1.0, 1.0};
  cs.source_pixels = {0, 1};
  weights_weighted(cs, R, cam);
  REQUIRE(cs.size() == 2);
  CHECK(cs.weights[0] == 1.0);
  CHECK(cs.weights[1] == 1.0);

  // behind-camera candidates are dropped
  cs.points.push_back(Eigen::Vector3d(0.0, 0.0, -100.0));
  cs.weights.push_back(1.0);
  cs.source_pixels.push_back(2);
  weights_weighted(cs, R, cam);
  CHECK(cs.size() == 2);
}

TEST_CASE("unweighted weights follow (1 + R) * S at the source pixel") {
  HeatMap2D R;
  R.values = Grid<double>(4, 4, 0.0);
  HeatMap3D S;
  S.values = Grid<double>(4, 4, 0.0);
  R.values(0, 0) = 0.0;
  S.values(0, 0) = 0.5;
  R.values(1, 1) = 1.0;
  S.values(1, 1) = 1.0;

  CandidateSet cs;
  cs.points = {Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
  cs.weights = {1.0, 1.0};
  cs.source_pixels = {0, 5};
  weights_unweighted(cs, R, S);
  CHECK(cs.weights[0] == doctest::Approx(0.5));
  CHECK(cs.weights[1] == doctest::Approx(2.0));
}

TEST_CASE("unweighted weights match a scalar-loop oracle on random grids") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    HeatMap2D R;
    R.values = Grid<double>(8, 8, 0.0);
    HeatMap3D S;
    S.values = Grid<double>(8, 8, 0.0);
    for (std::size_t i = 0; i < R.values.size(); ++i) {
      R.values[i] = rng.uniform(0, 1);
      S.values[i] = rng.uniform(0, 1);
    }
    CandidateSet cs;
    const int k = rng.uniform_int(1, 10);
    for (int i = 0; i < k; ++i) {
      cs.points.emplace_back(0, 0, 0);
      cs.weights.push_back(1.0);
      cs.source_pixels.push_back(rng.uniform_int(0, 63));
    }
    weights_unweighted(cs, R, S);
    for (int i = 0; i < k; ++i) {
      const int px = cs.source_pixels[i];
      const double expected = (1.0 + R.values[px]) * S.values[px];
      CHECK(cs.weights[i] == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("mean shift basics: single candidate and symmetric pair") {
  CandidateSet one;
  one.points = {Eigen::Vector3d(3.0, 4.0, 5.0)};
  one.weights = {0.7};
  one.source_pixels = {0};
  CHECK(mean_shift(one, 40.0, 30, 1e-3) == Eigen::Vector3d(3.0, 4.0, 5.0));

  CandidateSet pair;
  pair.points = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(10, 0, 0)};
  pair.weights = {1.0, 1.0};
  pair.source_pixels = {0, 1};
  const Eigen::Vector3d mid = mean_shift(pair, 40.0, 30, 1e-9);
  CHECK((mid - Eigen::Vector3d(5, 0, 0)).norm() <= 1e-12);
}

TEST_CASE("mean shift agrees with the fixed-point oracle") {
  CandidateSet cs;
  cs.points = {Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(10, 0, 0)};
  cs.weights = {1.0, 3.0};
  cs.source_pixels = {0, 1};
  const Eigen::Vector3d ours = mean_shift(cs, 40.0, 500, 1e-12);
  const Eigen::Vector3d oracle = fixed_point_oracle(cs, 40.0, 10000);
  CHECK((ours - oracle).norm() <= 1e-9);

  Rng rng(35);
  for (int trial = 0; trial < 300; ++trial) {
    const CandidateSet set = random_set(rng, rng.uniform_int(1, 10));
    const double sigma = rng.uniform(10, 100);
    CHECK((mean_shift(set, sigma, 500, 1e-11) - fixed_point_oracle(set, sigma, 10000)).norm() <=
          1e-9);
  }
}

TEST_CASE("mean shift iterates stay inside the candidate bounding box") {
  Rng rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    const CandidateSet cs = random_set(rng, rng.uniform_int(2, 10));
    std::vector<Eigen::Vector3d> trace;
    mean_shift(cs, rng.uniform(10, 100), 100, 1e-9, &trace);
    Eigen::Vector3d lo = cs.points[0], hi = cs.points[0];
    for (const auto& p : cs.points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    for (const auto& it : trace) {
      for (int a = 0; a < 3; ++a) {
        CHECK(it[a] >= lo[a] - 1e-9);
        CHECK(it[a] <= hi[a] + 1e-9);
      }
    }
  }
}

TEST_CASE("mean shift with huge sigma returns the weighted mean") {
  Rng rng(39);
  for (int trial = 0; trial < 100; ++trial) {
    const CandidateSet cs = random_set(rng, rng.uniform_int(1, 10));
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double wsum = 0;
    for (std::size_t i = 0; i < cs.size(); ++i) {
      mean += cs.weights[i] * cs.points[i];
      wsum += cs.weights[i];
    }
    mean /= wsum;
    CHECK((mean_shift(cs, 1e6, 100, 1e-9) - mean).norm() <= 1e-6);
  }
}

TEST_CASE("mean shift rejects empty and zero-weight sets") {
  CandidateSet empty;
  CHECK_THROWS_AS(mean_shift(empty, 40.0, 30, 1e-3), no_evidence_error);
  CandidateSet zeros;
  zeros.points = {Eigen::Vector3d(1, 2, 3)};
  zeros.weights = {0.0};
  zeros.source_pixels = {0};
  CHECK_THROWS_AS(mean_shift(zeros, 40.0, 30, 1e-3), no_evidence_error);
}

TEST_CASE("estimate_joint recovers ground truth and k = 1 degenerates cleanly") {
  const auto scene = testutil::render_scene(41);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  AggregatorConfig cfg;
  cfg.theta = 80.0;
  cfg.tau = 4.5;

  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    const Eigen::Vector3d est = estimate_joint(pm, t.R[j], t.S[j], t.V[j],
                                               scene.frame.intrinsics, cfg);
    CHECK((est - scene.pose.joints[j]).norm() <= 0.1);
  }

  cfg.k_candidates = 1;
  const CandidateGrid cg = recover_candidates(pm, t.S[0], t.V[0], 80.0);
  const CandidateSet best = select_candidates(t.S[0], cg, 1);
  const Eigen::Vector3d est = estimate_joint(pm, t.R[0], t.S[0], t.V[0],
                                             scene.frame.intrinsics, cfg);
  CHECK((est - best.points[0]).norm() <= 1e-12);
}

TEST_CASE("weighted and unweighted variants agree on clean targets") {
  const auto scene = testutil::render_scene(42);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  AggregatorConfig weighted;
  weighted.theta = 80.0;
  weighted.tau = 4.5;
  AggregatorConfig unweighted = weighted;
  unweighted.weighting = Weighting::kUnweighted;
  const PoseEstimate a = estimate_pose(pm, t, scene.frame.intrinsics, weighted);
  const PoseEstimate b = estimate_pose(pm, t, scene.frame.intrinsics, unweighted);
  REQUIRE(a.all_ok());
  REQUIRE(b.all_ok());
  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    CHECK((a.pose.joints[j] - b.pose.joints[j]).norm() < 0.1);
  }
}

TEST_CASE("estimate_pose flags starved joints without touching the others") {
  const auto scene = testutil::render_scene(43);
  const PointMap pm = depth_to_pointmap(scene.frame);
  DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  for (auto& v : t.S[2].values) v = 0.0;  // joint 2 loses all its votes
  AggregatorConfig cfg;
  cfg.theta = 80.0;
  cfg.tau = 4.5;
  const PoseEstimate est = estimate_pose(pm, t, scene.frame.intrinsics, cfg);
  CHECK(est.ok[2] == 0);
  CHECK(est.pose.joints[2].isZero());
  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    if (j == 2) continue;
    CHECK(est.ok[j] == 1);
    CHECK((est.pose.joints[j] - scene.pose.joints[j]).norm() <= 0.1);
  }
}

TEST_CASE("joint permutation permutes the estimates identically") {
  const auto scene = testutil::render_scene(44);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  AggregatorConfig cfg;
  cfg.theta = 80.0;
  cfg.tau = 4.5;
  const PoseEstimate direct = estimate_pose(pm, t, scene.frame.intrinsics, cfg);

  Pose reversed = scene.pose;
  std::reverse(reversed.joints.begin(), reversed.joints.end());
  const DenseTargets t_rev = encode_targets(scene.frame, reversed, 80.0, 4.5);
  const PoseEstimate est_rev = estimate_pose(pm, t_rev, scene.frame.intrinsics, cfg);
  const int j_count = scene.pose.joint_count();
  for (int j = 0; j < j_count; ++j) {
    CHECK((est_rev.pose.joints[j_count - 1 - j] - direct.pose.joints[j]).norm() <= 1e-12);
  }
}

TEST_CASE("estimate_pose is bit-deterministic") {
  const auto scene = testutil::render_scene(45);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  AggregatorConfig cfg;
  cfg.theta = 80.0;
  cfg.tau = 4.5;
  const PoseEstimate a = estimate_pose(pm, t, scene.frame.intrinsics, cfg);
  const PoseEstimate b = estimate_pose(pm, t, scene.frame.intrinsics, cfg);
  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    CHECK(a.pose.joints[j].x() == b.pose.joints[j].x());
    CHECK(a.pose.joints[j].y() == b.pose.joints[j].y());
    CHECK(a.pose.joints[j].z() == b.pose.joints[j].z());
  }
}

TEST_CASE("aggregator config validation") {
  AggregatorConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.k_candidates = 0;
  CHECK_THROWS_AS(validate(cfg), config_error);
  cfg.k_candidates = 5;
  cfg.sigma = 0.0;
  CHECK_THROWS_AS(validate(cfg), config_error);
  CHECK(weighting_from_string("weighted") == Weighting::kWeighted);
  CHECK_THROWS_AS(weighting_from_string("nope"), config_error);
}
