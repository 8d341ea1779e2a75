#include "doctest.h"

#include <Eigen/Core>
#include <cmath>

#include "handvote/codec.hpp"
#include "handvote/geometry.hpp"
#include "handvote/rng.hpp"
#include "test_util.hpp"

using namespace handvote;

namespace {

// One joint floating in front of a tiny synthetic surface patch.
struct Patch {
  DepthFrame frame;
  PointMap pm;
  Pose pose;
};

Patch make_patch(const Eigen::Vector3d& joint) {
  Patch p;
  p.frame.intrinsics = {100.0, 100.0, 8.0, 8.0, 16, 16};
  p.frame.depth = Grid<double>(16, 16, 0.0);
  p.frame.valid = Mask(16, 16, 0);
  for (int y = 4; y < 12; ++y) {
    for (int x = 4; x < 12; ++x) {
      p.frame.depth(y, x) = 500.0 + (x - 8) * 2.0;
      p.frame.valid(y, x) = 1;
    }
  }
  p.pm = depth_to_pointmap(p.frame);
  p.pose.joints = {joint};
  p.pose.joint_names = {"j0"};
  return p;
}

}  // namespace

TEST_CASE("3D heat map: exact hit, linear ramp, exclusive boundary") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  p.pose.joints[0] = p.pm.points(8, 8);  // joint exactly on a surface point
  auto maps = encode_heatmap3d(p.pm, p.pose, 80.0);
  CHECK(maps[0].values(8, 8) == 1.0);

  p.pose.joints[0] = p.pm.points(8, 8) + Eigen::Vector3d(20.0, 0.0, 0.0);
  maps = encode_heatmap3d(p.pm, p.pose, 80.0);
  CHECK(maps[0].values(8, 8) == doctest::Approx(0.75));

  p.pose.joints[0] = p.pm.points(8, 8) + Eigen::Vector3d(80.0, 0.0, 0.0);
  maps = encode_heatmap3d(p.pm, p.pose, 80.0);
  CHECK(maps[0].values(8, 8) == 0.0);

  // invalid pixels never score
  for (std::size_t i = 0; i < maps[0].values.size(); ++i) {
    if (!p.pm.valid[i]) CHECK(maps[0].values[i] == 0.0);
  }
  CHECK_THROWS_AS(encode_heatmap3d(p.pm, p.pose, 0.0), std::invalid_argument);
}

TEST_CASE("vector field points from the surface toward the joint") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  p.pose.joints[0] = p.pm.points(8, 8) - Eigen::Vector3d(10.0, 0.0, 0.0);
  // p = p_j + (10,0,0) => direction (-1,0,0)
  auto fields = encode_vectorfield(p.pm, p.pose, 80.0);
  CHECK(fields[0].vectors(8, 8).isApprox(Eigen::Vector3d(-1.0, 0.0, 0.0)));

  p.pose.joints[0] = p.pm.points(8, 8) + Eigen::Vector3d(90.0, 0.0, 0.0);
  fields = encode_vectorfield(p.pm, p.pose, 80.0);
  CHECK(fields[0].vectors(8, 8).isZero());
}

TEST_CASE("vector field norms are unit inside the ball") {
  const auto scene = testutil::render_scene(21);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const auto fields = encode_vectorfield(pm, scene.pose, 80.0);
  int checked = 0;
  for (const auto& field : fields) {
    for (std::size_t i = 0; i < field.vectors.size() && checked < 1000; ++i) {
      if (field.vectors[i].isZero()) continue;
      CHECK(std::abs(field.vectors[i].norm() - 1.0) <= 1e-6);
      ++checked;
    }
  }
  CHECK(checked == 1000);
}

TEST_CASE("2D heat map: apex, ramp, disk boundary, behind-camera joint") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  // joint whose projection lands exactly on the grid cell (8, 8)
  p.pose.joints[0] = unproject(8.0, 8.0, 400.0, p.frame.intrinsics);
  auto maps = encode_heatmap2d(p.frame, p.pose, 12.0);
  CHECK(maps[0].values(8, 8) == 1.0);
  CHECK(maps[0].values(8, 8 + 6) == doctest::Approx(0.5));  // 6 px at tau 12
  CHECK(maps[0].values(8, 8 + 12) == 0.0);

  // R is independent of pixel validity
  CHECK(maps[0].values(8, 9) > 0.0);
  CHECK(p.frame.valid(8, 9) == 1);
  CHECK(maps[0].values(7, 3) > 0.0);
  CHECK(p.frame.valid(7, 3) == 0);

  p.pose.joints[0] = Eigen::Vector3d(0.0, 0.0, -5.0);
  CHECK_THROWS_AS(encode_heatmap2d(p.frame, p.pose, 12.0), std::domain_error);
}

TEST_CASE("bundled encoding: far joint empties S and V but not R") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  // straight behind the patch along the view ray of pixel (8, 8): far in 3D,
  // projection still inside the disk
  p.pose.joints[0] = unproject(8.0, 8.0, 900.0, p.frame.intrinsics);
  const DenseTargets t = encode_targets(p.frame, p.pose, 80.0, 12.0);
  for (std::size_t i = 0; i < t.S[0].values.size(); ++i) {
    CHECK(t.S[0].values[i] == 0.0);
    CHECK(t.V[0].vectors[i].isZero());
  }
  CHECK(t.R[0].values(8, 8) == 1.0);
}

TEST_CASE("masked offsets reconstruct the joint under the mask") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  p.pose.joints[0] = p.pm.points(8, 8);
  auto fields = encode_offsets_masked(p.pm, p.pose, 80.0);
  CHECK(fields[0].mask(8, 8) == 1);
  CHECK(fields[0].offsets(8, 8).isZero());

  // boundary is exclusive
  p.pose.joints[0] = p.pm.points(8, 8) + Eigen::Vector3d(80.0, 0.0, 0.0);
  fields = encode_offsets_masked(p.pm, p.pose, 80.0);
  CHECK(fields[0].mask(8, 8) == 0);

  p.pose.joints[0] = p.pm.points(8, 8) + Eigen::Vector3d(15.0, -30.0, 40.0);
  fields = encode_offsets_masked(p.pm, p.pose, 80.0);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      if (!fields[0].mask(y, x)) continue;
      CHECK((p.pm.points(y, x) + fields[0].offsets(y, x) - p.pose.joints[0]).norm() == 0.0);
    }
  }
}

TEST_CASE("candidate recovery inverts the encoders exactly") {
  const auto scene = testutil::render_scene(22);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const double theta = 80.0;
  const auto S = encode_heatmap3d(pm, scene.pose, theta);
  const auto V = encode_vectorfield(pm, scene.pose, theta);
  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    const CandidateGrid cg = recover_candidates(pm, S[j], V[j], theta);
    for (std::size_t i = 0; i < cg.points.size(); ++i) {
      if (!cg.valid[i]) continue;
      CHECK((cg.points[i] - scene.pose.joints[j]).norm() <= 1e-6);
    }
  }
}

TEST_CASE("candidate recovery: direct cases and sensitivity to S") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  p.pose.joints[0] = p.pm.points(8, 8) + Eigen::Vector3d(30.0, 10.0, -20.0);
  const double theta = 80.0;
  auto S = encode_heatmap3d(p.pm, p.pose, theta);
  auto V = encode_vectorfield(p.pm, p.pose, theta);

  // S = 1 means the candidate is the surface point itself
  HeatMap3D s_one = S[0];
  for (auto& v : s_one.values) v = 1.0;
  CandidateGrid cg = recover_candidates(p.pm, s_one, V[0], theta);
  CHECK((cg.points(8, 8) - p.pm.points(8, 8)).norm() <= 1e-12);

  // S + 0.01 displaces the candidate by theta*0.01 against V
  HeatMap3D s_pert = S[0];
  s_pert.values(8, 8) += 0.01;
  cg = recover_candidates(p.pm, s_pert, V[0], theta);
  const Eigen::Vector3d expected =
      p.pose.joints[0] - theta * 0.01 * V[0].vectors(8, 8);
  CHECK((cg.points(8, 8) - expected).norm() <= 1e-9);
}

TEST_CASE("support consistency: S > 0 exactly where V is nonzero") {
  const auto scene = testutil::render_scene(23);
  const PointMap pm = depth_to_pointmap(scene.frame);
  const auto S = encode_heatmap3d(pm, scene.pose, 80.0);
  const auto V = encode_vectorfield(pm, scene.pose, 80.0);
  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    for (std::size_t i = 0; i < S[j].values.size(); ++i) {
      // zero-distance pixels are the measure-zero exception (S = 1, V = 0)
      if (S[j].values[i] == 1.0) continue;
      CHECK((S[j].values[i] > 0.0) == !V[j].vectors[i].isZero());
    }
  }
}

TEST_CASE("encodings are translation equivariant") {
  const auto scene = testutil::render_scene(24);
  PointMap pm = depth_to_pointmap(scene.frame);
  const Eigen::Vector3d shift(17.0, -6.0, 41.0);

  PointMap pm_shifted = pm;
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    if (pm_shifted.valid[i]) pm_shifted.points[i] += shift;
  }
  Pose pose_shifted = scene.pose;
  for (auto& jp : pose_shifted.joints) jp += shift;

  const auto S_a = encode_heatmap3d(pm, scene.pose, 80.0);
  const auto S_b = encode_heatmap3d(pm_shifted, pose_shifted, 80.0);
  const auto V_a = encode_vectorfield(pm, scene.pose, 80.0);
  const auto V_b = encode_vectorfield(pm_shifted, pose_shifted, 80.0);
  for (int j = 0; j < scene.pose.joint_count(); ++j) {
    for (std::size_t i = 0; i < S_a[j].values.size(); ++i) {
      CHECK(S_a[j].values[i] == doctest::Approx(S_b[j].values[i]).epsilon(1e-12));
      CHECK((V_a[j].vectors[i] - V_b[j].vectors[i]).norm() <= 1e-9);
    }
    const CandidateGrid cg_a = recover_candidates(pm, S_a[j], V_a[j], 80.0);
    const CandidateGrid cg_b = recover_candidates(pm_shifted, S_b[j], V_b[j], 80.0);
    for (std::size_t i = 0; i < cg_a.points.size(); ++i) {
      if (!cg_a.valid[i]) continue;
      CHECK((cg_b.points[i] - cg_a.points[i] - shift).norm() <= 1e-6);
    }
  }
}

TEST_CASE("S strictly decreases with 3D distance inside the ball") {
  Patch p = make_patch(Eigen::Vector3d::Zero());
  p.pose.joints[0] = p.pm.points(8, 8);
  const auto S = encode_heatmap3d(p.pm, p.pose, 80.0);
  double prev = 2.0;
  for (int x = 8; x < 12; ++x) {  // distance grows along the row
    const double value = S[0].values(8, x);
    CHECK(value < prev);
    prev = value;
  }
}
