#include "doctest.h"

#include <Eigen/Core>
#include <cmath>
#include <filesystem>

#include "handvote/codec.hpp"
#include "handvote/io.hpp"
#include "handvote/synth.hpp"
#include "test_util.hpp"

using namespace handvote;

TEST_CASE("zero angles give the rest pose") {
  const HandModel model = default_hand16();
  PoseAngles angles;
  angles.root_translation = Eigen::Vector3d(0.0, 0.0, 600.0);
  angles.angles.assign(model.bones.size(), Eigen::Vector3d::Zero());
  const Pose pose = forward_kinematics(model, angles);
  for (std::size_t i = 0; i < model.bones.size(); ++i) {
    Eigen::Vector3d expected = angles.root_translation;
    int b = static_cast<int>(i);
    while (b >= 0) {
      expected += model.bones[b].rest_offset;
      b = model.bones[b].parent;
    }
    CHECK((pose.joints[i] - expected).norm() <= 1e-12);
  }
}

TEST_CASE("pure root translation translates every joint") {
  const HandModel model = default_hand16();
  Rng rng(51);
  PoseAngles angles = sample_pose(model, rng);
  const Pose base = forward_kinematics(model, angles);
  PoseAngles shifted = angles;
  shifted.root_translation += Eigen::Vector3d(5.0, -3.0, 20.0);
  const Pose moved = forward_kinematics(model, shifted);
  for (int j = 0; j < base.joint_count(); ++j) {
    CHECK((moved.joints[j] - base.joints[j] - Eigen::Vector3d(5.0, -3.0, 20.0)).norm() <= 1e-9);
  }
}

TEST_CASE("a 90-degree x rotation maps the child offset (0,0,L) to (0,-L,0)") {
  HandModel model;
  Bone root;
  root.parent = -1;
  root.radius = 5.0;
  root.angle_lo = root.angle_hi = Eigen::Vector3d::Zero();
  model.bones.push_back(root);
  Bone child;
  child.parent = 0;
  child.rest_offset = Eigen::Vector3d(0.0, 0.0, 30.0);
  child.radius = 5.0;
  child.angle_lo = Eigen::Vector3d(-3.2, 0.0, 0.0);
  child.angle_hi = Eigen::Vector3d(3.2, 0.0, 0.0);
  model.bones.push_back(child);
  model.translation_lo = Eigen::Vector3d(-10, -10, 100);
  model.translation_hi = Eigen::Vector3d(10, 10, 900);

  PoseAngles angles;
  angles.root_translation = Eigen::Vector3d(0.0, 0.0, 500.0);
  angles.angles = {Eigen::Vector3d::Zero(),
                   Eigen::Vector3d(1.5707963267948966, 0.0, 0.0)};
  const Pose pose = forward_kinematics(model, angles);
  const Eigen::Vector3d relative = pose.joints[1] - pose.joints[0];
  CHECK((relative - Eigen::Vector3d(0.0, -30.0, 0.0)).norm() <= 1e-9);
}

TEST_CASE("forward kinematics preserves bone lengths") {
  const HandModel model = default_hand16();
  Rng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const PoseAngles angles = sample_pose(model, rng);
    const Pose pose = forward_kinematics(model, angles);
    for (std::size_t b = 1; b < model.bones.size(); ++b) {
      const double rest = model.bones[b].rest_offset.norm();
      const double actual = (pose.joints[b] - pose.joints[model.bones[b].parent]).norm();
      CHECK(std::abs(actual - rest) <= 1e-9 * std::max(1.0, rest));
    }
  }
}

TEST_CASE("out-of-limit angles are a domain error") {
  const HandModel model = default_hand16();
  PoseAngles angles;
  angles.root_translation = Eigen::Vector3d(0.0, 0.0, 600.0);
  angles.angles.assign(model.bones.size(), Eigen::Vector3d::Zero());
  angles.angles[1].x() = 99.0;
  CHECK_THROWS_AS(forward_kinematics(model, angles), std::domain_error);
}

TEST_CASE("a single sphere renders front-surface depth on the optical axis") {
  HandModel model;
  Bone root;
  root.parent = -1;
  root.radius = 25.0;
  model.bones.push_back(root);
  model.translation_lo = Eigen::Vector3d(-1, -1, 100);
  model.translation_hi = Eigen::Vector3d(1, 1, 900);

  PoseAngles angles;
  angles.root_translation = Eigen::Vector3d(0.0, 0.0, 500.0);
  angles.angles = {Eigen::Vector3d::Zero()};

  CameraIntrinsics cam{100.0, 100.0, 16.0, 16.0, 32, 32};
  const DepthFrame frame = render_depth(model, angles, cam);
  CHECK(frame.valid(16, 16) == 1);
  CHECK(frame.depth(16, 16) == doctest::Approx(475.0).epsilon(1e-9));
}

TEST_CASE("an empty model renders an all-invalid frame") {
  HandModel model;
  PoseAngles angles;
  CameraIntrinsics cam{100.0, 100.0, 8.0, 8.0, 16, 16};
  const DepthFrame frame = render_depth(model, angles, cam);
  for (std::size_t i = 0; i < frame.valid.size(); ++i) CHECK(frame.valid[i] == 0);
}

TEST_CASE("rendered points land on a capsule surface") {
  const HandModel model = default_hand16();
  Rng rng(55);
  const PoseAngles angles = sample_pose(model, rng);
  const Pose pose = forward_kinematics(model, angles);
  const DepthFrame frame = render_depth(model, angles, testutil::small_camera());
  const PointMap pm = depth_to_pointmap(frame);
  int tested = 0;
  for (std::size_t i = 0; i < pm.points.size() && tested < 1000; ++i) {
    if (!pm.valid[i]) continue;
    double best = 1e30;
    for (std::size_t b = 0; b < model.bones.size(); ++b) {
      const Eigen::Vector3d end = pose.joints[b];
      const Eigen::Vector3d start =
          model.bones[b].parent >= 0 ? pose.joints[model.bones[b].parent] : end;
      best = std::min(best, std::abs(capsule_distance(pm.points[i], start, end,
                                                      model.bones[b].radius)));
    }
    CHECK(best <= 1e-6 * 1000.0);
    ++tested;
  }
  CHECK(tested > 100);
}

TEST_CASE("rendered depth respects the nearest-joint geometric bound") {
  const HandModel model = default_hand16();
  double max_radius = 0.0;
  for (const Bone& b : model.bones) max_radius = std::max(max_radius, b.radius);
  Rng rng(57);
  const PoseAngles angles = sample_pose(model, rng);
  const Pose pose = forward_kinematics(model, angles);
  const DepthFrame frame = render_depth(model, angles, testutil::small_camera());
  const PointMap pm = depth_to_pointmap(frame);

  double nearest_z = 1e30;
  double nearest_euclid = 1e30;
  for (const auto& joint : pose.joints) {
    nearest_z = std::min(nearest_z, joint.z());
    nearest_euclid = std::min(nearest_euclid, joint.norm());
  }

  int tested = 0;
  Rng pick(58);
  while (tested < 1000) {
    const int y = pick.uniform_int(0, frame.depth.height() - 1);
    const int x = pick.uniform_int(0, frame.depth.width() - 1);
    if (!frame.valid(y, x)) continue;
    // exact: z is linear along every capsule segment
    CHECK(frame.depth(y, x) >= nearest_z - max_radius - 1e-6);
    // euclidean form, with slack for segment points dipping below both endpoints
    CHECK(pm.points(y, x).norm() >= nearest_euclid - max_radius - 1.5);
    ++tested;
  }
}

TEST_CASE("sample_pose is seeded and uniform within limits") {
  const HandModel model = default_hand16();
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) {
    const PoseAngles pa = sample_pose(model, a);
    const PoseAngles pb = sample_pose(model, b);
    CHECK(pa.root_translation == pb.root_translation);
    for (std::size_t k = 0; k < pa.angles.size(); ++k) CHECK(pa.angles[k] == pb.angles[k]);
  }

  Rng rng(59);
  const int n = 10000;
  double sum_flex = 0.0;
  const int bone = 1;
  for (int i = 0; i < n; ++i) {
    const PoseAngles p = sample_pose(model, rng);
    for (std::size_t k = 0; k < p.angles.size(); ++k) {
      for (int axis = 0; axis < 3; ++axis) {
        CHECK(p.angles[k][axis] >= model.bones[k].angle_lo[axis]);
        CHECK(p.angles[k][axis] <= model.bones[k].angle_hi[axis]);
      }
    }
    sum_flex += p.angles[bone].x();
  }
  const double lo = model.bones[bone].angle_lo.x();
  const double hi = model.bones[bone].angle_hi.x();
  const double midpoint = (lo + hi) / 2.0;
  const double se_mean = (hi - lo) / std::sqrt(12.0) / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(sum_flex / n - midpoint) <= 3.0 * se_mean);
}

TEST_CASE("corruption with zero noise is the identity") {
  const auto scene = testutil::render_scene(61);
  NoiseConfig nc;
  const DepthFrame same = corrupt_frame(scene.frame, nc);
  for (std::size_t i = 0; i < same.depth.size(); ++i) {
    CHECK(same.depth[i] == scene.frame.depth[i]);
    CHECK(same.valid[i] == scene.frame.valid[i]);
  }
  const DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  const DenseTargets same_t = corrupt_targets(t, nc);
  for (std::size_t i = 0; i < t.S[0].values.size(); ++i) {
    CHECK(same_t.S[0].values[i] == t.S[0].values[i]);
    CHECK(same_t.V[0].vectors[i] == t.V[0].vectors[i]);
  }
}

TEST_CASE("hole probability one invalidates everything") {
  const auto scene = testutil::render_scene(62);
  NoiseConfig nc;
  nc.hole_prob = 1.0;
  const DepthFrame holes = corrupt_frame(scene.frame, nc);
  for (std::size_t i = 0; i < holes.valid.size(); ++i) CHECK(holes.valid[i] == 0);
}

TEST_CASE("corrupted targets keep S in range and V on the unit sphere") {
  const auto scene = testutil::render_scene(63);
  const DenseTargets t = encode_targets(scene.frame, scene.pose, 80.0, 4.5);
  NoiseConfig nc;
  nc.target_noise_std_s = 0.05;
  nc.target_noise_std_v = 0.05;
  nc.seed = 9;
  const DenseTargets noisy = corrupt_targets(t, nc);
  for (int j = 0; j < t.joint_count(); ++j) {
    for (std::size_t i = 0; i < t.S[j].values.size(); ++i) {
      CHECK(noisy.S[j].values[i] >= 0.0);
      CHECK(noisy.S[j].values[i] <= 1.0);
      const double norm = noisy.V[j].vectors[i].norm();
      CHECK((norm == 0.0 || std::abs(norm - 1.0) <= 1e-6));
      if (t.V[j].vectors[i].isZero()) CHECK(noisy.V[j].vectors[i].isZero());
    }
  }
}

TEST_CASE("dataset generation: empty, reproducible, invariant-satisfying") {
  CameraIntrinsics cam{110.0, 110.0, 24.0, 24.0, 48, 48};
  const HandModel model = mini_hand5();

  const std::string empty_dir = testutil::make_temp_dir("synth_empty");
  DatasetParams params;
  params.count = 0;
  params.seed = 7;
  params.theta = 80.0;
  params.tau = 4.5;
  const std::string manifest_path = generate_dataset(model, cam, params, empty_dir);
  const DatasetManifest empty = read_manifest(manifest_path);
  CHECK(empty.samples.empty());
  int files = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(empty_dir)) ++files;
  CHECK(files == 1);  // only the manifest

  const std::string dir_a = testutil::make_temp_dir("synth_a");
  const std::string dir_b = testutil::make_temp_dir("synth_b");
  params.count = 8;
  generate_dataset(model, cam, params, dir_a);
  generate_dataset(model, cam, params, dir_b);
  CHECK(testutil::dirs_equal(dir_a, dir_b));

  const DatasetManifest m = read_manifest((std::filesystem::path(dir_a) / "manifest.json").string());
  REQUIRE(m.samples.size() == 8);
  for (const auto& s : m.samples) {
    const DepthFrame frame = read_depth_pgm(m.resolve(s.frame));
    const Pose pose = read_pose_json(m.resolve(s.pose));
    const DenseTargets t = read_targets(m.resolve(s.targets));
    CHECK(t.joint_count() == model.joint_count());
    const PointMap pm = depth_to_pointmap(frame);
    for (int j = 0; j < t.joint_count(); ++j) {
      for (std::size_t i = 0; i < t.S[j].values.size(); ++i) {
        CHECK(t.S[j].values[i] >= 0.0);
        CHECK(t.S[j].values[i] <= 1.0);
        const double norm = t.V[j].vectors[i].norm();
        CHECK((norm == 0.0 || std::abs(norm - 1.0) <= 1e-5));
        if (!pm.valid[i]) {
          CHECK(t.S[j].values[i] == 0.0);
          CHECK(t.V[j].vectors[i].isZero());
        }
      }
    }
    (void)pose;
  }
}
