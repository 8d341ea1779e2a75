#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "handvote/codec.hpp"
#include "handvote/geometry.hpp"
#include "handvote/rng.hpp"

namespace handvote {

/// One skeleton segment. Joint i sits at the far end of bone i; bone 0 is the
/// root (parent -1, zero offset). The capsule spans parent joint -> joint with
/// the given radius (a sphere when the segment degenerates).
struct Bone {
  int parent = -1;
  Eigen::Vector3d rest_offset = Eigen::Vector3d::Zero();  // mm, in parent frame
  double radius = 0.0;                                    // mm
  Eigen::Vector3d angle_lo = Eigen::Vector3d::Zero();     // XYZ euler limits, rad
  Eigen::Vector3d angle_hi = Eigen::Vector3d::Zero();
};

struct HandModel {
  std::string name;
  std::vector<Bone> bones;
  Eigen::Vector3d translation_lo = Eigen::Vector3d::Zero();  // root placement box, mm
  Eigen::Vector3d translation_hi = Eigen::Vector3d::Zero();

  int joint_count() const { return static_cast<int>(bones.size()); }
  std::vector<std::string> joint_names() const;
};

void validate(const HandModel& model);

/// Capsule-skeleton toy hand: root sphere plus five 3-segment fingers,
/// 16 joints, ~180 mm span, radii 6-11 mm.
HandModel default_hand16();

/// Reduced model for fast training runs: root plus two 2-segment fingers.
HandModel mini_hand5();

HandModel model_by_name(const std::string& name);

struct PoseAngles {
  Eigen::Vector3d root_translation = Eigen::Vector3d::Zero();  // mm
  std::vector<Eigen::Vector3d> angles;  // per bone, XYZ euler; [0] is the global rotation
};

/// Joint positions by composing parent transforms root-to-leaf. Throws
/// std::domain_error when any angle or the translation leaves the model limits.
Pose forward_kinematics(const HandModel& model, const PoseAngles& angles);

/// Per-pixel ray casting against every capsule, keeping the nearest hit.
/// Misses are invalid pixels. Deterministic; rays go through pixel centers.
DepthFrame render_depth(const HandModel& model, const PoseAngles& angles,
                        const CameraIntrinsics& cam);

/// Uniform pose within the model's angle and translation limits.
PoseAngles sample_pose(const HandModel& model, Rng& rng);

struct NoiseConfig {
  double depth_noise_std = 0.0;     // mm, on valid pixels
  double hole_prob = 0.0;           // per-pixel invalidation probability
  double target_noise_std_s = 0.0;  // additive on S, clamped back to [0, 1]
  double target_noise_std_v = 0.0;  // additive on V, re-normalized to unit length
  std::uint64_t seed = 0;
};

void validate(const NoiseConfig& nc);

DepthFrame corrupt_frame(const DepthFrame& frame, const NoiseConfig& nc);
DenseTargets corrupt_targets(const DenseTargets& targets, const NoiseConfig& nc);

/// Signed distance from a point to the capsule surface around segment [a, b].
double capsule_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                        const Eigen::Vector3d& b, double radius);

struct DatasetParams {
  int count = 0;
  std::uint64_t seed = 0;
  double theta = 80.0;  // encoding ball radius, mm
  double tau = 12.0;    // encoding disk radius, px
  NoiseConfig frame_noise;
};

/// Write count (frame, pose, targets) triples plus manifest.json into out_dir.
/// Depth is quantized to the on-disk millimeter grid before targets are
/// encoded, so files decode exactly. Per-frame seeds derive as seed ^ index;
/// output bytes are a pure function of the arguments. Returns the manifest path.
std::string generate_dataset(const HandModel& model, const CameraIntrinsics& cam,
                             const DatasetParams& params, const std::string& out_dir);

}  // namespace handvote
