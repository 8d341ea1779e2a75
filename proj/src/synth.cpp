#include "handvote/synth.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <stdexcept>

#include "handvote/errors.hpp"
#include "handvote/io.hpp"

namespace handvote {

namespace fs = std::filesystem;

std::vector<std::string> HandModel::joint_names() const {
  std::vector<std::string> names;
  names.reserve(bones.size());
  for (std::size_t i = 0; i < bones.size(); ++i) {
    names.push_back(i == 0 ? "root" : "joint_" + std::to_string(i));
  }
  return names;
}

void validate(const HandModel& model) {
  if (model.bones.empty() || model.bones[0].parent != -1) {
    throw std::invalid_argument("hand model: bone 0 must be the root");
  }
  for (std::size_t i = 1; i < model.bones.size(); ++i) {
    const Bone& b = model.bones[i];
    if (b.parent < 0 || b.parent >= static_cast<int>(i)) {
      throw std::invalid_argument("hand model: parents must precede children");
    }
  }
  for (const Bone& b : model.bones) {
    if (!(b.radius > 0.0)) throw std::invalid_argument("hand model: radii must be positive");
    for (int a = 0; a < 3; ++a) {
      if (b.angle_lo[a] > b.angle_hi[a]) {
        throw std::invalid_argument("hand model: angle limits must satisfy lo <= hi");
      }
    }
  }
}

HandModel default_hand16() {
  HandModel m;
  m.name = "hand16";
  Bone root;
  root.parent = -1;
  root.radius = 11.0;
  root.angle_lo = Eigen::Vector3d(-0.6, -0.6, -0.6);
  root.angle_hi = Eigen::Vector3d(0.6, 0.6, 0.6);
  m.bones.push_back(root);

  // Offsets place the hand's bulk near the root so random rotations keep the
  // whole hand inside the default view frustum.
  for (int f = 0; f < 5; ++f) {
    Bone base;
    base.parent = 0;
    base.rest_offset = Eigen::Vector3d((f - 2) * 30.0, 20.0, 0.0);
    base.radius = 11.0;
    base.angle_lo = Eigen::Vector3d(-0.3, 0.0, -0.25);
    base.angle_hi = Eigen::Vector3d(1.2, 0.0, 0.25);
    m.bones.push_back(base);
    const int base_idx = static_cast<int>(m.bones.size()) - 1;

    Bone mid;
    mid.parent = base_idx;
    mid.rest_offset = Eigen::Vector3d(0.0, 40.0, 0.0);
    mid.radius = 8.0;
    mid.angle_lo = Eigen::Vector3d(-0.1, 0.0, 0.0);
    mid.angle_hi = Eigen::Vector3d(1.3, 0.0, 0.0);
    m.bones.push_back(mid);

    Bone tip;
    tip.parent = base_idx + 1;
    tip.rest_offset = Eigen::Vector3d(0.0, 30.0, 0.0);
    tip.radius = 6.0;
    tip.angle_lo = Eigen::Vector3d(-0.1, 0.0, 0.0);
    tip.angle_hi = Eigen::Vector3d(1.2, 0.0, 0.0);
    m.bones.push_back(tip);
  }
  m.translation_lo = Eigen::Vector3d(-25.0, -25.0, 560.0);
  m.translation_hi = Eigen::Vector3d(25.0, 25.0, 660.0);
  return m;
}

HandModel mini_hand5() {
  HandModel m;
  m.name = "hand5";
  Bone root;
  root.parent = -1;
  root.radius = 11.0;
  root.angle_lo = Eigen::Vector3d(-0.5, -0.5, -0.5);
  root.angle_hi = Eigen::Vector3d(0.5, 0.5, 0.5);
  m.bones.push_back(root);

  for (int f = 0; f < 2; ++f) {
    Bone base;
    base.parent = 0;
    base.rest_offset = Eigen::Vector3d((f == 0 ? -18.0 : 18.0), 18.0, 0.0);
    base.radius = 9.0;
    base.angle_lo = Eigen::Vector3d(-0.3, 0.0, -0.2);
    base.angle_hi = Eigen::Vector3d(1.0, 0.0, 0.2);
    m.bones.push_back(base);

    Bone tip;
    tip.parent = static_cast<int>(m.bones.size()) - 1;
    tip.rest_offset = Eigen::Vector3d(0.0, 34.0, 0.0);
    tip.radius = 7.0;
    tip.angle_lo = Eigen::Vector3d(-0.1, 0.0, 0.0);
    tip.angle_hi = Eigen::Vector3d(1.1, 0.0, 0.0);
    m.bones.push_back(tip);
  }
  m.translation_lo = Eigen::Vector3d(-20.0, -20.0, 560.0);
  m.translation_hi = Eigen::Vector3d(20.0, 20.0, 660.0);
  return m;
}

HandModel model_by_name(const std::string& name) {
  if (name == "hand16") return default_hand16();
  if (name == "hand5") return mini_hand5();
  throw config_error("unknown hand model: " + name);
}

namespace {

Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& angles) {
  return (Eigen::AngleAxisd(angles.x(), Eigen::Vector3d::UnitX()) *
          Eigen::AngleAxisd(angles.y(), Eigen::Vector3d::UnitY()) *
          Eigen::AngleAxisd(angles.z(), Eigen::Vector3d::UnitZ()))
      .toRotationMatrix();
}

void check_limits(const HandModel& model, const PoseAngles& pose) {
  if (pose.angles.size() != model.bones.size()) {
    throw std::domain_error("pose angles: one rotation per bone required");
  }
  for (std::size_t i = 0; i < model.bones.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      const double lo = model.bones[i].angle_lo[a];
      const double hi = model.bones[i].angle_hi[a];
      const double v = pose.angles[i][a];
      if (v < lo - 1e-12 || v > hi + 1e-12) {
        throw std::domain_error("pose angles: bone " + std::to_string(i) +
                                " axis " + std::to_string(a) + " outside limits");
      }
    }
  }
  for (int a = 0; a < 3; ++a) {
    if (pose.root_translation[a] < model.translation_lo[a] - 1e-9 ||
        pose.root_translation[a] > model.translation_hi[a] + 1e-9) {
      throw std::domain_error("pose angles: root translation outside limits");
    }
  }
}

}  // namespace

Pose forward_kinematics(const HandModel& model, const PoseAngles& angles) {
  check_limits(model, angles);
  const std::size_t n = model.bones.size();
  std::vector<Eigen::Matrix3d> frames(n);
  Pose pose;
  pose.joints.resize(n);
  pose.joint_names = model.joint_names();
  for (std::size_t i = 0; i < n; ++i) {
    const Bone& b = model.bones[i];
    const Eigen::Matrix3d local = euler_xyz(angles.angles[i]);
    if (b.parent < 0) {
      frames[i] = local;
      pose.joints[i] = angles.root_translation + frames[i] * b.rest_offset;
    } else {
      frames[i] = frames[b.parent] * local;
      pose.joints[i] = pose.joints[b.parent] + frames[i] * b.rest_offset;
    }
  }
  return pose;
}

double capsule_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                        const Eigen::Vector3d& b, double radius) {
  const Eigen::Vector3d ab = b - a;
  const double len_sq = ab.squaredNorm();
  double t = 0.0;
  if (len_sq > 0.0) {
    t = std::clamp((p - a).dot(ab) / len_sq, 0.0, 1.0);
  }
  return (p - (a + t * ab)).norm() - radius;
}

namespace {

struct Capsule {
  Eigen::Vector3d a, b;
  double radius;
};

constexpr double kNoHit = std::numeric_limits<double>::infinity();

// Entry parameter of the ray origin + t*dir into the solid sphere, or kNoHit.
double ray_sphere_entry(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                        const Eigen::Vector3d& center, double radius) {
  const Eigen::Vector3d m = origin - center;
  const double a = dir.squaredNorm();
  const double b = 2.0 * m.dot(dir);
  const double c = m.squaredNorm() - radius * radius;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return kNoHit;
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  return t > 0.0 ? t : kNoHit;
}

// First surface crossing of the capsule: minimum over the two cap spheres and
// the cylinder side wall restricted to the segment band. Assumes the origin is
// outside the capsule.
double ray_capsule_entry(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir,
                         const Capsule& cap) {
  double best = std::min(ray_sphere_entry(origin, dir, cap.a, cap.radius),
                         ray_sphere_entry(origin, dir, cap.b, cap.radius));
  const Eigen::Vector3d ab = cap.b - cap.a;
  const double len = ab.norm();
  if (len > 0.0) {
    const Eigen::Vector3d axis = ab / len;
    const Eigen::Vector3d m = origin - cap.a;
    const Eigen::Vector3d d_perp = dir - dir.dot(axis) * axis;
    const Eigen::Vector3d m_perp = m - m.dot(axis) * axis;
    const double a = d_perp.squaredNorm();
    if (a > 0.0) {
      const double b = 2.0 * m_perp.dot(d_perp);
      const double c = m_perp.squaredNorm() - cap.radius * cap.radius;
      const double disc = b * b - 4.0 * a * c;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
          if (t <= 0.0 || t >= best) continue;
          const double s = (m + t * dir).dot(axis);
          if (s >= 0.0 && s <= len) best = t;
        }
      }
    }
  }
  return best;
}

std::vector<Capsule> build_capsules(const HandModel& model, const Pose& pose) {
  std::vector<Capsule> caps;
  caps.reserve(model.bones.size());
  for (std::size_t i = 0; i < model.bones.size(); ++i) {
    const Bone& b = model.bones[i];
    const Eigen::Vector3d end = pose.joints[i];
    const Eigen::Vector3d start = b.parent >= 0 ? pose.joints[b.parent] : end;
    caps.push_back({start, end, b.radius});
  }
  return caps;
}

}  // namespace

DepthFrame render_depth(const HandModel& model, const PoseAngles& angles,
                        const CameraIntrinsics& cam) {
  validate(cam);
  const Pose pose = forward_kinematics(model, angles);
  const auto caps = build_capsules(model, pose);
  for (std::size_t i = 0; i < caps.size(); ++i) {
    if (pose.joints[i].z() - caps[i].radius <= 0.0) {
      throw std::domain_error("render_depth: hand must be fully in front of the camera");
    }
  }

  DepthFrame frame;
  frame.depth = Grid<double>(cam.height, cam.width, 0.0);
  frame.valid = Mask(cam.height, cam.width, 0);
  frame.intrinsics = cam;
  const Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      // dir.z == 1, so the ray parameter is the z-depth directly.
      const Eigen::Vector3d dir((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
      double depth = kNoHit;
      for (const Capsule& c : caps) {
        depth = std::min(depth, ray_capsule_entry(origin, dir, c));
      }
      if (depth != kNoHit) {
        frame.depth(y, x) = depth;
        frame.valid(y, x) = 1;
      }
    }
  }
  return frame;
}

PoseAngles sample_pose(const HandModel& model, Rng& rng) {
  PoseAngles pose;
  for (int a = 0; a < 3; ++a) {
    pose.root_translation[a] = rng.uniform(model.translation_lo[a], model.translation_hi[a]);
  }
  pose.angles.resize(model.bones.size());
  for (std::size_t i = 0; i < model.bones.size(); ++i) {
    for (int a = 0; a < 3; ++a) {
      pose.angles[i][a] = rng.uniform(model.bones[i].angle_lo[a], model.bones[i].angle_hi[a]);
    }
  }
  return pose;
}

void validate(const NoiseConfig& nc) {
  if (nc.depth_noise_std < 0.0 || nc.target_noise_std_s < 0.0 || nc.target_noise_std_v < 0.0) {
    throw config_error("noise: standard deviations must be >= 0");
  }
  if (nc.hole_prob < 0.0 || nc.hole_prob > 1.0) {
    throw config_error("noise: hole_prob must be in [0, 1]");
  }
}

DepthFrame corrupt_frame(const DepthFrame& frame, const NoiseConfig& nc) {
  validate(nc);
  DepthFrame out = frame;
  Rng rng(mix_seed(nc.seed, 0xF7A3E));
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    if (!out.valid[i]) continue;
    if (nc.depth_noise_std > 0.0) {
      out.depth[i] += rng.normal(0.0, nc.depth_noise_std);
    }
    const bool hole = nc.hole_prob > 0.0 && rng.uniform() < nc.hole_prob;
    if (hole || !(out.depth[i] > 0.0)) {
      out.depth[i] = 0.0;
      out.valid[i] = 0;
    }
  }
  return out;
}

DenseTargets corrupt_targets(const DenseTargets& targets, const NoiseConfig& nc) {
  validate(nc);
  DenseTargets out = targets;
  Rng rng(mix_seed(nc.seed, 0x7A26B));
  if (nc.target_noise_std_s > 0.0) {
    for (auto& map : out.S) {
      for (auto& v : map.values) {
        v = std::clamp(v + rng.normal(0.0, nc.target_noise_std_s), 0.0, 1.0);
      }
    }
  }
  if (nc.target_noise_std_v > 0.0) {
    for (auto& field : out.V) {
      for (auto& vec : field.vectors) {
        if (vec.isZero()) continue;  // no-estimate pixels stay empty
        vec += Eigen::Vector3d(rng.normal(0.0, nc.target_noise_std_v),
                               rng.normal(0.0, nc.target_noise_std_v),
                               rng.normal(0.0, nc.target_noise_std_v));
        const double norm = vec.norm();
        if (norm > 0.0) {
          vec /= norm;
        } else {
          vec.setZero();
        }
      }
    }
  }
  return out;
}

std::string generate_dataset(const HandModel& model, const CameraIntrinsics& cam,
                             const DatasetParams& params, const std::string& out_dir) {
  validate(model);
  validate(cam);
  if (params.count < 0) throw config_error("generate_dataset: count must be >= 0");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw io_error("cannot create " + out_dir + ": " + ec.message());

  DatasetManifest manifest;
  manifest.model = model.name;
  manifest.joints = model.joint_count();
  manifest.camera = cam;
  manifest.seed = params.seed;
  manifest.theta = params.theta;
  manifest.tau = params.tau;

  char name[64];
  for (int i = 0; i < params.count; ++i) {
    const std::uint64_t frame_seed = params.seed ^ static_cast<std::uint64_t>(i);
    Rng rng(frame_seed);
    const PoseAngles angles = sample_pose(model, rng);
    const Pose pose = forward_kinematics(model, angles);
    DepthFrame frame = render_depth(model, angles, cam);
    if (params.frame_noise.depth_noise_std > 0.0 || params.frame_noise.hole_prob > 0.0) {
      NoiseConfig nc = params.frame_noise;
      nc.seed = mix_seed(frame_seed, 0xD5);
      frame = corrupt_frame(frame, nc);
    }
    // Quantize to the on-disk millimeter grid before encoding so stored
    // targets decode the stored frame exactly.
    frame = quantize_depth(frame);
    const DenseTargets targets = encode_targets(frame, pose, params.theta, params.tau);

    DatasetSample sample;
    std::snprintf(name, sizeof(name), "frame_%04d.pgm", i);
    sample.frame = name;
    std::snprintf(name, sizeof(name), "pose_%04d.json", i);
    sample.pose = name;
    std::snprintf(name, sizeof(name), "targets_%04d.dvt", i);
    sample.targets = name;

    write_depth_pgm((fs::path(out_dir) / sample.frame).string(), frame);
    write_pose_json((fs::path(out_dir) / sample.pose).string(), pose);
    write_targets((fs::path(out_dir) / sample.targets).string(), targets);
    manifest.samples.push_back(std::move(sample));
  }

  const std::string manifest_path = (fs::path(out_dir) / "manifest.json").string();
  write_manifest(manifest_path, manifest);
  return manifest_path;
}

}  // namespace handvote
