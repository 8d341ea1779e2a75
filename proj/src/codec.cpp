#include "handvote/codec.hpp"

#include <cmath>
#include <stdexcept>

namespace handvote {

namespace {

void require_positive_radius(double r, const char* what) {
  if (!(r > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": radius must be positive");
  }
}

}  // namespace

std::vector<HeatMap3D> encode_heatmap3d(const PointMap& pm, const Pose& pose, double theta_mm) {
  require_positive_radius(theta_mm, "encode_heatmap3d");
  const int h = pm.points.height();
  const int w = pm.points.width();
  std::vector<HeatMap3D> maps(pose.joints.size());
  for (std::size_t j = 0; j < pose.joints.size(); ++j) {
    maps[j].values = Grid<double>(h, w, 0.0);
    const Eigen::Vector3d& joint = pose.joints[j];
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
      if (!pm.valid[i]) continue;
      const double dist = (pm.points[i] - joint).norm();
      if (dist < theta_mm) {
        maps[j].values[i] = 1.0 - dist / theta_mm;
      }
    }
  }
  return maps;
}

std::vector<VectorField> encode_vectorfield(const PointMap& pm, const Pose& pose, double theta_mm) {
  require_positive_radius(theta_mm, "encode_vectorfield");
  const int h = pm.points.height();
  const int w = pm.points.width();
  std::vector<VectorField> fields(pose.joints.size());
  for (std::size_t j = 0; j < pose.joints.size(); ++j) {
    fields[j].vectors = Grid<Eigen::Vector3d>(h, w, Eigen::Vector3d::Zero());
    const Eigen::Vector3d& joint = pose.joints[j];
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
      if (!pm.valid[i]) continue;
      const Eigen::Vector3d offset = joint - pm.points[i];
      const double dist = offset.norm();
      // dist == 0 stays at the zero vector; the candidate there is already exact.
      if (dist > 0.0 && dist < theta_mm) {
        fields[j].vectors[i] = offset / dist;
      }
    }
  }
  return fields;
}

std::vector<HeatMap2D> encode_heatmap2d(const DepthFrame& frame, const Pose& pose, double tau_px) {
  require_positive_radius(tau_px, "encode_heatmap2d");
  const int h = frame.depth.height();
  const int w = frame.depth.width();
  std::vector<HeatMap2D> maps(pose.joints.size());
  for (std::size_t j = 0; j < pose.joints.size(); ++j) {
    maps[j].values = Grid<double>(h, w, 0.0);
    const Eigen::Vector2d joint_px = project(pose.joints[j], frame.intrinsics);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double dist = (Eigen::Vector2d(x, y) - joint_px).norm();
        if (dist < tau_px) {
          maps[j].values(y, x) = 1.0 - dist / tau_px;
        }
      }
    }
  }
  return maps;
}

DenseTargets encode_targets(const DepthFrame& frame, const Pose& pose, double theta_mm,
                            double tau_px) {
  const PointMap pm = depth_to_pointmap(frame);
  DenseTargets t;
  t.R = encode_heatmap2d(frame, pose, tau_px);
  t.S = encode_heatmap3d(pm, pose, theta_mm);
  t.V = encode_vectorfield(pm, pose, theta_mm);
  t.theta = theta_mm;
  t.tau = tau_px;
  return t;
}

std::vector<OffsetField> encode_offsets_masked(const PointMap& pm, const Pose& pose,
                                               double theta_mm) {
  require_positive_radius(theta_mm, "encode_offsets_masked");
  const int h = pm.points.height();
  const int w = pm.points.width();
  std::vector<OffsetField> fields(pose.joints.size());
  for (std::size_t j = 0; j < pose.joints.size(); ++j) {
    fields[j].offsets = Grid<Eigen::Vector3d>(h, w, Eigen::Vector3d::Zero());
    fields[j].mask = Mask(h, w, 0);
    const Eigen::Vector3d& joint = pose.joints[j];
    for (std::size_t i = 0; i < pm.points.size(); ++i) {
      if (!pm.valid[i]) continue;
      const Eigen::Vector3d offset = joint - pm.points[i];
      if (offset.norm() < theta_mm) {
        fields[j].offsets[i] = offset;
        fields[j].mask[i] = 1;
      }
    }
  }
  return fields;
}

CandidateGrid recover_candidates(const PointMap& pm, const HeatMap3D& S, const VectorField& V,
                                 double theta_mm) {
  if (!pm.points.same_shape(S.values) || !pm.points.same_shape(V.vectors)) {
    throw std::invalid_argument("recover_candidates: grid dimensions differ");
  }
  const int h = pm.points.height();
  const int w = pm.points.width();
  CandidateGrid out;
  out.points = Grid<Eigen::Vector3d>(h, w, Eigen::Vector3d::Zero());
  out.valid = Mask(h, w, 0);
  for (std::size_t i = 0; i < pm.points.size(); ++i) {
    if (!pm.valid[i] || S.values[i] == 0.0) continue;
    out.points[i] = pm.points[i] + theta_mm * (1.0 - S.values[i]) * V.vectors[i];
    out.valid[i] = 1;
  }
  return out;
}

}  // namespace handvote
