#pragma once

#include <Eigen/Core>
#include <vector>

#include "handvote/geometry.hpp"
#include "handvote/grid.hpp"

namespace handvote {

/// Per-joint proximity score in [0, 1]: 1 - dist3d/theta inside the candidate
/// ball, 0 outside it and on invalid pixels.
struct HeatMap3D {
  Grid<double> values;
};

/// Per-joint unit direction from the pixel's surface point toward the joint;
/// exactly zero outside the candidate ball and on invalid pixels.
struct VectorField {
  Grid<Eigen::Vector3d> vectors;
};

/// Per-joint 2D proximity score in [0, 1]: 1 - dist2d/tau inside the candidate
/// disk around the joint's projection, independent of depth validity.
struct HeatMap2D {
  Grid<double> values;
};

/// Dense per-pixel encoding of a pose: one (R, S, V) triple per joint on a
/// shared grid. theta is the 3D ball radius (mm), tau the 2D disk radius (px).
struct DenseTargets {
  std::vector<HeatMap2D> R;
  std::vector<HeatMap3D> S;
  std::vector<VectorField> V;
  double theta = 0.0;
  double tau = 0.0;

  int joint_count() const { return static_cast<int>(S.size()); }
};

/// Raw masked 3D offset encoding (no heat-map/direction split). Mask is true
/// exactly where the pixel is valid and within theta of the joint.
struct OffsetField {
  Grid<Eigen::Vector3d> offsets;
  Mask mask;
};

/// Per-pixel recovered joint positions (vote targets) with validity.
struct CandidateGrid {
  Grid<Eigen::Vector3d> points;
  Mask valid;
};

std::vector<HeatMap3D> encode_heatmap3d(const PointMap& pm, const Pose& pose, double theta_mm);
std::vector<VectorField> encode_vectorfield(const PointMap& pm, const Pose& pose, double theta_mm);
std::vector<HeatMap2D> encode_heatmap2d(const DepthFrame& frame, const Pose& pose, double tau_px);
DenseTargets encode_targets(const DepthFrame& frame, const Pose& pose, double theta_mm,
                            double tau_px);
std::vector<OffsetField> encode_offsets_masked(const PointMap& pm, const Pose& pose,
                                               double theta_mm);

/// Invert the (S, V) encoding pixelwise: candidate = point + theta*(1 - S)*V.
/// Candidates are invalid where the pixel is invalid or S is exactly 0.
CandidateGrid recover_candidates(const PointMap& pm, const HeatMap3D& S, const VectorField& V,
                                 double theta_mm);

}  // namespace handvote
