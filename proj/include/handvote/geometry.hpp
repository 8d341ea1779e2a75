#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "handvote/grid.hpp"

namespace handvote {

/// Pinhole camera. Convention: right-handed, +z into the scene, pixel (0, 0)
/// at the top-left, continuous pixel centers at integer coordinates, image
/// center at (width/2, height/2).
struct CameraIntrinsics {
  double fx = 0.0;  // focal lengths, px
  double fy = 0.0;
  double cx = 0.0;  // principal point, px
  double cy = 0.0;
  int width = 0;
  int height = 0;
};

/// Throws std::invalid_argument unless fx,fy > 0 and the principal point is inside the image.
void validate(const CameraIntrinsics& cam);

/// Depth grid in millimeters. Invalid pixels store depth 0 and valid = 0.
struct DepthFrame {
  Grid<double> depth;
  Mask valid;
  CameraIntrinsics intrinsics;
};

void validate(const DepthFrame& frame);

/// Per-pixel camera-space coordinates (mm). Valid pixels satisfy
/// point.z() == source depth exactly; invalid pixels carry the zero point.
struct PointMap {
  Grid<Eigen::Vector3d> points;
  Mask valid;
};

/// Ordered joint positions in camera space (mm).
struct Pose {
  std::vector<Eigen::Vector3d> joints;
  std::vector<std::string> joint_names;

  int joint_count() const { return static_cast<int>(joints.size()); }
};

void validate(const Pose& pose);

/// Perspective projection to continuous pixel coordinates. Throws
/// std::domain_error if point.z() <= 0.
Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& cam);

/// Inverse projection at the given depth (mm). The returned z equals depth
/// exactly. Throws std::domain_error if depth <= 0.
Eigen::Vector3d unproject(double u, double v, double depth_mm, const CameraIntrinsics& cam);

PointMap depth_to_pointmap(const DepthFrame& frame);

/// Extract the square window [center - side/2, center + side/2] and resample
/// it to out_size×out_size with nearest-neighbor lookup, composing the crop
/// translation and scale into the output intrinsics. Depth values are copied,
/// never interpolated, so no surface points are fabricated across edges.
/// Throws std::domain_error when the window misses the image entirely.
DepthFrame crop_resize(const DepthFrame& frame, const Eigen::Vector2d& center_px,
                       double side_px, int out_size);

/// Round depth to the nearest millimeter and clamp to the 16-bit range used
/// by the on-disk format; values that round to 0 become invalid.
DepthFrame quantize_depth(const DepthFrame& frame);

}  // namespace handvote
