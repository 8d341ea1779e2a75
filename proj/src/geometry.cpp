#include "handvote/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace handvote {

void validate(const CameraIntrinsics& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) {
    throw std::invalid_argument("camera: focal lengths must be positive");
  }
  if (cam.width <= 0 || cam.height <= 0) {
    throw std::invalid_argument("camera: image size must be positive");
  }
  if (!(cam.cx >= 0.0 && cam.cx < cam.width) || !(cam.cy >= 0.0 && cam.cy < cam.height)) {
    throw std::invalid_argument("camera: principal point must lie inside the image");
  }
}

void validate(const DepthFrame& frame) {
  validate(frame.intrinsics);
  if (!frame.depth.same_shape(frame.intrinsics.height, frame.intrinsics.width) ||
      !frame.valid.same_shape(frame.depth)) {
    throw std::invalid_argument("depth frame: grid dimensions must match intrinsics");
  }
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    const bool ok = frame.valid[i] != 0;
    if (ok && !(frame.depth[i] > 0.0)) {
      throw std::invalid_argument("depth frame: valid pixel with non-positive depth");
    }
    if (!ok && frame.depth[i] != 0.0) {
      throw std::invalid_argument("depth frame: invalid pixel must store depth 0");
    }
  }
}

void validate(const Pose& pose) {
  if (pose.joints.empty()) {
    throw std::invalid_argument("pose: at least one joint required");
  }
  if (!pose.joint_names.empty() && pose.joint_names.size() != pose.joints.size()) {
    throw std::invalid_argument("pose: joint_names length must match joints");
  }
  for (const auto& p : pose.joints) {
    if (!p.allFinite()) {
      throw std::invalid_argument("pose: joint coordinates must be finite");
    }
  }
}

Eigen::Vector2d project(const Eigen::Vector3d& point, const CameraIntrinsics& cam) {
  if (!(point.z() > 0.0)) {
    throw std::domain_error("project: point behind camera");
  }
  return {cam.fx * point.x() / point.z() + cam.cx, cam.fy * point.y() / point.z() + cam.cy};
}

Eigen::Vector3d unproject(double u, double v, double depth_mm, const CameraIntrinsics& cam) {
  if (!(depth_mm > 0.0)) {
    throw std::domain_error("unproject: depth must be positive");
  }
  return {(u - cam.cx) * depth_mm / cam.fx, (v - cam.cy) * depth_mm / cam.fy, depth_mm};
}

PointMap depth_to_pointmap(const DepthFrame& frame) {
  const int h = frame.depth.height();
  const int w = frame.depth.width();
  PointMap pm;
  pm.points = Grid<Eigen::Vector3d>(h, w, Eigen::Vector3d::Zero());
  pm.valid = Mask(h, w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!frame.valid(y, x)) continue;
      pm.points(y, x) = unproject(x, y, frame.depth(y, x), frame.intrinsics);
      pm.valid(y, x) = 1;
    }
  }
  return pm;
}

DepthFrame crop_resize(const DepthFrame& frame, const Eigen::Vector2d& center_px,
                       double side_px, int out_size) {
  if (!(side_px > 0.0) || out_size <= 0) {
    throw std::invalid_argument("crop_resize: window side and output size must be positive");
  }
  const CameraIntrinsics& cam = frame.intrinsics;
  const double scale = static_cast<double>(out_size) / side_px;
  const double u0 = center_px.x() - side_px / 2.0;
  const double v0 = center_px.y() - side_px / 2.0;
  if (u0 >= cam.width || v0 >= cam.height || u0 + side_px <= 0.0 || v0 + side_px <= 0.0) {
    throw std::domain_error("crop_resize: window lies outside the image");
  }

  DepthFrame out;
  out.depth = Grid<double>(out_size, out_size, 0.0);
  out.valid = Mask(out_size, out_size, 0);
  out.intrinsics = {cam.fx * scale, cam.fy * scale, (cam.cx - u0) * scale, (cam.cy - v0) * scale,
                    out_size, out_size};
  for (int y = 0; y < out_size; ++y) {
    const int sy = static_cast<int>(std::lround(v0 + y / scale));
    for (int x = 0; x < out_size; ++x) {
      const int sx = static_cast<int>(std::lround(u0 + x / scale));
      if (!frame.depth.contains(sy, sx) || !frame.valid(sy, sx)) continue;
      out.depth(y, x) = frame.depth(sy, sx);
      out.valid(y, x) = 1;
    }
  }
  return out;
}

DepthFrame quantize_depth(const DepthFrame& frame) {
  DepthFrame out = frame;
  for (std::size_t i = 0; i < out.depth.size(); ++i) {
    long q = out.valid[i] ? std::lround(out.depth[i]) : 0;
    if (q < 0) q = 0;
    if (q > 65535) q = 65535;
    out.depth[i] = static_cast<double>(q);
    out.valid[i] = q > 0 ? 1 : 0;
  }
  return out;
}

}  // namespace handvote
