#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "handvote/codec.hpp"
#include "handvote/geometry.hpp"

namespace handvote {

// Depth frames travel as binary PGM (P5, maxval 65535, big-endian samples,
// millimeter units, 0 = invalid) with a JSON intrinsics sidecar at
// <name>.json next to the image.
void write_depth_pgm(const std::string& path, const DepthFrame& frame);
DepthFrame read_depth_pgm(const std::string& path);

std::string sidecar_path(const std::string& path);

// Pose files: {"joint_names": [...], "joints": [[x,y,z], ...]} in mm, plus an
// optional "status" array ("ok" / "no_evidence") on estimator output.
void write_pose_json(const std::string& path, const Pose& pose,
                     const std::vector<std::uint8_t>* status = nullptr);
Pose read_pose_json(const std::string& path, std::vector<std::uint8_t>* status = nullptr);

// Dense target bundles: 24-byte header (magic "DVT1", version, H, W, J,
// flags), then float32 planes R[J], S[J], V[J*3], little-endian; theta/tau
// live in the JSON sidecar.
void write_targets(const std::string& path, const DenseTargets& targets);
DenseTargets read_targets(const std::string& path);

struct DatasetSample {
  std::string frame;
  std::string pose;
  std::string targets;
};

struct DatasetManifest {
  std::string model;
  int joints = 0;
  CameraIntrinsics camera;
  std::uint64_t seed = 0;
  double theta = 0.0;
  double tau = 0.0;
  std::vector<DatasetSample> samples;
  std::string base_dir;  // directory of the manifest file; set on read

  std::string resolve(const std::string& relative) const;
};

void write_manifest(const std::string& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::string& path);

// Raw helpers shared by the binary formats.
std::vector<std::uint8_t> read_file_bytes(const std::string& path);
void write_file_bytes(const std::string& path, const void* data, std::size_t size);
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v);
void append_f32_le(std::vector<std::uint8_t>& out, float v);
std::uint32_t read_u32_le(const std::uint8_t* p);
float read_f32_le(const std::uint8_t* p);

}  // namespace handvote
