#include "handvote/io.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "handvote/errors.hpp"

namespace handvote {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (in.bad()) throw io_error("read failed: " + path);
  return bytes;
}

void write_file_bytes(const std::string& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw io_error("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

void write_text_file(const std::string& path, const std::string& text) {
  write_file_bytes(path, text.data(), text.size());
}

void append_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 24));
}

void append_f32_le(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits = 0;
  std::memcpy(&bits, &v, sizeof(bits));
  append_u32_le(out, bits);
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float read_f32_le(const std::uint8_t* p) {
  const std::uint32_t bits = read_u32_le(p);
  float v = 0.0f;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::string sidecar_path(const std::string& path) {
  return fs::path(path).replace_extension(".json").string();
}

namespace {

json parse_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw format_error(path + ": " + e.what());
  }
}

double require_number(const json& j, const std::string& key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number()) {
    throw format_error(path + ": missing numeric field '" + key + "'");
  }
  return j[key].get<double>();
}

}  // namespace

void write_depth_pgm(const std::string& path, const DepthFrame& frame) {
  const int h = frame.depth.height();
  const int w = frame.depth.width();
  std::string header = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n65535\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.reserve(bytes.size() + static_cast<std::size_t>(h) * w * 2);
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    long q = frame.valid[i] ? std::lround(frame.depth[i]) : 0;
    if (q < 0) q = 0;
    if (q > 65535) q = 65535;
    bytes.push_back(static_cast<std::uint8_t>(q >> 8));  // big-endian
    bytes.push_back(static_cast<std::uint8_t>(q & 0xff));
  }
  write_file_bytes(path, bytes.data(), bytes.size());

  const CameraIntrinsics& cam = frame.intrinsics;
  json side;
  side["fx"] = cam.fx;
  side["fy"] = cam.fy;
  side["cx"] = cam.cx;
  side["cy"] = cam.cy;
  side["width"] = cam.width;
  side["height"] = cam.height;
  write_text_file(sidecar_path(path), side.dump(2) + "\n");
}

DepthFrame read_depth_pgm(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  std::size_t pos = 0;
  const auto skip_space = [&]() {
    while (pos < bytes.size()) {
      if (std::isspace(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  const auto next_token = [&]() {
    skip_space();
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw format_error(path + ": truncated header at offset " +
                                         std::to_string(start));
    return std::string(bytes.begin() + start, bytes.begin() + pos);
  };

  if (next_token() != "P5") throw format_error(path + ": not a binary PGM (bad magic at offset 0)");
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(next_token());
    h = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::exception&) {
    throw format_error(path + ": malformed PGM header");
  }
  if (w <= 0 || h <= 0) throw format_error(path + ": bad image size");
  if (maxval != 65535) throw format_error(path + ": expected maxval 65535, got " +
                                          std::to_string(maxval));
  ++pos;  // single whitespace after maxval
  const std::size_t expected = static_cast<std::size_t>(w) * h * 2;
  if (bytes.size() - pos != expected) {
    throw format_error(path + ": payload size " + std::to_string(bytes.size() - pos) +
                       " != expected " + std::to_string(expected) + " at offset " +
                       std::to_string(pos));
  }

  DepthFrame frame;
  frame.depth = Grid<double>(h, w, 0.0);
  frame.valid = Mask(h, w, 0);
  for (std::size_t i = 0; i < static_cast<std::size_t>(h) * w; ++i) {
    const unsigned value = (static_cast<unsigned>(bytes[pos + 2 * i]) << 8) |
                           static_cast<unsigned>(bytes[pos + 2 * i + 1]);
    frame.depth[i] = static_cast<double>(value);
    frame.valid[i] = value > 0 ? 1 : 0;
  }

  const std::string side = sidecar_path(path);
  const json j = parse_json_file(side);
  frame.intrinsics.fx = require_number(j, "fx", side);
  frame.intrinsics.fy = require_number(j, "fy", side);
  frame.intrinsics.cx = require_number(j, "cx", side);
  frame.intrinsics.cy = require_number(j, "cy", side);
  frame.intrinsics.width = static_cast<int>(require_number(j, "width", side));
  frame.intrinsics.height = static_cast<int>(require_number(j, "height", side));
  if (frame.intrinsics.width != w || frame.intrinsics.height != h) {
    throw format_error(side + ": intrinsics size disagrees with " + path);
  }
  validate(frame.intrinsics);
  return frame;
}

void write_pose_json(const std::string& path, const Pose& pose,
                     const std::vector<std::uint8_t>* status) {
  json j;
  j["joint_names"] = pose.joint_names;
  json joints = json::array();
  for (const auto& p : pose.joints) {
    joints.push_back({p.x(), p.y(), p.z()});
  }
  j["joints"] = joints;
  if (status) {
    json st = json::array();
    for (auto f : *status) st.push_back(f ? "ok" : "no_evidence");
    j["status"] = st;
  }
  write_text_file(path, j.dump(2) + "\n");
}

Pose read_pose_json(const std::string& path, std::vector<std::uint8_t>* status) {
  const json j = parse_json_file(path);
  if (!j.contains("joints") || !j["joints"].is_array()) {
    throw format_error(path + ": missing 'joints' array");
  }
  Pose pose;
  for (const auto& item : j["joints"]) {
    if (!item.is_array() || item.size() != 3) {
      throw format_error(path + ": joints must be [x, y, z] triples");
    }
    pose.joints.emplace_back(item[0].get<double>(), item[1].get<double>(),
                             item[2].get<double>());
  }
  if (j.contains("joint_names")) {
    pose.joint_names = j["joint_names"].get<std::vector<std::string>>();
    if (pose.joint_names.size() != pose.joints.size()) {
      throw format_error(path + ": joint_names length differs from joints");
    }
  }
  if (status) {
    status->assign(pose.joints.size(), 1);
    if (j.contains("status")) {
      const auto& st = j["status"];
      if (!st.is_array() || st.size() != pose.joints.size()) {
        throw format_error(path + ": status length differs from joints");
      }
      for (std::size_t i = 0; i < st.size(); ++i) {
        (*status)[i] = st[i].get<std::string>() == "ok" ? 1 : 0;
      }
    }
  }
  validate(pose);
  return pose;
}

void write_targets(const std::string& path, const DenseTargets& targets) {
  const int joints = targets.joint_count();
  if (joints == 0) throw std::invalid_argument("write_targets: empty bundle");
  const int h = targets.S[0].values.height();
  const int w = targets.S[0].values.width();

  std::vector<std::uint8_t> bytes;
  bytes.reserve(24 + static_cast<std::size_t>(joints) * h * w * 5 * 4);
  for (char c : {'D', 'V', 'T', '1'}) bytes.push_back(static_cast<std::uint8_t>(c));
  append_u32_le(bytes, 1);  // version
  append_u32_le(bytes, static_cast<std::uint32_t>(h));
  append_u32_le(bytes, static_cast<std::uint32_t>(w));
  append_u32_le(bytes, static_cast<std::uint32_t>(joints));
  append_u32_le(bytes, 0);  // flags
  for (int j = 0; j < joints; ++j) {
    for (std::size_t i = 0; i < targets.R[j].values.size(); ++i) {
      append_f32_le(bytes, static_cast<float>(targets.R[j].values[i]));
    }
  }
  for (int j = 0; j < joints; ++j) {
    for (std::size_t i = 0; i < targets.S[j].values.size(); ++i) {
      append_f32_le(bytes, static_cast<float>(targets.S[j].values[i]));
    }
  }
  for (int j = 0; j < joints; ++j) {
    for (std::size_t i = 0; i < targets.V[j].vectors.size(); ++i) {
      const Eigen::Vector3d& v = targets.V[j].vectors[i];
      append_f32_le(bytes, static_cast<float>(v.x()));
      append_f32_le(bytes, static_cast<float>(v.y()));
      append_f32_le(bytes, static_cast<float>(v.z()));
    }
  }
  write_file_bytes(path, bytes.data(), bytes.size());

  json side;
  side["theta_mm"] = targets.theta;
  side["tau_px"] = targets.tau;
  write_text_file(sidecar_path(path), side.dump(2) + "\n");
}

DenseTargets read_targets(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 24) {
    throw format_error(path + ": truncated header (" + std::to_string(bytes.size()) +
                       " bytes) at offset 0");
  }
  if (std::memcmp(bytes.data(), "DVT1", 4) != 0) {
    throw format_error(path + ": bad magic at offset 0");
  }
  const std::uint32_t version = read_u32_le(bytes.data() + 4);
  if (version != 1) {
    throw format_error(path + ": unsupported version " + std::to_string(version) +
                       " at offset 4");
  }
  const std::uint32_t h = read_u32_le(bytes.data() + 8);
  const std::uint32_t w = read_u32_le(bytes.data() + 12);
  const std::uint32_t joints = read_u32_le(bytes.data() + 16);
  if (h == 0 || w == 0 || joints == 0 || h > 65536 || w > 65536 || joints > 4096) {
    throw format_error(path + ": implausible dimensions at offset 8");
  }
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const std::size_t expected = 24 + plane * joints * 5 * 4;
  if (bytes.size() != expected) {
    throw format_error(path + ": payload size " + std::to_string(bytes.size()) +
                       " != expected " + std::to_string(expected));
  }

  DenseTargets t;
  t.R.resize(joints);
  t.S.resize(joints);
  t.V.resize(joints);
  std::size_t off = 24;
  for (std::uint32_t j = 0; j < joints; ++j) {
    t.R[j].values = Grid<double>(h, w, 0.0);
    for (std::size_t i = 0; i < plane; ++i, off += 4) {
      t.R[j].values[i] = read_f32_le(bytes.data() + off);
    }
  }
  for (std::uint32_t j = 0; j < joints; ++j) {
    t.S[j].values = Grid<double>(h, w, 0.0);
    for (std::size_t i = 0; i < plane; ++i, off += 4) {
      t.S[j].values[i] = read_f32_le(bytes.data() + off);
    }
  }
  for (std::uint32_t j = 0; j < joints; ++j) {
    t.V[j].vectors = Grid<Eigen::Vector3d>(h, w, Eigen::Vector3d::Zero());
    for (std::size_t i = 0; i < plane; ++i, off += 12) {
      t.V[j].vectors[i] = Eigen::Vector3d(read_f32_le(bytes.data() + off),
                                          read_f32_le(bytes.data() + off + 4),
                                          read_f32_le(bytes.data() + off + 8));
    }
  }

  const std::string side = sidecar_path(path);
  const json j = parse_json_file(side);
  t.theta = require_number(j, "theta_mm", side);
  t.tau = require_number(j, "tau_px", side);
  if (!(t.theta > 0.0) || !(t.tau > 0.0)) {
    throw format_error(side + ": theta_mm and tau_px must be positive");
  }
  return t;
}

std::string DatasetManifest::resolve(const std::string& relative) const {
  if (base_dir.empty()) return relative;
  return (fs::path(base_dir) / relative).string();
}

void write_manifest(const std::string& path, const DatasetManifest& manifest) {
  json j;
  j["model"] = manifest.model;
  j["joints"] = manifest.joints;
  j["camera"] = {{"fx", manifest.camera.fx},   {"fy", manifest.camera.fy},
                 {"cx", manifest.camera.cx},   {"cy", manifest.camera.cy},
                 {"width", manifest.camera.width}, {"height", manifest.camera.height}};
  j["seed"] = manifest.seed;
  j["theta_mm"] = manifest.theta;
  j["tau_px"] = manifest.tau;
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    samples.push_back({{"frame", s.frame}, {"pose", s.pose}, {"targets", s.targets}});
  }
  j["samples"] = samples;
  write_text_file(path, j.dump(2) + "\n");
}

DatasetManifest read_manifest(const std::string& path) {
  const json j = parse_json_file(path);
  DatasetManifest m;
  if (!j.contains("samples") || !j["samples"].is_array()) {
    throw format_error(path + ": missing 'samples' array");
  }
  m.model = j.value("model", std::string());
  m.joints = static_cast<int>(require_number(j, "joints", path));
  const auto& cam = j.at("camera");
  m.camera.fx = require_number(cam, "fx", path);
  m.camera.fy = require_number(cam, "fy", path);
  m.camera.cx = require_number(cam, "cx", path);
  m.camera.cy = require_number(cam, "cy", path);
  m.camera.width = static_cast<int>(require_number(cam, "width", path));
  m.camera.height = static_cast<int>(require_number(cam, "height", path));
  m.seed = j.value("seed", 0ULL);
  m.theta = require_number(j, "theta_mm", path);
  m.tau = require_number(j, "tau_px", path);
  for (const auto& s : j["samples"]) {
    DatasetSample sample;
    sample.frame = s.at("frame").get<std::string>();
    sample.pose = s.at("pose").get<std::string>();
    sample.targets = s.at("targets").get<std::string>();
    m.samples.push_back(std::move(sample));
  }
  m.base_dir = fs::path(path).parent_path().string();
  return m;
}

}  // namespace handvote
