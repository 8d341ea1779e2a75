#pragma once

#include <string>
#include <vector>

#include "handvote/aggregator.hpp"
#include "handvote/geometry.hpp"
#include "handvote/learner.hpp"
#include "handvote/synth.hpp"

namespace handvote {

/// Run configuration with strict schema validation: unknown keys are rejected,
/// every section is optional and falls back to the documented defaults.
struct RunConfig {
  CameraIntrinsics camera{200.0, 200.0, 64.0, 64.0, 128, 128};

  struct Codec {
    double theta_mm = 80.0;
    double tau_px = 12.0;
  } codec;

  AggregatorConfig aggregator;  // k 5, sigma 40 mm, weighted

  TrainConfig train;  // lr 0.001, beta1 0.5, batch 8, 2 stacks

  struct Synth {
    std::string model = "hand16";
    NoiseConfig noise;
  } synth;

  struct Eval {
    std::vector<double> thresholds;  // 0..80 mm, 2 mm steps
  } eval;
};

RunConfig default_config();
RunConfig parse_config_text(const std::string& text, const std::string& origin);
RunConfig load_config(const std::string& path);
std::string config_to_json_text(const RunConfig& cfg);

}  // namespace handvote
