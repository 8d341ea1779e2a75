#pragma once

#include <string>
#include <utility>
#include <vector>

#include "handvote/aggregator.hpp"
#include "handvote/geometry.hpp"
#include "handvote/synth.hpp"

namespace handvote {

struct EvalResult {
  double mean_error_mm = 0.0;
  std::vector<double> per_joint_error_mm;
  std::vector<std::pair<double, double>> success_curve;  // (threshold mm, fraction)
  int frame_count = 0;
  int failed_frames = 0;  // frames with at least one no-evidence joint
};

/// Arithmetic mean of Euclidean joint errors over all joints and frames.
double mean_joint_error(const std::vector<Pose>& preds, const std::vector<Pose>& gts);

/// Per threshold, the fraction of frames whose maximum joint error is below
/// it. Thresholds must be sorted ascending; the curve is non-decreasing.
std::vector<std::pair<double, double>> success_rate_curve(const std::vector<Pose>& preds,
                                                          const std::vector<Pose>& gts,
                                                          const std::vector<double>& thresholds);

/// Full evaluation honoring estimator abstention: frames with any no-evidence
/// joint count as failures at every threshold and are excluded from the mean.
EvalResult evaluate(const std::vector<PoseEstimate>& preds, const std::vector<Pose>& gts,
                    const std::vector<double>& thresholds);

std::vector<double> default_thresholds();  // 0..80 mm in 2 mm steps

struct MethodResult {
  std::string label;
  EvalResult result;
};

/// Emits metrics.csv (config,mean_error_mm,frames,failed) and
/// success_curve.svg (one labeled polyline per method). Byte-deterministic.
void write_report(const std::vector<MethodResult>& results, const std::string& out_dir);

struct SweepSample {
  DepthFrame frame;
  DenseTargets targets;
  Pose gt;
};

struct SweepGrid {
  std::vector<int> ks;
  std::vector<double> sigmas;
  std::vector<Weighting> weightings;
};

/// Mean error per (k, sigma, weighting) cell over the given samples, which
/// are typically noise-corrupted targets.
std::vector<MethodResult> sweep(const std::vector<SweepSample>& samples,
                                const AggregatorConfig& base, const SweepGrid& grid,
                                const std::vector<double>& thresholds);

}  // namespace handvote
