#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "handvote/codec.hpp"
#include "handvote/errors.hpp"
#include "handvote/geometry.hpp"

namespace handvote {

enum class Weighting {
  kWeighted,    // 2D-consensus: reproject each candidate and sample R bilinearly
  kUnweighted,  // (1 + R) * S read at the candidate's own source pixel
  kUniform,     // all candidates weigh the same
};

std::string to_string(Weighting w);
Weighting weighting_from_string(const std::string& name);

struct AggregatorConfig {
  double theta = 80.0;     // candidate ball radius, mm
  double tau = 12.0;       // candidate disk radius, px
  int k_candidates = 5;    // votes kept per joint
  double sigma = 40.0;     // mean-shift kernel width, mm
  int max_iters = 30;
  double stop_eps = 1e-3;  // displacement threshold, mm
  Weighting weighting = Weighting::kWeighted;
};

void validate(const AggregatorConfig& cfg);

struct CandidateSet {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;
  std::vector<int> source_pixels;  // row-major indices into the grid

  std::size_t size() const { return points.size(); }
};

/// Keep the k candidates with the largest S, ties broken by row-major pixel
/// order. Returns fewer than k when fewer valid candidates exist; throws
/// no_evidence_error when there are none. Weights are initialized to 1.
CandidateSet select_candidates(const HeatMap3D& S, const CandidateGrid& candidates, int k);

/// Weigh candidates by the 2D heat map sampled bilinearly at their projections
/// (zero outside the grid). Candidates behind the camera are dropped. If every
/// weight comes back 0, falls back to uniform weights.
void weights_weighted(CandidateSet& cs, const HeatMap2D& R, const CameraIntrinsics& cam);

/// Projection-free weighting (1 + R) * S, both read at the candidate's source
/// pixel, clamped at zero.
void weights_unweighted(CandidateSet& cs, const HeatMap2D& R, const HeatMap3D& S);

/// Gaussian-kernel weighted mean shift from the weighted mean of the
/// candidates. Iterates until the displacement drops below stop_eps or
/// max_iters is reached. Every iterate is a convex combination of the
/// candidates. Throws no_evidence_error on an empty or zero-weight set.
/// When trace is non-null it receives the initialization and every iterate.
Eigen::Vector3d mean_shift(const CandidateSet& cs, double sigma, int max_iters, double stop_eps,
                           std::vector<Eigen::Vector3d>* trace = nullptr);

/// Full single-joint pipeline: recover candidates, select the top k, weigh
/// them per cfg.weighting, and run mean shift. Throws no_evidence_error when
/// the joint has no votes.
Eigen::Vector3d estimate_joint(const PointMap& pm, const HeatMap2D& R, const HeatMap3D& S,
                               const VectorField& V, const CameraIntrinsics& cam,
                               const AggregatorConfig& cfg);

struct PoseEstimate {
  Pose pose;
  std::vector<std::uint8_t> ok;  // per joint; failed joints hold a zero position

  bool all_ok() const;
};

/// Per-joint estimation over a full target bundle; joints without evidence are
/// flagged rather than fabricated. Candidate recovery uses targets.theta.
PoseEstimate estimate_pose(const PointMap& pm, const DenseTargets& targets,
                           const CameraIntrinsics& cam, const AggregatorConfig& cfg);

}  // namespace handvote
