#include "handvote/aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace handvote {

std::string to_string(Weighting w) {
  switch (w) {
    case Weighting::kWeighted: return "weighted";
    case Weighting::kUnweighted: return "unweighted";
    case Weighting::kUniform: return "uniform";
  }
  return "?";
}

Weighting weighting_from_string(const std::string& name) {
  if (name == "weighted") return Weighting::kWeighted;
  if (name == "unweighted") return Weighting::kUnweighted;
  if (name == "uniform") return Weighting::kUniform;
  throw config_error("unknown weighting mode: " + name);
}

void validate(const AggregatorConfig& cfg) {
  if (cfg.k_candidates < 1) throw config_error("aggregator: k must be >= 1");
  if (!(cfg.sigma > 0.0)) throw config_error("aggregator: sigma must be positive");
  if (cfg.max_iters < 1) throw config_error("aggregator: max_iters must be >= 1");
  if (!(cfg.stop_eps > 0.0)) throw config_error("aggregator: stop_eps must be positive");
  if (!(cfg.theta > 0.0) || !(cfg.tau > 0.0)) {
    throw config_error("aggregator: theta and tau must be positive");
  }
}

CandidateSet select_candidates(const HeatMap3D& S, const CandidateGrid& candidates, int k) {
  if (k < 1) throw std::invalid_argument("select_candidates: k must be >= 1");
  if (!S.values.same_shape(candidates.points)) {
    throw std::invalid_argument("select_candidates: grid dimensions differ");
  }
  std::vector<int> indices;
  indices.reserve(candidates.points.size());
  for (std::size_t i = 0; i < candidates.points.size(); ++i) {
    if (candidates.valid[i]) indices.push_back(static_cast<int>(i));
  }
  if (indices.empty()) {
    throw no_evidence_error("no valid candidates for joint");
  }
  const auto by_score = [&S](int a, int b) {
    if (S.values[a] != S.values[b]) return S.values[a] > S.values[b];
    return a < b;  // row-major tie break
  };
  const std::size_t keep = std::min<std::size_t>(k, indices.size());
  std::partial_sort(indices.begin(), indices.begin() + keep, indices.end(), by_score);
  indices.resize(keep);

  CandidateSet cs;
  cs.points.reserve(keep);
  cs.source_pixels.reserve(keep);
  for (int i : indices) {
    cs.points.push_back(candidates.points[i]);
    cs.source_pixels.push_back(i);
  }
  cs.weights.assign(keep, 1.0);
  return cs;
}

namespace {

// Bilinear lookup with pixel centers at integer coordinates; zero outside.
double sample_bilinear(const Grid<double>& g, double u, double v) {
  if (u < 0.0 || v < 0.0 || u > g.width() - 1.0 || v > g.height() - 1.0) return 0.0;
  const int x0 = std::max(0, std::min(static_cast<int>(std::floor(u)), g.width() - 2));
  const int y0 = std::max(0, std::min(static_cast<int>(std::floor(v)), g.height() - 2));
  const int x1 = std::min(x0 + 1, g.width() - 1);
  const int y1 = std::min(y0 + 1, g.height() - 1);
  const double fu = u - x0;
  const double fv = v - y0;
  return (1.0 - fv) * ((1.0 - fu) * g(y0, x0) + fu * g(y0, x1)) +
         fv * ((1.0 - fu) * g(y1, x0) + fu * g(y1, x1));
}

}  // namespace

void weights_weighted(CandidateSet& cs, const HeatMap2D& R, const CameraIntrinsics& cam) {
  CandidateSet kept;
  kept.points.reserve(cs.size());
  kept.weights.reserve(cs.size());
  kept.source_pixels.reserve(cs.size());
  for (std::size_t i = 0; i < cs.size(); ++i) {
    if (!(cs.points[i].z() > 0.0)) continue;  // behind the camera: dropped
    const Eigen::Vector2d px = project(cs.points[i], cam);
    kept.points.push_back(cs.points[i]);
    kept.weights.push_back(sample_bilinear(R.values, px.x(), px.y()));
    kept.source_pixels.push_back(cs.source_pixels[i]);
  }
  const double total = std::accumulate(kept.weights.begin(), kept.weights.end(), 0.0);
  if (!kept.weights.empty() && total == 0.0) {
    std::fill(kept.weights.begin(), kept.weights.end(), 1.0);
  }
  cs = std::move(kept);
}

void weights_unweighted(CandidateSet& cs, const HeatMap2D& R, const HeatMap3D& S) {
  for (std::size_t i = 0; i < cs.size(); ++i) {
    const int px = cs.source_pixels[i];
    cs.weights[i] = std::max(0.0, (1.0 + R.values[px]) * S.values[px]);
  }
}

Eigen::Vector3d mean_shift(const CandidateSet& cs, double sigma, int max_iters, double stop_eps,
                           std::vector<Eigen::Vector3d>* trace) {
  if (cs.points.empty()) {
    throw no_evidence_error("mean_shift: empty candidate set");
  }
  double weight_sum = 0.0;
  Eigen::Vector3d weighted_mean = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < cs.size(); ++i) {
    weight_sum += cs.weights[i];
    weighted_mean += cs.weights[i] * cs.points[i];
  }
  if (!(weight_sum > 0.0)) {
    throw no_evidence_error("mean_shift: all candidate weights are zero");
  }

  const double inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);
  Eigen::Vector3d p = weighted_mean / weight_sum;
  if (trace) trace->push_back(p);
  for (int iter = 0; iter < max_iters; ++iter) {
    double denom = 0.0;
    Eigen::Vector3d numer = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < cs.size(); ++i) {
      const double k = std::exp(-(cs.points[i] - p).squaredNorm() * inv_two_sigma_sq);
      const double kw = k * cs.weights[i];
      denom += kw;
      numer += kw * cs.points[i];
    }
    const Eigen::Vector3d next = numer / denom;  // denom > 0: Gaussian never vanishes
    const double displacement = (next - p).norm();
    p = next;
    if (trace) trace->push_back(p);
    if (displacement < stop_eps) break;
  }
  return p;
}

Eigen::Vector3d estimate_joint(const PointMap& pm, const HeatMap2D& R, const HeatMap3D& S,
                               const VectorField& V, const CameraIntrinsics& cam,
                               const AggregatorConfig& cfg) {
  const CandidateGrid candidates = recover_candidates(pm, S, V, cfg.theta);
  CandidateSet cs = select_candidates(S, candidates, cfg.k_candidates);
  switch (cfg.weighting) {
    case Weighting::kWeighted:
      weights_weighted(cs, R, cam);
      break;
    case Weighting::kUnweighted:
      weights_unweighted(cs, R, S);
      break;
    case Weighting::kUniform:
      break;  // select_candidates already left weights at 1
  }
  return mean_shift(cs, cfg.sigma, cfg.max_iters, cfg.stop_eps);
}

bool PoseEstimate::all_ok() const {
  return std::all_of(ok.begin(), ok.end(), [](std::uint8_t f) { return f != 0; });
}

PoseEstimate estimate_pose(const PointMap& pm, const DenseTargets& targets,
                           const CameraIntrinsics& cam, const AggregatorConfig& cfg) {
  const int joints = targets.joint_count();
  AggregatorConfig joint_cfg = cfg;
  joint_cfg.theta = targets.theta;  // candidate recovery must invert the encoding radius

  PoseEstimate est;
  est.pose.joints.assign(joints, Eigen::Vector3d::Zero());
  est.ok.assign(joints, 0);
  for (int j = 0; j < joints; ++j) {
    try {
      est.pose.joints[j] = estimate_joint(pm, targets.R[j], targets.S[j], targets.V[j], cam,
                                          joint_cfg);
      est.ok[j] = 1;
    } catch (const no_evidence_error&) {
      // flagged, not fabricated
    }
  }
  return est;
}

}  // namespace handvote
