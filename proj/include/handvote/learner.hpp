#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "handvote/aggregator.hpp"
#include "handvote/codec.hpp"
#include "handvote/geometry.hpp"
#include "handvote/rng.hpp"

namespace handvote {

/// Channel-major C×H×W tensor of doubles.
struct Tensor {
  int ch = 0;
  int h = 0;
  int w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int ch_, int h_, int w_)
      : ch(ch_), h(h_), w(w_), v(static_cast<std::size_t>(ch_) * h_ * w_, 0.0) {}

  double& at(int c, int y, int x) { return v[(static_cast<std::size_t>(c) * h + y) * w + x]; }
  const double& at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * h + y) * w + x];
  }
  std::size_t size() const { return v.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  int ksize = 1;  // 1 or 3, stride 1, zero padding ksize/2
  std::size_t w_off = 0;
  std::size_t b_off = 0;

  std::size_t weight_count() const {
    return static_cast<std::size_t>(in_ch) * out_ch * ksize * ksize;
  }
  std::size_t param_count() const { return weight_count() + out_ch; }
};

struct StackLayers {
  ConvLayer trunk1, trunk2, trunk3;  // encoder-decoder trunk (pool between 1 and 2)
  ConvLayer head_r, head_s;          // 1x1 detection heads off the trunk
  ConvLayer v_hidden, v_out;         // direction head fed by masked trunk + R + S + depth
};

/// Architecture of the dense predictor. Per stack the wiring is:
///   trunk  : conv3 -> relu -> avgpool2 -> conv3 -> relu -> upsample2 -> conv3 -> relu
///   R, S   : 1x1 convolutions on the trunk features
///   V      : conv3 + relu + 1x1 on [trunk ⊙ valid-mask, R, S, depth]
/// Stack t+1 consumes [depth, R_t, S_t, V_t]. Outputs keep the input resolution.
struct PredictorDesc {
  int height = 0;
  int width = 0;
  int joints = 0;
  int channels = 0;
  int stacks = 0;
  std::vector<StackLayers> layers;
  std::size_t param_count = 0;

  static PredictorDesc make(int height, int width, int joints, int channels, int stacks);

  int stack_input_channels(int stack) const { return stack == 0 ? 1 : 1 + 5 * joints; }
  bool same_architecture(const PredictorDesc& o) const {
    return height == o.height && width == o.width && joints == o.joints &&
           channels == o.channels && stacks == o.stacks;
  }
};

struct PredictorParams {
  PredictorDesc desc;
  std::vector<double> values;
};

/// Uniform init in [-a, a] with a = sqrt(6 / (fan_in + fan_out)); biases zero.
PredictorParams init_params(const PredictorDesc& desc, std::uint64_t seed);

/// Raw per-stack estimates; values are unconstrained reals.
struct StackOutputs {
  Tensor r;  // J×H×W
  Tensor s;  // J×H×W
  Tensor v;  // 3J×H×W, channel 3j+axis
};

struct DenseOutputs {
  std::vector<StackOutputs> stacks;
};

DenseOutputs forward(const PredictorParams& params, const DepthFrame& frame);

/// View the final stack's estimates as a decodable target bundle.
DenseTargets outputs_to_targets(const DenseOutputs& out, double theta, double tau);

struct LossTerms {
  double r = 0.0;
  double s = 0.0;
  double v = 0.0;
  double total() const { return r + s + v; }
};

struct LossBreakdown {
  double total = 0.0;
  std::vector<LossTerms> per_stack;
};

struct LossWeights {
  double r = 1.0;
  double s = 1.0;
  double v = 1.0;
};

/// Squared L2 over every joint, stack, and grid element; the per-stack terms
/// sum to the total exactly.
LossBreakdown loss(const DenseOutputs& pred, const DenseTargets& gt);

/// Squared L2 over masked entries only. pred packs offsets as a 3J×H×W tensor.
double loss_masked(const Tensor& pred_offsets, const std::vector<OffsetField>& gt);

/// Gradient of loss(forward(params, frame), gt) with respect to params.
std::vector<double> backward(const PredictorParams& params, const DepthFrame& frame,
                             const DenseTargets& gt);

/// Forward + loss + (optionally) gradient accumulation in one pass.
/// grad, when given, must be zeroed (or hold a running sum) by the caller.
LossBreakdown forward_loss(const PredictorParams& params, const DepthFrame& frame,
                           const DenseTargets& gt, const LossWeights& weights,
                           std::vector<double>* grad);

struct OptimState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double lr = 0.001;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimState make_optim_state(std::size_t param_count, double lr, double beta1, double beta2,
                            double eps);

/// Bias-corrected Adam update in place. Throws std::invalid_argument on shape
/// mismatch or non-finite gradient entries.
void adam_step(std::vector<double>& params, const std::vector<double>& grad, OptimState& state);

/// Max relative error between backward() and central finite differences over
/// coord_samples randomly chosen parameter coordinates.
double gradient_check(const PredictorParams& params, const DepthFrame& frame,
                      const DenseTargets& gt, double step, int coord_samples,
                      std::uint64_t seed);

struct AugmentParams {
  double angle_rad = 0.0;  // in-plane rotation about the optical axis
  double scale_x = 1.0;    // anisotropic aspect change
  double scale_y = 1.0;
};

AugmentParams sample_augment(Rng& rng);  // angle ±pi/2, scales in [0.85, 1.15]

/// Apply the camera-space map diag(sx, sy, 1) * Rz(angle) to the pose exactly
/// and to the depth grid by nearest-neighbor resampling of the equivalent
/// pixel-space affine. Depth values are preserved (the map keeps z).
std::pair<DepthFrame, Pose> augment_apply(const DepthFrame& frame, const Pose& pose,
                                          const AugmentParams& params);
std::pair<DepthFrame, Pose> augment(const DepthFrame& frame, const Pose& pose, Rng& rng);

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch = 8;
  int steps = 200;
  std::uint64_t seed = 1;
  int stacks = 2;
  int channels = 8;
  bool augment = true;
  double theta = 80.0;  // encoding radius for on-the-fly targets, mm
  double tau = 12.0;    // px
  LossWeights loss_weights;
};

void validate(const TrainConfig& cfg);

struct TrainSample {
  DepthFrame frame;
  Pose pose;
};

struct TrainLogRow {
  int step = 0;
  double loss = 0.0;
  double loss_r = 0.0;
  double loss_s = 0.0;
  double loss_v = 0.0;
};

struct TrainResult {
  PredictorParams params;
  std::vector<TrainLogRow> log;
};

/// Serial mini-batch loop: augment (optional), encode targets, forward,
/// backward, Adam. Deterministic for a fixed seed. Throws on non-finite loss.
TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& cfg);

/// CSV with header step,loss,loss_R,loss_S,loss_V.
void write_training_log(const std::string& path, const std::vector<TrainLogRow>& rows);

// Model container: magic "DVM1", little-endian u32 descriptor length, JSON
// descriptor, float32 parameter blob (length-checked against the descriptor).
void save_model(const std::string& path, const PredictorParams& params);
PredictorParams load_model(const std::string& path);

}  // namespace handvote
