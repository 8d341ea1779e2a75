#include "handvote/learner.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>

#include "json.hpp"

#include "handvote/errors.hpp"
#include "handvote/io.hpp"

namespace handvote {

using nlohmann::json;

namespace {

constexpr double kDepthScale = 100.0;  // mm per unit of normalized input depth

ConvLayer make_layer(int in_ch, int out_ch, int ksize, std::size_t& offset) {
  ConvLayer layer;
  layer.in_ch = in_ch;
  layer.out_ch = out_ch;
  layer.ksize = ksize;
  layer.w_off = offset;
  layer.b_off = offset + layer.weight_count();
  offset += layer.param_count();
  return layer;
}

}  // namespace

PredictorDesc PredictorDesc::make(int height, int width, int joints, int channels, int stacks) {
  if (height < 4 || width < 4 || height % 2 != 0 || width % 2 != 0) {
    throw std::invalid_argument("predictor: height and width must be even and >= 4");
  }
  if (joints < 1 || channels < 1 || stacks < 1) {
    throw std::invalid_argument("predictor: joints, channels, stacks must be >= 1");
  }
  PredictorDesc d;
  d.height = height;
  d.width = width;
  d.joints = joints;
  d.channels = channels;
  d.stacks = stacks;
  std::size_t offset = 0;
  for (int t = 0; t < stacks; ++t) {
    StackLayers s;
    const int in_ch = d.stack_input_channels(t);
    s.trunk1 = make_layer(in_ch, channels, 3, offset);
    s.trunk2 = make_layer(channels, channels, 3, offset);
    s.trunk3 = make_layer(channels, channels, 3, offset);
    s.head_r = make_layer(channels, joints, 1, offset);
    s.head_s = make_layer(channels, joints, 1, offset);
    s.v_hidden = make_layer(channels + 2 * joints + 1, channels, 3, offset);
    s.v_out = make_layer(channels, 3 * joints, 1, offset);
    d.layers.push_back(s);
  }
  d.param_count = offset;
  return d;
}

PredictorParams init_params(const PredictorDesc& desc, std::uint64_t seed) {
  PredictorParams p;
  p.desc = desc;
  p.values.assign(desc.param_count, 0.0);
  Rng rng(seed);
  for (const StackLayers& s : desc.layers) {
    for (const ConvLayer* layer :
         {&s.trunk1, &s.trunk2, &s.trunk3, &s.head_r, &s.head_s, &s.v_hidden, &s.v_out}) {
      const double fan_in = static_cast<double>(layer->in_ch) * layer->ksize * layer->ksize;
      const double fan_out = static_cast<double>(layer->out_ch) * layer->ksize * layer->ksize;
      const double a = std::sqrt(6.0 / (fan_in + fan_out));
      // Biases draw from the same range: background pixels feed exact zeros,
      // and zero biases would park their pre-activations on the ReLU kink.
      for (std::size_t i = 0; i < layer->param_count(); ++i) {
        p.values[layer->w_off + i] = rng.uniform(-a, a);
      }
    }
  }
  return p;
}

namespace {

void conv_forward(const ConvLayer& L, const double* params, const Tensor& in, Tensor& out) {
  const int h = in.h;
  const int w = in.w;
  const int pad = L.ksize / 2;
  out = Tensor(L.out_ch, h, w);
  const double* weights = params + L.w_off;
  const double* biases = params + L.b_off;
  for (int o = 0; o < L.out_ch; ++o) {
    double* plane = &out.at(o, 0, 0);
    std::fill(plane, plane + out.plane(), biases[o]);
  }
  for (int o = 0; o < L.out_ch; ++o) {
    for (int i = 0; i < L.in_ch; ++i) {
      const double* wrow =
          weights + (static_cast<std::size_t>(o) * L.in_ch + i) * L.ksize * L.ksize;
      for (int dy = 0; dy < L.ksize; ++dy) {
        const int y_lo = std::max(0, pad - dy);
        const int y_hi = std::min(h, h + pad - dy);
        for (int dx = 0; dx < L.ksize; ++dx) {
          const double wv = wrow[dy * L.ksize + dx];
          const int x_lo = std::max(0, pad - dx);
          const int x_hi = std::min(w, w + pad - dx);
          for (int y = y_lo; y < y_hi; ++y) {
            double* orow = &out.at(o, y, 0);
            const double* irow = &in.at(i, y + dy - pad, 0) + (dx - pad);
            for (int x = x_lo; x < x_hi; ++x) {
              orow[x] += wv * irow[x];
            }
          }
        }
      }
    }
  }
}

// Accumulates parameter gradients into gparams and, when gin is non-null,
// input gradients into gin (which the caller must have sized and zeroed).
void conv_backward(const ConvLayer& L, const double* params, const Tensor& in,
                   const Tensor& gout, double* gparams, Tensor* gin) {
  const int h = in.h;
  const int w = in.w;
  const int pad = L.ksize / 2;
  const double* weights = params + L.w_off;
  double* gweights = gparams + L.w_off;
  double* gbiases = gparams + L.b_off;
  for (int o = 0; o < L.out_ch; ++o) {
    const double* gplane = &gout.at(o, 0, 0);
    double acc = 0.0;
    for (std::size_t i = 0; i < gout.plane(); ++i) acc += gplane[i];
    gbiases[o] += acc;
  }
  for (int o = 0; o < L.out_ch; ++o) {
    for (int i = 0; i < L.in_ch; ++i) {
      const std::size_t wbase = (static_cast<std::size_t>(o) * L.in_ch + i) * L.ksize * L.ksize;
      for (int dy = 0; dy < L.ksize; ++dy) {
        const int y_lo = std::max(0, pad - dy);
        const int y_hi = std::min(h, h + pad - dy);
        for (int dx = 0; dx < L.ksize; ++dx) {
          const int x_lo = std::max(0, pad - dx);
          const int x_hi = std::min(w, w + pad - dx);
          double gw = 0.0;
          const double wv = weights[wbase + dy * L.ksize + dx];
          for (int y = y_lo; y < y_hi; ++y) {
            const double* grow = &gout.at(o, y, 0);
            const double* irow = &in.at(i, y + dy - pad, 0) + (dx - pad);
            double* girow = gin ? &gin->at(i, y + dy - pad, 0) + (dx - pad) : nullptr;
            for (int x = x_lo; x < x_hi; ++x) {
              gw += grow[x] * irow[x];
              if (girow) girow[x] += wv * grow[x];
            }
          }
          gweights[wbase + dy * L.ksize + dx] += gw;
        }
      }
    }
  }
}

void relu_inplace(Tensor& t) {
  for (double& v : t.v) v = v > 0.0 ? v : 0.0;
}

// grad is masked by the *post-activation* sign.
void relu_backward_inplace(Tensor& grad, const Tensor& post) {
  for (std::size_t i = 0; i < grad.v.size(); ++i) {
    if (post.v[i] <= 0.0) grad.v[i] = 0.0;
  }
}

Tensor avgpool2(const Tensor& in) {
  Tensor out(in.ch, in.h / 2, in.w / 2);
  for (int c = 0; c < in.ch; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                  in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

Tensor avgpool2_backward(const Tensor& gout, int in_h, int in_w) {
  Tensor gin(gout.ch, in_h, in_w);
  for (int c = 0; c < gout.ch; ++c) {
    for (int y = 0; y < gout.h; ++y) {
      for (int x = 0; x < gout.w; ++x) {
        const double g = 0.25 * gout.at(c, y, x);
        gin.at(c, 2 * y, 2 * x) += g;
        gin.at(c, 2 * y, 2 * x + 1) += g;
        gin.at(c, 2 * y + 1, 2 * x) += g;
        gin.at(c, 2 * y + 1, 2 * x + 1) += g;
      }
    }
  }
  return gin;
}

Tensor upsample2(const Tensor& in) {
  Tensor out(in.ch, in.h * 2, in.w * 2);
  for (int c = 0; c < in.ch; ++c) {
    for (int y = 0; y < out.h; ++y) {
      for (int x = 0; x < out.w; ++x) {
        out.at(c, y, x) = in.at(c, y / 2, x / 2);
      }
    }
  }
  return out;
}

Tensor upsample2_backward(const Tensor& gout) {
  Tensor gin(gout.ch, gout.h / 2, gout.w / 2);
  for (int c = 0; c < gout.ch; ++c) {
    for (int y = 0; y < gout.h; ++y) {
      for (int x = 0; x < gout.w; ++x) {
        gin.at(c, y / 2, x / 2) += gout.at(c, y, x);
      }
    }
  }
  return gin;
}

void copy_channels(const Tensor& src, int src_from, Tensor& dst, int dst_from, int count) {
  for (int c = 0; c < count; ++c) {
    std::memcpy(&dst.at(dst_from + c, 0, 0), &src.at(src_from + c, 0, 0),
                src.plane() * sizeof(double));
  }
}

Tensor slice_channels(const Tensor& src, int from, int count) {
  Tensor out(count, src.h, src.w);
  copy_channels(src, from, out, 0, count);
  return out;
}

void add_channels(const Tensor& src, int src_from, Tensor& dst, int count) {
  for (int c = 0; c < count; ++c) {
    const double* s = &src.at(src_from + c, 0, 0);
    double* d = &dst.at(c, 0, 0);
    for (std::size_t i = 0; i < src.plane(); ++i) d[i] += s[i];
  }
}

void multiply_mask_inplace(Tensor& t, const Tensor& mask) {
  for (int c = 0; c < t.ch; ++c) {
    double* row = &t.at(c, 0, 0);
    const double* m = mask.v.data();
    for (std::size_t i = 0; i < t.plane(); ++i) row[i] *= m[i];
  }
}

struct StackCache {
  Tensor x0, a1, p1, a2, u2, a3, r, s, vin, a4, vout;
};

struct ForwardCache {
  Tensor depth_in;  // 1×H×W, normalized
  Tensor mask;      // 1×H×W, binarized validity
  std::vector<StackCache> stacks;
};

// Depth enters centered on the frame's mean valid depth; background stays 0.
Tensor make_depth_input(const DepthFrame& frame) {
  const int h = frame.depth.height();
  const int w = frame.depth.width();
  Tensor t(1, h, w);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    if (frame.valid[i]) {
      sum += frame.depth[i];
      ++n;
    }
  }
  const double mean = n > 0 ? sum / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < frame.depth.size(); ++i) {
    t.v[i] = frame.valid[i] ? (frame.depth[i] - mean) / kDepthScale : 0.0;
  }
  return t;
}

Tensor make_mask(const DepthFrame& frame) {
  Tensor t(1, frame.depth.height(), frame.depth.width());
  for (std::size_t i = 0; i < frame.valid.size(); ++i) {
    t.v[i] = frame.valid[i] ? 1.0 : 0.0;
  }
  return t;
}

void forward_impl(const PredictorParams& params, const DepthFrame& frame, ForwardCache& cache) {
  const PredictorDesc& d = params.desc;
  if (frame.depth.height() != d.height || frame.depth.width() != d.width) {
    throw std::invalid_argument("forward: frame resolution does not match the descriptor");
  }
  if (params.values.size() != d.param_count) {
    throw std::invalid_argument("forward: parameter vector length mismatch");
  }
  const double* p = params.values.data();
  const int j = d.joints;
  cache.depth_in = make_depth_input(frame);
  cache.mask = make_mask(frame);
  cache.stacks.resize(d.stacks);
  for (int t = 0; t < d.stacks; ++t) {
    StackCache& sc = cache.stacks[t];
    const StackLayers& L = d.layers[t];
    if (t == 0) {
      sc.x0 = cache.depth_in;
    } else {
      const StackCache& prev = cache.stacks[t - 1];
      sc.x0 = Tensor(1 + 5 * j, d.height, d.width);
      copy_channels(cache.depth_in, 0, sc.x0, 0, 1);
      copy_channels(prev.r, 0, sc.x0, 1, j);
      copy_channels(prev.s, 0, sc.x0, 1 + j, j);
      copy_channels(prev.vout, 0, sc.x0, 1 + 2 * j, 3 * j);
    }
    conv_forward(L.trunk1, p, sc.x0, sc.a1);
    relu_inplace(sc.a1);
    sc.p1 = avgpool2(sc.a1);
    conv_forward(L.trunk2, p, sc.p1, sc.a2);
    relu_inplace(sc.a2);
    sc.u2 = upsample2(sc.a2);
    conv_forward(L.trunk3, p, sc.u2, sc.a3);
    relu_inplace(sc.a3);
    conv_forward(L.head_r, p, sc.a3, sc.r);
    conv_forward(L.head_s, p, sc.a3, sc.s);

    sc.vin = Tensor(d.channels + 2 * j + 1, d.height, d.width);
    copy_channels(sc.a3, 0, sc.vin, 0, d.channels);
    for (int c = 0; c < d.channels; ++c) {
      double* row = &sc.vin.at(c, 0, 0);
      for (std::size_t i = 0; i < sc.vin.plane(); ++i) row[i] *= cache.mask.v[i];
    }
    copy_channels(sc.r, 0, sc.vin, d.channels, j);
    copy_channels(sc.s, 0, sc.vin, d.channels + j, j);
    copy_channels(cache.depth_in, 0, sc.vin, d.channels + 2 * j, 1);
    conv_forward(L.v_hidden, p, sc.vin, sc.a4);
    relu_inplace(sc.a4);
    conv_forward(L.v_out, p, sc.a4, sc.vout);
  }
}

struct TargetTensors {
  Tensor r, s, v;
};

TargetTensors make_target_tensors(const DenseTargets& gt, int height, int width) {
  const int j = gt.joint_count();
  if (j == 0 || gt.S[0].values.height() != height || gt.S[0].values.width() != width) {
    throw std::invalid_argument("loss: target resolution does not match predictions");
  }
  TargetTensors t;
  t.r = Tensor(j, height, width);
  t.s = Tensor(j, height, width);
  t.v = Tensor(3 * j, height, width);
  for (int jj = 0; jj < j; ++jj) {
    for (std::size_t i = 0; i < gt.R[jj].values.size(); ++i) {
      t.r.v[jj * t.r.plane() + i] = gt.R[jj].values[i];
      t.s.v[jj * t.s.plane() + i] = gt.S[jj].values[i];
      const Eigen::Vector3d& vec = gt.V[jj].vectors[i];
      t.v.v[(3 * jj + 0) * t.v.plane() + i] = vec.x();
      t.v.v[(3 * jj + 1) * t.v.plane() + i] = vec.y();
      t.v.v[(3 * jj + 2) * t.v.plane() + i] = vec.z();
    }
  }
  return t;
}

double squared_l2(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    const double d = a.v[i] - b.v[i];
    acc += d * d;
  }
  return acc;
}

// d/dpred of weight * ||pred - target||^2
Tensor l2_grad(const Tensor& pred, const Tensor& target, double weight) {
  Tensor g(pred.ch, pred.h, pred.w);
  for (std::size_t i = 0; i < pred.v.size(); ++i) {
    g.v[i] = 2.0 * weight * (pred.v[i] - target.v[i]);
  }
  return g;
}

LossBreakdown breakdown_from_stacks(const std::vector<StackCache>& stacks,
                                    const TargetTensors& tt, const LossWeights& w) {
  LossBreakdown b;
  for (const StackCache& sc : stacks) {
    LossTerms terms;
    terms.r = w.r * squared_l2(sc.r, tt.r);
    terms.s = w.s * squared_l2(sc.s, tt.s);
    terms.v = w.v * squared_l2(sc.vout, tt.v);
    b.per_stack.push_back(terms);
    b.total += terms.total();
  }
  return b;
}

void backward_impl(const PredictorParams& params, const ForwardCache& cache,
                   const TargetTensors& tt, const LossWeights& w, double* gparams) {
  const PredictorDesc& d = params.desc;
  const double* p = params.values.data();
  const int j = d.joints;
  Tensor carry_r, carry_s, carry_v;  // gradients flowing back from stack t+1's input
  for (int t = d.stacks - 1; t >= 0; --t) {
    const StackCache& sc = cache.stacks[t];
    const StackLayers& L = d.layers[t];
    Tensor dr = l2_grad(sc.r, tt.r, w.r);
    Tensor ds = l2_grad(sc.s, tt.s, w.s);
    Tensor dv = l2_grad(sc.vout, tt.v, w.v);
    if (t < d.stacks - 1) {
      for (std::size_t i = 0; i < dr.v.size(); ++i) dr.v[i] += carry_r.v[i];
      for (std::size_t i = 0; i < ds.v.size(); ++i) ds.v[i] += carry_s.v[i];
      for (std::size_t i = 0; i < dv.v.size(); ++i) dv.v[i] += carry_v.v[i];
    }

    // direction head
    Tensor ga4(d.channels, d.height, d.width);
    conv_backward(L.v_out, p, sc.a4, dv, gparams, &ga4);
    relu_backward_inplace(ga4, sc.a4);
    Tensor gvin(d.channels + 2 * j + 1, d.height, d.width);
    conv_backward(L.v_hidden, p, sc.vin, ga4, gparams, &gvin);

    Tensor ga3 = slice_channels(gvin, 0, d.channels);
    multiply_mask_inplace(ga3, cache.mask);
    add_channels(gvin, d.channels, dr, j);
    add_channels(gvin, d.channels + j, ds, j);
    // the depth slice of gvin ends at a constant input

    // detection heads
    conv_backward(L.head_r, p, sc.a3, dr, gparams, &ga3);
    conv_backward(L.head_s, p, sc.a3, ds, gparams, &ga3);

    // trunk
    relu_backward_inplace(ga3, sc.a3);
    Tensor gu2(d.channels, d.height, d.width);
    conv_backward(L.trunk3, p, sc.u2, ga3, gparams, &gu2);
    Tensor ga2 = upsample2_backward(gu2);
    relu_backward_inplace(ga2, sc.a2);
    Tensor gp1(d.channels, d.height / 2, d.width / 2);
    conv_backward(L.trunk2, p, sc.p1, ga2, gparams, &gp1);
    Tensor ga1 = avgpool2_backward(gp1, d.height, d.width);
    relu_backward_inplace(ga1, sc.a1);
    if (t > 0) {
      Tensor gx0(1 + 5 * j, d.height, d.width);
      conv_backward(L.trunk1, p, sc.x0, ga1, gparams, &gx0);
      carry_r = slice_channels(gx0, 1, j);
      carry_s = slice_channels(gx0, 1 + j, j);
      carry_v = slice_channels(gx0, 1 + 2 * j, 3 * j);
    } else {
      conv_backward(L.trunk1, p, sc.x0, ga1, gparams, nullptr);
    }
  }
}

}  // namespace

DenseOutputs forward(const PredictorParams& params, const DepthFrame& frame) {
  ForwardCache cache;
  forward_impl(params, frame, cache);
  DenseOutputs out;
  out.stacks.resize(cache.stacks.size());
  for (std::size_t t = 0; t < cache.stacks.size(); ++t) {
    out.stacks[t].r = std::move(cache.stacks[t].r);
    out.stacks[t].s = std::move(cache.stacks[t].s);
    out.stacks[t].v = std::move(cache.stacks[t].vout);
  }
  return out;
}

DenseTargets outputs_to_targets(const DenseOutputs& out, double theta, double tau) {
  if (out.stacks.empty()) throw std::invalid_argument("outputs_to_targets: no stacks");
  const StackOutputs& last = out.stacks.back();
  const int j = last.r.ch;
  const int h = last.r.h;
  const int w = last.r.w;
  DenseTargets t;
  t.theta = theta;
  t.tau = tau;
  t.R.resize(j);
  t.S.resize(j);
  t.V.resize(j);
  for (int jj = 0; jj < j; ++jj) {
    t.R[jj].values = Grid<double>(h, w, 0.0);
    t.S[jj].values = Grid<double>(h, w, 0.0);
    t.V[jj].vectors = Grid<Eigen::Vector3d>(h, w, Eigen::Vector3d::Zero());
    for (std::size_t i = 0; i < t.R[jj].values.size(); ++i) {
      t.R[jj].values[i] = last.r.v[jj * last.r.plane() + i];
      t.S[jj].values[i] = last.s.v[jj * last.s.plane() + i];
      t.V[jj].vectors[i] = Eigen::Vector3d(last.v.v[(3 * jj + 0) * last.v.plane() + i],
                                           last.v.v[(3 * jj + 1) * last.v.plane() + i],
                                           last.v.v[(3 * jj + 2) * last.v.plane() + i]);
    }
  }
  return t;
}

LossBreakdown loss(const DenseOutputs& pred, const DenseTargets& gt) {
  if (pred.stacks.empty()) throw std::invalid_argument("loss: no stacks");
  const int h = pred.stacks[0].r.h;
  const int w = pred.stacks[0].r.w;
  const int j = pred.stacks[0].r.ch;
  if (gt.joint_count() != j) throw std::invalid_argument("loss: joint count mismatch");
  const TargetTensors tt = make_target_tensors(gt, h, w);
  LossBreakdown b;
  for (const StackOutputs& so : pred.stacks) {
    if (so.r.h != h || so.r.w != w || so.r.ch != j || so.v.ch != 3 * j) {
      throw std::invalid_argument("loss: stack shape mismatch");
    }
    LossTerms terms;
    terms.r = squared_l2(so.r, tt.r);
    terms.s = squared_l2(so.s, tt.s);
    terms.v = squared_l2(so.v, tt.v);
    b.per_stack.push_back(terms);
    b.total += terms.total();
  }
  return b;
}

double loss_masked(const Tensor& pred_offsets, const std::vector<OffsetField>& gt) {
  const int j = static_cast<int>(gt.size());
  if (j == 0 || pred_offsets.ch != 3 * j || gt[0].offsets.height() != pred_offsets.h ||
      gt[0].offsets.width() != pred_offsets.w) {
    throw std::invalid_argument("loss_masked: shape mismatch");
  }
  double acc = 0.0;
  for (int jj = 0; jj < j; ++jj) {
    for (std::size_t i = 0; i < gt[jj].offsets.size(); ++i) {
      if (!gt[jj].mask[i]) continue;
      for (int a = 0; a < 3; ++a) {
        const double d =
            pred_offsets.v[(3 * jj + a) * pred_offsets.plane() + i] - gt[jj].offsets[i][a];
        acc += d * d;
      }
    }
  }
  return acc;
}

LossBreakdown forward_loss(const PredictorParams& params, const DepthFrame& frame,
                           const DenseTargets& gt, const LossWeights& weights,
                           std::vector<double>* grad) {
  if (gt.joint_count() != params.desc.joints) {
    throw std::invalid_argument("loss: joint count mismatch");
  }
  ForwardCache cache;
  forward_impl(params, frame, cache);
  const TargetTensors tt = make_target_tensors(gt, params.desc.height, params.desc.width);
  const LossBreakdown b = breakdown_from_stacks(cache.stacks, tt, weights);
  if (grad) {
    if (grad->size() != params.values.size()) {
      throw std::invalid_argument("forward_loss: gradient buffer size mismatch");
    }
    backward_impl(params, cache, tt, weights, grad->data());
  }
  return b;
}

std::vector<double> backward(const PredictorParams& params, const DepthFrame& frame,
                             const DenseTargets& gt) {
  std::vector<double> grad(params.values.size(), 0.0);
  forward_loss(params, frame, gt, LossWeights{}, &grad);
  return grad;
}

OptimState make_optim_state(std::size_t param_count, double lr, double beta1, double beta2,
                            double eps) {
  OptimState s;
  s.m.assign(param_count, 0.0);
  s.v.assign(param_count, 0.0);
  s.lr = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

void adam_step(std::vector<double>& params, const std::vector<double>& grad, OptimState& state) {
  if (params.size() != grad.size() || params.size() != state.m.size()) {
    throw std::invalid_argument("adam_step: shape mismatch");
  }
  for (double g : grad) {
    if (!std::isfinite(g)) throw std::invalid_argument("adam_step: non-finite gradient");
  }
  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

double gradient_check(const PredictorParams& params, const DepthFrame& frame,
                      const DenseTargets& gt, double step, int coord_samples,
                      std::uint64_t seed) {
  const std::vector<double> analytic = backward(params, frame, gt);
  PredictorParams probe = params;
  Rng rng(seed);
  double max_rel = 0.0;
  for (int s = 0; s < coord_samples; ++s) {
    const std::size_t i = static_cast<std::size_t>(rng.next_u64() % probe.values.size());
    const double original = probe.values[i];
    probe.values[i] = original + step;
    const double plus = loss(forward(probe, frame), gt).total;
    probe.values[i] = original - step;
    const double minus = loss(forward(probe, frame), gt).total;
    probe.values[i] = original;
    const double fd = (plus - minus) / (2.0 * step);
    const double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-12});
    max_rel = std::max(max_rel, std::abs(fd - analytic[i]) / denom);
  }
  return max_rel;
}

AugmentParams sample_augment(Rng& rng) {
  AugmentParams p;
  p.angle_rad = rng.uniform(-1.5707963267948966, 1.5707963267948966);
  p.scale_x = rng.uniform(0.85, 1.15);
  p.scale_y = rng.uniform(0.85, 1.15);
  return p;
}

std::pair<DepthFrame, Pose> augment_apply(const DepthFrame& frame, const Pose& pose,
                                          const AugmentParams& params) {
  if (!(params.scale_x > 0.0) || !(params.scale_y > 0.0)) {
    throw std::invalid_argument("augment: scales must be positive");
  }
  const CameraIntrinsics& cam = frame.intrinsics;
  const double ca = std::cos(params.angle_rad);
  const double sa = std::sin(params.angle_rad);

  Eigen::Matrix3d map = Eigen::Matrix3d::Identity();
  map(0, 0) = params.scale_x * ca;
  map(0, 1) = -params.scale_x * sa;
  map(1, 0) = params.scale_y * sa;
  map(1, 1) = params.scale_y * ca;

  Pose out_pose = pose;
  for (auto& joint : out_pose.joints) joint = map * joint;

  // Pixel-space equivalent of the camera-space map, about the principal point.
  Eigen::Matrix2d pixel_map;
  pixel_map << params.scale_x * ca, -params.scale_x * sa * cam.fx / cam.fy,
      params.scale_y * sa * cam.fy / cam.fx, params.scale_y * ca;
  const Eigen::Matrix2d inverse = pixel_map.inverse();

  DepthFrame out = frame;
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const Eigen::Vector2d delta(x - cam.cx, y - cam.cy);
      const Eigen::Vector2d src = inverse * delta + Eigen::Vector2d(cam.cx, cam.cy);
      const int sx = static_cast<int>(std::lround(src.x()));
      const int sy = static_cast<int>(std::lround(src.y()));
      if (frame.depth.contains(sy, sx) && frame.valid(sy, sx)) {
        out.depth(y, x) = frame.depth(sy, sx);  // the map preserves z
        out.valid(y, x) = 1;
      } else {
        out.depth(y, x) = 0.0;
        out.valid(y, x) = 0;
      }
    }
  }
  return {std::move(out), std::move(out_pose)};
}

std::pair<DepthFrame, Pose> augment(const DepthFrame& frame, const Pose& pose, Rng& rng) {
  return augment_apply(frame, pose, sample_augment(rng));
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.lr > 0.0)) throw config_error("train: lr must be positive");
  if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0) {
    throw config_error("train: betas must lie in [0, 1)");
  }
  if (!(cfg.eps > 0.0)) throw config_error("train: eps must be positive");
  if (cfg.batch < 1) throw config_error("train: batch must be >= 1");
  if (cfg.steps < 0) throw config_error("train: steps must be >= 0");
  if (cfg.stacks < 1 || cfg.channels < 1) {
    throw config_error("train: stacks and channels must be >= 1");
  }
  if (!(cfg.theta > 0.0) || !(cfg.tau > 0.0)) {
    throw config_error("train: theta and tau must be positive");
  }
}

TrainResult train(const std::vector<TrainSample>& samples, const TrainConfig& cfg) {
  validate(cfg);
  if (samples.empty()) {
    throw config_error("train: at least one sample required");
  }
  const int h = samples[0].frame.depth.height();
  const int w = samples[0].frame.depth.width();
  const int j = samples[0].pose.joint_count();
  for (const TrainSample& s : samples) {
    if (!s.frame.depth.same_shape(h, w) || s.pose.joint_count() != j) {
      throw config_error("train: samples must share resolution and joint count");
    }
  }

  TrainResult result;
  result.params = init_params(PredictorDesc::make(h, w, j, cfg.channels, cfg.stacks),
                              mix_seed(cfg.seed, 0x11));
  OptimState state =
      make_optim_state(result.params.values.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  Rng order_rng(mix_seed(cfg.seed, 0x22));
  Rng aug_rng(mix_seed(cfg.seed, 0x33));

  std::vector<int> deck;
  std::size_t deck_pos = 0;
  const auto next_index = [&]() {
    if (deck_pos >= deck.size()) {
      deck.resize(samples.size());
      for (std::size_t i = 0; i < deck.size(); ++i) deck[i] = static_cast<int>(i);
      for (std::size_t i = deck.size(); i > 1; --i) {  // Fisher-Yates
        std::swap(deck[i - 1], deck[order_rng.uniform_int(0, static_cast<int>(i) - 1)]);
      }
      deck_pos = 0;
    }
    return deck[deck_pos++];
  };

  std::vector<double> grad(result.params.values.size(), 0.0);
  for (int step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    TrainLogRow row;
    row.step = step + 1;
    for (int b = 0; b < cfg.batch; ++b) {
      const TrainSample& sample = samples[next_index()];
      DepthFrame frame = sample.frame;
      Pose pose = sample.pose;
      if (cfg.augment) {
        auto aug = augment(frame, pose, aug_rng);
        frame = std::move(aug.first);
        pose = std::move(aug.second);
      }
      const DenseTargets targets = encode_targets(frame, pose, cfg.theta, cfg.tau);
      const LossBreakdown b_loss =
          forward_loss(result.params, frame, targets, cfg.loss_weights, &grad);
      row.loss += b_loss.total;
      for (const LossTerms& t : b_loss.per_stack) {
        row.loss_r += t.r;
        row.loss_s += t.s;
        row.loss_v += t.v;
      }
    }
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
    row.loss *= inv_batch;
    row.loss_r *= inv_batch;
    row.loss_s *= inv_batch;
    row.loss_v *= inv_batch;
    if (!std::isfinite(row.loss)) {
      throw std::runtime_error("train: non-finite loss at step " + std::to_string(row.step));
    }
    for (double& g : grad) g *= inv_batch;
    adam_step(result.params.values, grad, state);
    result.log.push_back(row);
  }
  return result;
}

void write_training_log(const std::string& path, const std::vector<TrainLogRow>& rows) {
  std::string out = "step,loss,loss_R,loss_S,loss_V\n";
  char line[256];
  for (const TrainLogRow& r : rows) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss, r.loss_r,
                  r.loss_s, r.loss_v);
    out += line;
  }
  write_text_file(path, out);
}

void save_model(const std::string& path, const PredictorParams& params) {
  json desc;
  desc["height"] = params.desc.height;
  desc["width"] = params.desc.width;
  desc["joints"] = params.desc.joints;
  desc["channels"] = params.desc.channels;
  desc["stacks"] = params.desc.stacks;
  desc["param_count"] = params.desc.param_count;
  const std::string text = desc.dump();

  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 + text.size() + params.values.size() * 4);
  for (char c : {'D', 'V', 'M', '1'}) bytes.push_back(static_cast<std::uint8_t>(c));
  append_u32_le(bytes, static_cast<std::uint32_t>(text.size()));
  bytes.insert(bytes.end(), text.begin(), text.end());
  for (double v : params.values) {
    append_f32_le(bytes, static_cast<float>(v));
  }
  write_file_bytes(path, bytes.data(), bytes.size());
}

PredictorParams load_model(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "DVM1", 4) != 0) {
    throw format_error(path + ": bad magic at offset 0");
  }
  const std::uint32_t json_len = read_u32_le(bytes.data() + 4);
  if (bytes.size() < 8 + static_cast<std::size_t>(json_len)) {
    throw format_error(path + ": truncated descriptor at offset 8");
  }
  json desc;
  try {
    desc = json::parse(bytes.begin() + 8, bytes.begin() + 8 + json_len);
  } catch (const json::parse_error& e) {
    throw format_error(path + ": descriptor: " + e.what());
  }
  PredictorParams params;
  try {
    params.desc = PredictorDesc::make(desc.at("height").get<int>(), desc.at("width").get<int>(),
                                      desc.at("joints").get<int>(),
                                      desc.at("channels").get<int>(),
                                      desc.at("stacks").get<int>());
  } catch (const std::exception& e) {
    throw format_error(path + ": invalid descriptor: " + e.what());
  }
  if (desc.contains("param_count") &&
      desc["param_count"].get<std::size_t>() != params.desc.param_count) {
    throw format_error(path + ": descriptor param_count disagrees with architecture");
  }
  const std::size_t blob_off = 8 + json_len;
  const std::size_t expected = params.desc.param_count * 4;
  if (bytes.size() - blob_off != expected) {
    throw format_error(path + ": parameter blob size " + std::to_string(bytes.size() - blob_off) +
                       " != expected " + std::to_string(expected) + " at offset " +
                       std::to_string(blob_off));
  }
  params.values.resize(params.desc.param_count);
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    params.values[i] = read_f32_le(bytes.data() + blob_off + i * 4);
  }
  return params;
}

}  // namespace handvote
