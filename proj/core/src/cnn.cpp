#include "deconvparse/cnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "deconvparse/rng.hpp"

namespace deconvparse {

namespace {

Tensor map_slice(const Tensor& t3, std::size_t k) {
  const std::size_t h = t3.extent(1), w = t3.extent(2);
  Tensor out({h, w});
  const double* src = t3.data() + k * h * w;
  std::copy(src, src + h * w, out.data());
  return out;
}

Tensor filter_slice(const Tensor& filters, std::size_t k) {
  const std::size_t n = filters.extent(1) * filters.extent(2) *
                        filters.extent(3);
  Tensor out({filters.extent(1), filters.extent(2), filters.extent(3)});
  const double* src = filters.data() + k * n;
  std::copy(src, src + n, out.data());
  return out;
}

}  // namespace

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

ConvStageActs conv_stage_forward(const Tensor& x, const ConvStageParams& p) {
  if (x.rank() != 3 || x.extent(0) != p.maps_in()) {
    throw DimensionError("conv_stage_forward: expected [" +
                         std::to_string(p.maps_in()) + ",H,W] input");
  }
  const std::size_t K = p.maps_out();
  const std::size_t oh = x.extent(1) - p.filters.extent(2) + 1;
  const std::size_t ow = x.extent(2) - p.filters.extent(3) + 1;
  Tensor act({K, oh, ow});
  for (std::size_t k = 0; k < K; ++k) {
    const Tensor m = correlate_valid(x, filter_slice(p.filters, k));
    const double bias = p.biases[k];
    double* dst = act.data() + k * oh * ow;
    const double* src = m.data();
    for (std::size_t i = 0; i < oh * ow; ++i) {
      const double v = src[i] + bias;
      dst[i] = v > 0.0 ? v : 0.0;
    }
  }
  ConvStageActs out;
  PoolResult pr = pool(act, p.pool);
  out.activations = std::move(act);
  out.pooled = std::move(pr.pooled);
  out.switches = std::move(pr.switches);
  return out;
}

ConvStageGrads conv_stage_backward(const Tensor& x, const ConvStageParams& p,
                                   const ConvStageActs& acts,
                                   const Tensor& d_pooled,
                                   bool need_input_grad) {
  if (!d_pooled.same_shape(acts.pooled)) {
    throw DimensionError("conv_stage_backward: pooled gradient shape");
  }
  // Pooling routes the gradient to the argmax positions; ReLU masks it.
  Tensor d_act = unpool(d_pooled, acts.switches);
  {
    const double* a = acts.activations.data();
    double* g = d_act.data();
    for (std::size_t i = 0; i < d_act.size(); ++i) {
      if (a[i] <= 0.0) g[i] = 0.0;
    }
  }

  ConvStageGrads grads;
  const std::size_t K = p.maps_out();
  grads.d_filters = Tensor(std::vector<std::size_t>(p.filters.shape()));
  grads.d_biases = Tensor({K});
  const std::size_t kh = p.filters.extent(2), kw = p.filters.extent(3);
  const std::size_t cin = p.maps_in();
  for (std::size_t k = 0; k < K; ++k) {
    const Tensor gk = map_slice(d_act, k);
    double bsum = 0.0;
    for (double v : gk.values()) bsum += v;
    grads.d_biases[k] = bsum;
    for (std::size_t c = 0; c < cin; ++c) {
      const Tensor gw = correlate_valid(map_slice(x, c), gk);
      double* dst = grads.d_filters.data() + (k * cin + c) * kh * kw;
      const double* src = gw.data();
      for (std::size_t i = 0; i < kh * kw; ++i) dst[i] += src[i];
    }
  }
  if (need_input_grad) {
    grads.d_input = Tensor(std::vector<std::size_t>(x.shape()));
    for (std::size_t k = 0; k < K; ++k) {
      convolve_full_accum(map_slice(d_act, k), filter_slice(p.filters, k),
                          grads.d_input);
    }
  }
  return grads;
}

std::vector<std::uint8_t> dropout_mask(std::size_t n, double rate,
                                       std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ParameterError("dropout: rate must be in [0,1), got " +
                         std::to_string(rate));
  }
  std::vector<std::uint8_t> mask(n, 1);
  if (rate == 0.0) return mask;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i] = rng.uniform() < rate ? 0 : 1;
  }
  return mask;
}

Tensor dropout_apply(const Tensor& x, double rate, std::uint64_t seed,
                     bool training) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ParameterError("dropout: rate must be in [0,1), got " +
                         std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const std::vector<std::uint8_t> mask = dropout_mask(x.size(), rate, seed);
  Tensor out = x;
  const double scale = 1.0 / (1.0 - rate);
  double* v = out.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    v[i] = mask[i] ? v[i] * scale : 0.0;
  }
  return out;
}

HeadParams make_head(HeadMode mode, std::size_t patch_h, std::size_t patch_w,
                     std::size_t classes, std::size_t feature_dim) {
  if (mode == HeadMode::sigmoid && classes != 2) {
    throw ParameterError("make_head: sigmoid mode requires 2 classes");
  }
  HeadParams p;
  p.mode = mode;
  p.patch_h = patch_h;
  p.patch_w = patch_w;
  p.classes = classes;
  p.weights = Tensor({p.units(), feature_dim});
  p.biases = Tensor({p.units()});
  return p;
}

Tensor head_forward(const Tensor& features, const HeadParams& p) {
  if (features.size() != p.feature_dim()) {
    throw DimensionError("head_forward: feature length " +
                         std::to_string(features.size()) + " != " +
                         std::to_string(p.feature_dim()));
  }
  const std::size_t D = p.feature_dim();
  const std::size_t units = p.units();
  std::vector<double> logits(units);
  const double* f = features.data();
  for (std::size_t u = 0; u < units; ++u) {
    const double* w = p.weights.data() + u * D;
    double acc = p.biases[u];
    for (std::size_t i = 0; i < D; ++i) acc += w[i] * f[i];
    logits[u] = acc;
  }

  const std::size_t C = p.classes;
  Tensor out({p.patch_h, p.patch_w, C});
  const std::size_t pixels = p.patch_h * p.patch_w;
  if (p.mode == HeadMode::softmax) {
    for (std::size_t px = 0; px < pixels; ++px) {
      const double* l = logits.data() + px * C;
      double m = l[0];
      for (std::size_t c = 1; c < C; ++c) m = std::max(m, l[c]);
      double z = 0.0;
      for (std::size_t c = 0; c < C; ++c) z += std::exp(l[c] - m);
      for (std::size_t c = 0; c < C; ++c) {
        out[px * C + c] = std::exp(l[c] - m) / z;
      }
    }
  } else {
    for (std::size_t px = 0; px < pixels; ++px) {
      const double s = 1.0 / (1.0 + std::exp(-logits[px]));
      out[px * C + 0] = 1.0 - s;
      out[px * C + 1] = s;
    }
  }
  return out;
}

double cross_entropy_loss(const Tensor& pred, const LabelMap& target) {
  if (pred.rank() != 3 || pred.extent(0) != target.h ||
      pred.extent(1) != target.w) {
    throw DimensionError("cross_entropy_loss: prediction/label shape");
  }
  const std::size_t C = pred.extent(2);
  double loss = 0.0;
  for (std::size_t i = 0; i < target.h; ++i) {
    for (std::size_t j = 0; j < target.w; ++j) {
      const int t = target.at(i, j);
      if (t < 0 || static_cast<std::size_t>(t) >= C) {
        throw LabelError("cross_entropy_loss: label " + std::to_string(t) +
                         " out of range for " + std::to_string(C) +
                         " classes");
      }
      const double q = std::clamp(pred.at3(i, j, static_cast<std::size_t>(t)),
                                  1e-12, 1.0);
      loss -= std::log(q);
    }
  }
  return loss / static_cast<double>(target.size());
}

double softmax_xent_grad(const Tensor& logits, const LabelMap& target,
                         Tensor& d_logits,
                         const std::vector<double>* pixel_weights) {
  if (logits.rank() != 3 || logits.extent(0) != target.h ||
      logits.extent(1) != target.w) {
    throw DimensionError("softmax_xent_grad: logit/label shape");
  }
  const std::size_t C = logits.extent(2);
  const std::size_t pixels = target.size();
  d_logits = Tensor(std::vector<std::size_t>(logits.shape()));
  double loss = 0.0;
  double weight_total = 0.0;
  for (std::size_t px = 0; px < pixels; ++px) {
    const int t = target.v[px];
    if (t < 0 || static_cast<std::size_t>(t) >= C) {
      throw LabelError("softmax_xent_grad: label out of range");
    }
    const double wgt = pixel_weights ? (*pixel_weights)[px] : 1.0;
    weight_total += wgt;
    const double* l = logits.data() + px * C;
    double* g = d_logits.data() + px * C;
    double m = l[0];
    for (std::size_t c = 1; c < C; ++c) m = std::max(m, l[c]);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(l[c] - m);
    for (std::size_t c = 0; c < C; ++c) {
      const double prob = std::exp(l[c] - m) / z;
      g[c] = wgt * (prob - (static_cast<std::size_t>(t) == c ? 1.0 : 0.0));
      if (static_cast<std::size_t>(t) == c) {
        loss -= wgt * std::log(std::clamp(prob, 1e-12, 1.0));
      }
    }
  }
  const double denom = weight_total > 0.0 ? weight_total : 1.0;
  d_logits.scale(1.0 / denom);
  return loss / denom;
}

void sgd_step(Tensor& params, const Tensor& grads, double learning_rate) {
  if (!params.same_shape(grads)) {
    throw DimensionError("sgd_step: parameter/gradient shape mismatch");
  }
  params.add_scaled(grads, -learning_rate);
}

}  // namespace deconvparse
