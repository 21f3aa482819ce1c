#pragma once

#include <cstdint>
#include <vector>

#include "deconvparse/label_map.hpp"
#include "deconvparse/pooling.hpp"
#include "deconvparse/tensor.hpp"

namespace deconvparse {

struct ConvStageParams {
  Tensor filters;  // [K_out, K_in, kh, kw]
  Tensor biases;   // [K_out]
  PoolRegion pool{1, 2, 2};

  std::size_t maps_out() const { return filters.extent(0); }
  std::size_t maps_in() const { return filters.extent(1); }
  std::size_t kernel() const { return filters.extent(2); }
};

struct ConvStageActs {
  Tensor activations;  // post-ReLU, pre-pool [K_out, H', W']
  Tensor pooled;
  SwitchSet switches;
};

Tensor relu(const Tensor& x);

// maxpool(relu(correlate_valid(x, filters) + bias)). Post-ReLU activations
// are nonnegative, so magnitude pooling coincides with plain max pooling.
ConvStageActs conv_stage_forward(const Tensor& x, const ConvStageParams& p);

struct ConvStageGrads {
  Tensor d_filters;
  Tensor d_biases;
  Tensor d_input;  // empty unless requested
};

ConvStageGrads conv_stage_backward(const Tensor& x, const ConvStageParams& p,
                                   const ConvStageActs& acts,
                                   const Tensor& d_pooled,
                                   bool need_input_grad);

// Dropout probabilities per site.
struct DropoutSpec {
  double input = 0.2;
  double hidden = 0.5;
  double fc = 0.6975;
};

// Keep/drop mask; 1 = keep. Deterministic in the seed.
std::vector<std::uint8_t> dropout_mask(std::size_t n, double rate,
                                       std::uint64_t seed);

// Inverted dropout: at training time each element is zeroed with probability
// `rate` and survivors are scaled by 1/(1-rate); at evaluation time the
// exact identity. rate must be in [0, 1).
Tensor dropout_apply(const Tensor& x, double rate, std::uint64_t seed,
                     bool training);

enum class HeadMode { softmax, sigmoid };

// Per-pixel linear classifier over flattened features: one output unit per
// (pixel, class) in softmax mode, one per pixel in sigmoid mode.
struct HeadParams {
  HeadMode mode = HeadMode::softmax;
  std::size_t patch_h = 0;
  std::size_t patch_w = 0;
  std::size_t classes = 0;
  Tensor weights;  // [units, feature_dim]
  Tensor biases;   // [units]

  std::size_t units() const {
    return mode == HeadMode::softmax ? patch_h * patch_w * classes
                                     : patch_h * patch_w;
  }
  std::size_t feature_dim() const { return weights.extent(1); }
};

// Weights and biases start at zero; per-unit softmax regression is convex,
// so no symmetry breaking is needed.
HeadParams make_head(HeadMode mode, std::size_t patch_h, std::size_t patch_w,
                     std::size_t classes, std::size_t feature_dim);

// Full forward pass. Output is [patch_h, patch_w, C]: a probability simplex
// per pixel in softmax mode; {1-s, s} per pixel in sigmoid mode (C == 2).
Tensor head_forward(const Tensor& features, const HeadParams& p);

// Mean over pixels of -ln(pred[pixel, target]), probabilities clamped to
// [1e-12, 1]. pred is [ph, pw, C]; target labels must be < C.
double cross_entropy_loss(const Tensor& pred, const LabelMap& target);

// Softmax cross entropy from logits with the analytic gradient, for
// gradient-checked training paths. logits and d_logits are [ph, pw, C];
// weights (optional, per pixel) scale each pixel's contribution.
double softmax_xent_grad(const Tensor& logits, const LabelMap& target,
                         Tensor& d_logits,
                         const std::vector<double>* pixel_weights = nullptr);

// p <- p - lr * g
void sgd_step(Tensor& params, const Tensor& grads, double learning_rate);

}  // namespace deconvparse
