#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "deconvparse/cnn.hpp"
#include "deconvparse/label_map.hpp"
#include "deconvparse/tensor.hpp"

namespace deconvparse {

// Disjoint m x n partition of the label image. Patch extents divide the
// label extents exactly; non-divisible shapes are rejected.
struct PatchGrid {
  std::size_t rows = 1;
  std::size_t cols = 1;
  std::size_t label_h = 0;
  std::size_t label_w = 0;

  std::size_t patch_h() const { return label_h / rows; }
  std::size_t patch_w() const { return label_w / cols; }
  std::size_t count() const { return rows * cols; }
};

PatchGrid make_grid(std::size_t label_h, std::size_t label_w, std::size_t m,
                    std::size_t n);

// Row-major patch extraction / exact inverse tiling.
std::vector<LabelMap> split_labels(const LabelMap& labels,
                                   const PatchGrid& grid);
LabelMap assemble_labels(const std::vector<LabelMap>& patches,
                         const PatchGrid& grid);

// Tiles per-patch probability maps [patch_h, patch_w, C] back into a full
// [C, H, W] volume (row-major patch order).
Tensor assemble_prediction(const std::vector<Tensor>& patch_outputs,
                           const PatchGrid& grid);

struct HeadTrainConfig {
  HeadMode mode = HeadMode::softmax;
  std::size_t classes = 0;
  std::size_t epochs = 10;
  double learning_rate = 0.005;
  double dropout_fc = 0.6975;
  std::size_t pixels_per_step = 64;
  bool balance_classes = true;
  std::uint64_t seed = 0;
};

struct HeadTrainLog {
  std::vector<double> epoch_mean_loss;
};

// Trains the classifier head of one patch on full-image features. The RNG
// stream derives from (seed, patch index), so results do not depend on the
// order heads are trained in. Target pixels are resampled with balanced
// class frequencies within the patch. epoch_losses, when given, receives
// the per-epoch mean sampled loss.
HeadParams train_patch_head(std::span<const Tensor> features,
                            std::span<const LabelMap> labels,
                            const PatchGrid& grid, std::size_t patch,
                            const HeadTrainConfig& cfg,
                            std::vector<double>* epoch_losses = nullptr);

// One head per patch, every head consuming every image's full feature
// vector and predicting only its own patch.
std::vector<HeadParams> train_multipatch(std::span<const Tensor> features,
                                         std::span<const LabelMap> labels,
                                         const PatchGrid& grid,
                                         const HeadTrainConfig& cfg,
                                         HeadTrainLog* log = nullptr);

}  // namespace deconvparse
