#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deconvparse/cnn.hpp"
#include "deconvparse/data.hpp"
#include "deconvparse/deconv.hpp"
#include "deconvparse/metrics.hpp"
#include "deconvparse/multipatch.hpp"

namespace deconvparse {

struct ConvStageSpec {
  std::size_t maps = 12;
  std::size_t kernel = 5;
  PoolRegion pool{1, 2, 2};
};

struct DeconvLayerSpec {
  std::size_t maps = 24;
  std::size_t kernel = 3;
  PoolRegion pool{2, 1, 1};
};

enum class DeconvTarget { conv_features, raw_image };

struct NetworkConfig {
  std::size_t classes = 5;
  std::size_t channels = 3;
  std::size_t image_h = 64;
  std::size_t image_w = 64;

  std::vector<ConvStageSpec> conv_stages;          // supervised base
  std::vector<DeconvLayerSpec> deconv_layers;      // unsupervised stack
  std::vector<DeconvLayerSpec> replacement_stages; // realized as plain conv

  HeadMode head_mode = HeadMode::softmax;
  std::size_t grid_m = 4;
  std::size_t grid_n = 4;

  std::uint64_t seed = 0;
  std::size_t epochs_conv = 5;
  std::size_t epochs_deconv = 3;
  std::size_t epochs_head = 10;
  double lr_conv = 0.01;
  double lr_head = 0.005;
  DropoutSpec dropout;

  double deconv_lambda = 1.0;
  double shrink_beta = 0.05;
  std::size_t ista_train_iters = 20;
  std::size_t ista_eval_iters = 40;
  double cg_tol = 1e-6;
  std::size_t cg_max_iters = 200;
  std::size_t filter_update_batch = 48;
  bool unit_normalize = true;
  DeconvTarget deconv_target = DeconvTarget::conv_features;

  std::size_t pixels_per_step = 64;
  bool balance_classes = true;
  bool trunk_shared = true;

  std::size_t lcn_window = 5;  // 0 disables local contrast normalization
  bool standardize_per_image = false;

  // Two conv stages, three deconv layers, per-pixel softmax over a 4x4 grid.
  static NetworkConfig defaults();
};

struct TrainLogRow {
  std::string stage;  // conv_sgd | deconv_ista | head_sgd
  std::size_t epoch = 0;
  std::size_t layer = 0;  // deconv layer index, 0 otherwise
  double mean_cost = 0.0;
  double nnz_fraction = 0.0;
  bool has_nnz = false;
};

// Convolutional stages (base then replacement) plus the deconv stack.
struct Trunk {
  std::vector<ConvStageParams> conv;
  std::vector<FilterBank> deconv;
  // Per-map statistics of the deconv reconstruction target, recorded during
  // unsupervised training so that inference sees the same scaling.
  ChannelStats target_stats;
};

struct Network {
  NetworkConfig cfg;
  // One shared trunk by default; one per patch when cfg.trunk_shared is
  // off (every patch then owns a full network, as in the per-patch
  // parameter accounting).
  std::vector<Trunk> trunks;
  std::vector<DeconvLayerConfig> deconv_cfgs;
  PatchGrid grid;
  std::vector<HeadParams> heads;
  ChannelStats input_stats;  // recorded by training, applied by predict
  std::vector<TrainLogRow> log;
  std::vector<std::string> stages_run;
  double train_eval_pixel_acc = -1.0;

  const Trunk& trunk_for(std::size_t patch) const {
    return trunks[cfg.trunk_shared ? 0 : patch];
  }
};

// Initializes all parameters from cfg.seed and validates that the layer
// shapes chain from the input geometry down to the head features.
Network build_network(const NetworkConfig& cfg);

std::size_t parameter_count(const Network& net);
// Stage count including the fully connected layer and the classifier.
std::size_t layer_count(const Network& net);

// Dataset preprocessing: standardization (dataset-level unless
// cfg.standardize_per_image) followed by LCN when cfg.lcn_window >= 3.
ChannelStats preprocess_dataset(Dataset& ds, const NetworkConfig& cfg);
void preprocess_with(Dataset& ds, const NetworkConfig& cfg,
                     const ChannelStats& stats);
void preprocess_image(Tensor& image, const NetworkConfig& cfg,
                      const ChannelStats& stats);

// Feature vector of one preprocessed image under one trunk: conv stages
// forward, then ISTA inference through the deconv stack (fixed filters,
// cfg.ista_eval_iters) and pooling of the top feature maps.
Tensor forward_features(const Network& net, const Trunk& trunk,
                        const Tensor& image);
inline Tensor forward_features(const Network& net, const Tensor& image) {
  return forward_features(net, net.trunks[0], image);
}

// The three-stage schedule on a raw dataset (pixels in [0,1]):
//   1. conv stages + a throwaway per-cell softmax head, by SGD;
//   2. deconv layers bottom-up, unsupervised, by ISTA + CG filter updates;
//   3. per-patch heads on frozen features, by SGD.
// Records the stage sequence, the training log, and the train-set pixel
// accuracy of the final model.
void train_sequential(Network& net, const Dataset& raw_train);

struct Prediction {
  LabelMap labels;
  Tensor prob;  // [C, H, W]; per-pixel probability simplex
};

Prediction predict(const Network& net, const Tensor& raw_image);

// Confusion + accuracies over a raw test set; when classes == 2 the binary
// block is computed from the per-pixel class-1 probabilities.
MetricsReport evaluate(const Network& net, const Dataset& raw_test);

// Named architecture variants: "Deconv-N" keeps the first N-B deconv layers
// (B = base conv stage count), "CNN-B" removes them all, and "CNN-N" (N > B)
// replaces them with plain convolutional stages of identical geometry.
NetworkConfig make_variant_config(const NetworkConfig& base,
                                  const std::string& variant);
std::vector<std::string> ablation_variants(const NetworkConfig& base,
                                           const std::string& mode);

struct AblationRow {
  std::string variant;
  std::uint64_t seed = 0;
  double pixel_acc = 0.0;
  double class_acc = 0.0;
};

// Trains and evaluates every variant of `mode` ("remove" or "replace") for
// every seed. Jobs fan out across the worker pool; row order is fixed as
// (variant-major, seed-minor) regardless of thread count.
std::vector<AblationRow> run_ablation(const NetworkConfig& base,
                                      const Dataset& raw_train,
                                      const Dataset& raw_test,
                                      const std::string& mode,
                                      std::span<const std::uint64_t> seeds);

struct SeedStudyRow {
  std::string variant;
  std::uint64_t seed = 0;
  double pixel_acc = 0.0;
};

struct SeedStudySummary {
  std::string variant;
  double mean = 0.0;
  double variance = 0.0;  // population variance over runs
};

struct SeedStudyResult {
  std::vector<SeedStudyRow> rows;
  std::vector<SeedStudySummary> summary;
};

// n_runs >= 2 trainings per variant with seeds base.seed + 0..n_runs-1.
SeedStudyResult run_seed_study(const NetworkConfig& base,
                               std::span<const std::string> variants,
                               const Dataset& raw_train,
                               const Dataset& raw_test, std::size_t n_runs);

std::string training_log_csv(const Network& net);
std::string ablation_csv(std::span<const AblationRow> rows,
                         const std::string& dataset_name);
std::string seed_study_csv(const SeedStudyResult& result);

// Model persistence: key=value text header, then the parameter tensors as
// consecutive DPTN records in a fixed order.
void save_model(const std::string& path, const Network& net);
Network load_model(const std::string& path);

}  // namespace deconvparse
