#pragma once

#include <functional>
#include <span>
#include <vector>

#include "deconvparse/pooling.hpp"
#include "deconvparse/tensor.hpp"

namespace deconvparse {

// Learned filters of one deconvolutional layer. filters[k][c] is the 2D
// kernel connecting output map k of this layer to input map c of the
// signal below (the image for layer 1, pooled maps otherwise).
struct FilterBank {
  std::size_t layer = 1;  // 1-based position in the stack
  Tensor filters;         // [maps_out, maps_in, kh, kw]

  std::size_t maps_out() const { return filters.extent(0); }
  std::size_t maps_in() const { return filters.extent(1); }
  std::size_t kernel_h() const { return filters.extent(2); }
  std::size_t kernel_w() const { return filters.extent(3); }
  std::size_t slice_size() const {
    return maps_in() * kernel_h() * kernel_w();
  }

  // L2 norm of the whole [maps_in, kh, kw] block of output map k.
  double slice_norm(std::size_t k) const;
  void scale_slice(std::size_t k, double factor);
  // Rescales every slice to unit L2 norm (slices below `min_norm` are
  // reset to a delta kernel instead). Returns the old norms.
  std::vector<double> normalize_slices(double min_norm = 1e-12);

  static FilterBank init_random(std::size_t layer, std::size_t maps_out,
                                std::size_t maps_in, std::size_t kh,
                                std::size_t kw, std::uint64_t seed,
                                double sigma = 0.01, bool unit_norm = true);
};

struct DeconvLayerConfig {
  double lambda = 1.0;       // reconstruction weight
  PoolRegion pool{2, 1, 1};  // this layer's own pooling stage
  std::size_t ista_iterations = 20;
  double ista_step = 0.0;  // 0 = auto (1/lambda), adapted by backtracking
  double shrink_threshold = 0.05;  // beta
  double cg_tolerance = 1e-6;
  std::size_t cg_max_iterations = 200;
  bool unit_normalize = true;
};

// Per-image latent state for a stack of L layers: the top feature maps and
// the switch sets of the L-1 pooling stages below the top.
struct LayerState {
  Tensor z;
  std::vector<SwitchSet> switches;
};

// One filter bank applied top-down: maps [maps_out, zh, zw] feature maps to
// the signal space below, [maps_in, zh+kh-1, zw+kw-1].
Tensor apply_bank_down(const FilterBank& bank, const Tensor& z);
// Exact adjoint: signal [maps_in, H, W] up to [maps_out, H-kh+1, W-kw+1].
Tensor apply_bank_up(const FilterBank& bank, const Tensor& signal);

// Reconstruction operator R_l: alternated convolution and unpooling from the
// top feature maps down to the input signal. banks.size() == L,
// switches.size() == L-1 (stage j switches between layers j and j+1).
// Linear in z_top for fixed switches.
Tensor reconstruct(const Tensor& z_top, std::span<const FilterBank> banks,
                   std::span<const SwitchSet> switches);

// Projection operator R_l^T, the exact adjoint of reconstruct under the same
// fixed switches: <reconstruct(z), y> == <z, project(y)>.
Tensor project(const Tensor& y, std::span<const FilterBank> banks,
               std::span<const SwitchSet> switches);

// Elementwise soft threshold sign(x) * max(|x| - beta, 0).
Tensor shrink(const Tensor& z, double beta);

// (lambda/2) * ||reconstruct(z) - y||^2 + sum_k |z_k|_1
double layer_cost(const Tensor& y, const LayerState& state,
                  std::span<const FilterBank> banks,
                  const DeconvLayerConfig& cfg);

// ISTA inference of the whole stack, bottom-up: layer by layer, each layer's
// feature maps start at zero and take proximal gradient steps
//   z <- shrink(z - eta * lambda * project(reconstruct(z) - y), eta * beta)
// with eta halved until the layer cost does not increase (the step is kept
// only when it does not; at the default eta = 1/lambda the first step from
// z = 0 equals shrink(y-projection, beta) for a unit 1x1 filter). After a
// layer converges its maps are pooled and the switches recorded for the
// layers above. y is the reconstruction target for every layer.
LayerState ista_infer(const Tensor& y, std::span<const FilterBank> banks,
                      std::span<const DeconvLayerConfig> cfgs);

struct CgResult {
  Tensor x;
  bool converged = false;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

// Matrix-free conjugate gradients for symmetric PSD operators. Stops when
// ||Ax - b|| <= tol * ||b||. When probe_symmetry is set, a random-vector
// probe <Au,v> == <u,Av> runs first and a violation throws OperatorError.
CgResult cg_solve(const std::function<Tensor(const Tensor&)>& apply_op,
                  const Tensor& b, double tol, std::size_t max_iter,
                  const Tensor* x0 = nullptr, bool probe_symmetry = true);

struct DeconvTrainSample {
  const Tensor* y = nullptr;
  LayerState* state = nullptr;
};

struct FilterUpdateInfo {
  bool applied = false;
  bool cg_converged = false;
  std::size_t cg_iterations = 0;
  double error_before = 0.0;  // batch reconstruction error, pre-update
  double error_after = 0.0;   // pre-normalization
};

// Least-squares filter update for layer `layer` (1-based): minimizes
// sum_i ||reconstruct(z_i; f) - y_i||^2 over the layer's filters with the
// feature maps and switches held fixed, via CG on the normal equations in
// operator form, warm-started at the current filters. If CG fails to
// converge the previous filters are retained and applied=false. With
// cfg.unit_normalize the slices are rescaled to unit L2 afterwards and the
// batch feature maps rescaled inversely, leaving reconstructions unchanged.
FilterUpdateInfo update_filters(std::span<DeconvTrainSample> batch,
                                std::vector<FilterBank>& banks,
                                std::size_t layer,
                                const DeconvLayerConfig& cfg);

struct DeconvEpochLog {
  double mean_cost = 0.0;
  double nnz_fraction = 0.0;
  bool update_applied = false;
};

// Greedy layer-wise training: per epoch, infer the stack state of every
// image with the current filters, then run one filter update for the layer
// on a seeded subsample of `update_batch` images (0 = whole set). Filters of
// the layer are re-initialized from the seed first; lower banks are fixed.
std::vector<DeconvEpochLog> train_deconv_layer(
    std::span<const Tensor> images, std::vector<FilterBank>& banks,
    std::size_t layer, std::span<const DeconvLayerConfig> cfgs,
    std::size_t epochs, std::uint64_t seed, std::size_t update_batch = 0);

}  // namespace deconvparse
