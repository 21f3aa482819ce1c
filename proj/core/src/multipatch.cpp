#include "deconvparse/multipatch.hpp"

#include <algorithm>
#include <cmath>

#include "deconvparse/errors.hpp"
#include "deconvparse/parallel.hpp"
#include "deconvparse/rng.hpp"

namespace deconvparse {

PatchGrid make_grid(std::size_t label_h, std::size_t label_w, std::size_t m,
                    std::size_t n) {
  if (m < 1 || n < 1) {
    throw GridError("make_grid: grid must be at least 1x1");
  }
  if (label_h == 0 || label_w == 0 || label_h % m != 0 || label_w % n != 0) {
    throw GridError("make_grid: label " + std::to_string(label_h) + "x" +
                    std::to_string(label_w) + " not divisible by grid " +
                    std::to_string(m) + "x" + std::to_string(n));
  }
  return PatchGrid{m, n, label_h, label_w};
}

std::vector<LabelMap> split_labels(const LabelMap& labels,
                                   const PatchGrid& grid) {
  if (labels.h != grid.label_h || labels.w != grid.label_w) {
    throw GridError("split_labels: label shape does not match grid");
  }
  const std::size_t ph = grid.patch_h(), pw = grid.patch_w();
  std::vector<LabelMap> out;
  out.reserve(grid.count());
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      LabelMap patch(ph, pw);
      for (std::size_t i = 0; i < ph; ++i) {
        for (std::size_t j = 0; j < pw; ++j) {
          patch.at(i, j) = labels.at(r * ph + i, c * pw + j);
        }
      }
      out.push_back(std::move(patch));
    }
  }
  return out;
}

LabelMap assemble_labels(const std::vector<LabelMap>& patches,
                         const PatchGrid& grid) {
  if (patches.size() != grid.count()) {
    throw GridError("assemble_labels: expected " +
                    std::to_string(grid.count()) + " patches, got " +
                    std::to_string(patches.size()));
  }
  const std::size_t ph = grid.patch_h(), pw = grid.patch_w();
  LabelMap out(grid.label_h, grid.label_w);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const LabelMap& patch = patches[r * grid.cols + c];
      if (patch.h != ph || patch.w != pw) {
        throw GridError("assemble_labels: patch shape mismatch");
      }
      for (std::size_t i = 0; i < ph; ++i) {
        for (std::size_t j = 0; j < pw; ++j) {
          out.at(r * ph + i, c * pw + j) = patch.at(i, j);
        }
      }
    }
  }
  return out;
}

Tensor assemble_prediction(const std::vector<Tensor>& patch_outputs,
                           const PatchGrid& grid) {
  if (patch_outputs.size() != grid.count()) {
    throw GridError("assemble_prediction: expected " +
                    std::to_string(grid.count()) + " patches, got " +
                    std::to_string(patch_outputs.size()));
  }
  const std::size_t ph = grid.patch_h(), pw = grid.patch_w();
  const std::size_t C = patch_outputs[0].extent(2);
  Tensor out({C, grid.label_h, grid.label_w});
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      const Tensor& patch = patch_outputs[r * grid.cols + c];
      if (patch.rank() != 3 || patch.extent(0) != ph ||
          patch.extent(1) != pw || patch.extent(2) != C) {
        throw GridError("assemble_prediction: patch output shape mismatch");
      }
      for (std::size_t i = 0; i < ph; ++i) {
        for (std::size_t j = 0; j < pw; ++j) {
          for (std::size_t k = 0; k < C; ++k) {
            out.at3(k, r * ph + i, c * pw + j) = patch.at3(i, j, k);
          }
        }
      }
    }
  }
  return out;
}

namespace {

// Per-image pixel lists by class inside one patch.
struct PatchPixels {
  std::vector<std::vector<std::uint32_t>> by_class;  // flat patch index
  std::vector<int> present;
};

PatchPixels index_patch(const LabelMap& patch, std::size_t classes) {
  PatchPixels px;
  px.by_class.resize(classes);
  for (std::size_t i = 0; i < patch.size(); ++i) {
    const int c = patch.v[i];
    if (c < 0 || static_cast<std::size_t>(c) >= classes) {
      throw LabelError("train_multipatch: label out of range");
    }
    px.by_class[static_cast<std::size_t>(c)].push_back(
        static_cast<std::uint32_t>(i));
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (!px.by_class[c].empty()) px.present.push_back(static_cast<int>(c));
  }
  return px;
}

struct SparseFeatures {
  std::vector<std::uint32_t> idx;
  double scale = 1.0;
};

SparseFeatures make_survivors(std::size_t dim, double rate,
                              std::uint64_t seed) {
  SparseFeatures sf;
  if (rate <= 0.0) {
    sf.idx.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) sf.idx[i] = static_cast<std::uint32_t>(i);
    return sf;
  }
  const std::vector<std::uint8_t> mask = dropout_mask(dim, rate, seed);
  sf.scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < dim; ++i) {
    if (mask[i]) sf.idx.push_back(static_cast<std::uint32_t>(i));
  }
  return sf;
}

}  // namespace

HeadParams train_patch_head(std::span<const Tensor> features,
                            std::span<const LabelMap> labels,
                            const PatchGrid& grid, std::size_t q,
                            const HeadTrainConfig& cfg,
                            std::vector<double>* epoch_losses) {
  if (features.size() != labels.size() || features.empty()) {
    throw DatasetError("train_patch_head: feature/label count mismatch");
  }
  if (cfg.classes < 2) {
    throw ParameterError("train_patch_head: need >= 2 classes");
  }
  if (q >= grid.count()) {
    throw GridError("train_patch_head: patch index out of range");
  }
  const std::size_t dim = features[0].size();
  for (const Tensor& f : features) {
    if (f.size() != dim) {
      throw DimensionError("train_patch_head: inconsistent feature lengths");
    }
  }
  const std::size_t n_images = features.size();
  const std::size_t ph = grid.patch_h(), pw = grid.patch_w();
  const std::size_t C = cfg.classes;

  const std::uint64_t head_seed = Rng::derive(cfg.seed, 0x4ead0000 + q);
  HeadParams head = make_head(cfg.mode, ph, pw, C, dim);
  Rng rng(Rng::derive(head_seed, 1));
  {
    // Patch label crops and class indices for this head.
    std::vector<LabelMap> patch_labels(n_images);
    std::vector<PatchPixels> pixels(n_images);
    const std::size_t r0 = (q / grid.cols) * ph;
    const std::size_t c0 = (q % grid.cols) * pw;
    for (std::size_t n = 0; n < n_images; ++n) {
      if (labels[n].h != grid.label_h || labels[n].w != grid.label_w) {
        throw GridError("train_patch_head: label shape does not match grid");
      }
      LabelMap patch(ph, pw);
      for (std::size_t i = 0; i < ph; ++i) {
        for (std::size_t j = 0; j < pw; ++j) {
          patch.at(i, j) = labels[n].at(r0 + i, c0 + j);
        }
      }
      pixels[n] = index_patch(patch, C);
      patch_labels[n] = std::move(patch);
    }

    std::vector<double> head_losses(cfg.epochs, 0.0);
    std::vector<double> logits(C), probs(C);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      double epoch_loss = 0.0;
      std::size_t epoch_draws = 0;
      for (std::size_t n = 0; n < n_images; ++n) {
        const SparseFeatures sf = make_survivors(
            dim, cfg.dropout_fc,
            Rng::derive(head_seed, 0x10000 + epoch * n_images + n));
        const double* f = features[n].data();
        const PatchPixels& px = pixels[n];

        for (std::size_t d = 0; d < cfg.pixels_per_step; ++d) {
          std::size_t flat;
          if (cfg.balance_classes && !px.present.empty()) {
            const int cls = px.present[rng.index(px.present.size())];
            const auto& bucket = px.by_class[static_cast<std::size_t>(cls)];
            flat = bucket[rng.index(bucket.size())];
          } else {
            flat = rng.index(ph * pw);
          }
          const int target = patch_labels[n].v[flat];

          if (cfg.mode == HeadMode::softmax) {
            const std::size_t u0 = flat * C;
            for (std::size_t c = 0; c < C; ++c) {
              const double* w = head.weights.data() + (u0 + c) * dim;
              double dotv = 0.0;
              for (const std::uint32_t s : sf.idx) dotv += w[s] * f[s];
              logits[c] = head.biases[u0 + c] + dotv * sf.scale;
            }
            double m = logits[0];
            for (std::size_t c = 1; c < C; ++c) m = std::max(m, logits[c]);
            double z = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
              probs[c] = std::exp(logits[c] - m);
              z += probs[c];
            }
            for (std::size_t c = 0; c < C; ++c) probs[c] /= z;
            epoch_loss -= std::log(std::clamp(
                probs[static_cast<std::size_t>(target)], 1e-12, 1.0));
            ++epoch_draws;
            for (std::size_t c = 0; c < C; ++c) {
              const double g =
                  probs[c] -
                  (static_cast<std::size_t>(target) == c ? 1.0 : 0.0);
              double* w = head.weights.data() + (u0 + c) * dim;
              head.biases[u0 + c] -= cfg.learning_rate * g;
              const double step = cfg.learning_rate * g * sf.scale;
              for (const std::uint32_t s : sf.idx) {
                w[s] -= step * f[s];
              }
            }
          } else {
            const std::size_t u0 = flat;
            const double* w = head.weights.data() + u0 * dim;
            double dotv = 0.0;
            for (const std::uint32_t s : sf.idx) dotv += w[s] * f[s];
            const double logit = head.biases[u0] + dotv * sf.scale;
            const double p = 1.0 / (1.0 + std::exp(-logit));
            const double y = target ? 1.0 : 0.0;
            epoch_loss -=
                std::log(std::clamp(target ? p : 1.0 - p, 1e-12, 1.0));
            ++epoch_draws;
            const double g = p - y;
            head.biases[u0] -= cfg.learning_rate * g;
            const double step = cfg.learning_rate * g * sf.scale;
            double* wm = head.weights.data() + u0 * dim;
            for (const std::uint32_t s : sf.idx) {
              wm[s] -= step * f[s];
            }
          }
        }
      }
      head_losses[epoch] =
          epoch_draws ? epoch_loss / static_cast<double>(epoch_draws) : 0.0;
    }
    if (epoch_losses) *epoch_losses = std::move(head_losses);
    return head;
  }
}

std::vector<HeadParams> train_multipatch(std::span<const Tensor> features,
                                         std::span<const LabelMap> labels,
                                         const PatchGrid& grid,
                                         const HeadTrainConfig& cfg,
                                         HeadTrainLog* log) {
  const std::size_t n_heads = grid.count();
  std::vector<HeadParams> heads(n_heads);
  std::vector<std::vector<double>> losses(n_heads);

  // Heads train on derived per-patch streams; the order cannot influence
  // any head's parameters, so fanning out is safe.
  parallel_for(n_heads, [&](std::size_t q) {
    heads[q] = train_patch_head(features, labels, grid, q, cfg, &losses[q]);
  });

  if (log) {
    log->epoch_mean_loss.assign(cfg.epochs, 0.0);
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
      for (std::size_t q = 0; q < n_heads; ++q) {
        log->epoch_mean_loss[e] += losses[q][e];
      }
      log->epoch_mean_loss[e] /= static_cast<double>(n_heads);
    }
  }
  return heads;
}

}  // namespace deconvparse
