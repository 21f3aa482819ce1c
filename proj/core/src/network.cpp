#include "deconvparse/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "deconvparse/parallel.hpp"

namespace deconvparse {

namespace {

std::string fmt_g(double v, int digits = 17) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

Tensor flatten(const Tensor& t) {
  Tensor out({t.size()});
  std::copy(t.data(), t.data() + t.size(), out.data());
  return out;
}

struct Geometry {
  std::vector<std::size_t> conv_out;       // after all conv stages
  std::vector<std::size_t> deconv_target;  // signal the deconv stack explains
  std::vector<std::size_t> top_pooled;     // head feature source
  std::size_t feature_dim = 0;
};

void chain_conv(std::vector<std::size_t>& s, const char* what,
                std::size_t maps, std::size_t kernel, PoolRegion pool) {
  if (s[1] < kernel || s[2] < kernel) {
    throw ConfigError(std::string(what) + ": kernel " +
                      std::to_string(kernel) + " exceeds signal " +
                      std::to_string(s[1]) + "x" + std::to_string(s[2]));
  }
  s = {maps, s[1] - kernel + 1, s[2] - kernel + 1};
  if (maps % pool.depth != 0 || s[1] % pool.h != 0 || s[2] % pool.w != 0) {
    throw ConfigError(std::string(what) + ": pooling region does not divide [" +
                      std::to_string(maps) + "," + std::to_string(s[1]) + "," +
                      std::to_string(s[2]) + "]");
  }
  s = {maps / pool.depth, s[1] / pool.h, s[2] / pool.w};
}

Geometry compute_geometry(const NetworkConfig& cfg) {
  Geometry g;
  std::vector<std::size_t> s = {cfg.channels, cfg.image_h, cfg.image_w};
  for (const ConvStageSpec& spec : cfg.conv_stages) {
    chain_conv(s, "conv stage", spec.maps, spec.kernel, spec.pool);
  }
  for (const DeconvLayerSpec& spec : cfg.replacement_stages) {
    chain_conv(s, "replacement stage", spec.maps, spec.kernel, spec.pool);
  }
  g.conv_out = s;

  g.deconv_target = cfg.deconv_target == DeconvTarget::conv_features
                        ? s
                        : std::vector<std::size_t>{cfg.channels, cfg.image_h,
                                                   cfg.image_w};
  std::vector<std::size_t> sig = g.deconv_target;
  for (const DeconvLayerSpec& spec : cfg.deconv_layers) {
    chain_conv(sig, "deconv layer", spec.maps, spec.kernel, spec.pool);
  }
  g.top_pooled = cfg.deconv_layers.empty() ? g.conv_out : sig;
  g.feature_dim = g.top_pooled[0] * g.top_pooled[1] * g.top_pooled[2];
  return g;
}

ConvStageParams init_conv_stage(std::size_t maps_in,
                                const DeconvLayerSpec& spec,
                                std::uint64_t seed) {
  ConvStageParams p;
  Rng rng(seed);
  const double sigma =
      std::sqrt(2.0 / static_cast<double>(maps_in * spec.kernel * spec.kernel));
  p.filters = Tensor::randn({spec.maps, maps_in, spec.kernel, spec.kernel},
                            rng, sigma);
  p.biases = Tensor({spec.maps});
  p.pool = spec.pool;
  return p;
}

std::uint64_t trunk_seed(const NetworkConfig& cfg, std::size_t t) {
  return Rng::derive(cfg.seed, 0x7a00 + t);
}

Trunk init_trunk(const NetworkConfig& cfg, std::uint64_t seed) {
  Trunk trunk;
  std::size_t maps_in = cfg.channels;
  std::size_t stage_id = 0;
  for (const ConvStageSpec& spec : cfg.conv_stages) {
    DeconvLayerSpec as_spec{spec.maps, spec.kernel, spec.pool};
    trunk.conv.push_back(init_conv_stage(
        maps_in, as_spec, Rng::derive(seed, 0xc0 + stage_id)));
    maps_in = spec.maps / spec.pool.depth;
    ++stage_id;
  }
  for (const DeconvLayerSpec& spec : cfg.replacement_stages) {
    trunk.conv.push_back(init_conv_stage(
        maps_in, spec, Rng::derive(seed, 0xc0 + stage_id)));
    maps_in = spec.maps / spec.pool.depth;
    ++stage_id;
  }

  std::size_t sig_maps = cfg.deconv_target == DeconvTarget::conv_features
                             ? maps_in
                             : cfg.channels;
  trunk.target_stats.mean.assign(sig_maps, 0.0);
  trunk.target_stats.stddev.assign(sig_maps, 1.0);
  for (std::size_t l = 0; l < cfg.deconv_layers.size(); ++l) {
    const DeconvLayerSpec& spec = cfg.deconv_layers[l];
    trunk.deconv.push_back(FilterBank::init_random(
        l + 1, spec.maps, sig_maps, spec.kernel, spec.kernel,
        Rng::derive(seed, 0x6f00 + l + 1), 0.01, cfg.unit_normalize));
    sig_maps = spec.maps / spec.pool.depth;
  }
  return trunk;
}

std::uint64_t head_train_seed(const NetworkConfig& cfg) {
  return Rng::derive(cfg.seed, 0x3ead);
}

HeadTrainConfig head_train_config(const NetworkConfig& cfg) {
  HeadTrainConfig hc;
  hc.mode = cfg.head_mode;
  hc.classes = cfg.classes;
  hc.epochs = cfg.epochs_head;
  hc.learning_rate = cfg.lr_head;
  hc.dropout_fc = cfg.dropout.fc;
  hc.pixels_per_step = cfg.pixels_per_step;
  hc.balance_classes = cfg.balance_classes;
  hc.seed = head_train_seed(cfg);
  return hc;
}

}  // namespace

NetworkConfig NetworkConfig::defaults() {
  NetworkConfig cfg;
  cfg.conv_stages = {
      {12, 5, PoolRegion{1, 2, 2}},
      {12, 7, PoolRegion{1, 2, 2}},
  };
  cfg.deconv_layers = {
      {24, 3, PoolRegion{2, 1, 1}},
      {24, 3, PoolRegion{2, 1, 1}},
      {32, 3, PoolRegion{2, 2, 2}},
  };
  return cfg;
}

Network build_network(const NetworkConfig& cfg) {
  if (cfg.classes < 2) {
    throw ConfigError("build_network: need >= 2 classes");
  }
  if (cfg.head_mode == HeadMode::sigmoid && cfg.classes != 2) {
    throw ConfigError("build_network: sigmoid head requires 2 classes");
  }
  const Geometry g = compute_geometry(cfg);

  Network net;
  net.cfg = cfg;
  net.grid = make_grid(cfg.image_h, cfg.image_w, cfg.grid_m, cfg.grid_n);

  const std::size_t n_trunks = cfg.trunk_shared ? 1 : net.grid.count();
  net.trunks.reserve(n_trunks);
  for (std::size_t t = 0; t < n_trunks; ++t) {
    net.trunks.push_back(init_trunk(cfg, trunk_seed(cfg, t)));
  }

  net.deconv_cfgs.clear();
  for (const DeconvLayerSpec& spec : cfg.deconv_layers) {
    DeconvLayerConfig dc;
    dc.lambda = cfg.deconv_lambda;
    dc.pool = spec.pool;
    dc.ista_iterations = cfg.ista_train_iters;
    dc.shrink_threshold = cfg.shrink_beta;
    dc.cg_tolerance = cfg.cg_tol;
    dc.cg_max_iterations = cfg.cg_max_iters;
    dc.unit_normalize = cfg.unit_normalize;
    net.deconv_cfgs.push_back(dc);
  }

  net.heads.reserve(net.grid.count());
  for (std::size_t q = 0; q < net.grid.count(); ++q) {
    net.heads.push_back(make_head(cfg.head_mode, net.grid.patch_h(),
                                  net.grid.patch_w(), cfg.classes,
                                  g.feature_dim));
  }

  net.input_stats.mean.assign(cfg.channels, 0.0);
  net.input_stats.stddev.assign(cfg.channels, 1.0);
  return net;
}

std::size_t parameter_count(const Network& net) {
  std::size_t n = 0;
  for (const Trunk& trunk : net.trunks) {
    for (const ConvStageParams& s : trunk.conv) {
      n += s.filters.size() + s.biases.size();
    }
    for (const FilterBank& b : trunk.deconv) {
      n += b.filters.size();
    }
  }
  for (const HeadParams& h : net.heads) {
    n += h.weights.size() + h.biases.size();
  }
  return n;
}

std::size_t layer_count(const Network& net) {
  return net.trunks[0].conv.size() + net.trunks[0].deconv.size() + 2;
}

ChannelStats preprocess_dataset(Dataset& ds, const NetworkConfig& cfg) {
  ChannelStats stats;
  if (cfg.standardize_per_image) {
    for (SceneSample& s : ds.samples) {
      Dataset one;
      one.classes = ds.classes;
      one.samples.push_back({s.image, LabelMap()});
      const ChannelStats st = compute_channel_stats(one);
      standardize_image(s.image, st);
    }
    stats.mean.assign(ds.channels(), 0.0);
    stats.stddev.assign(ds.channels(), 1.0);
  } else {
    stats = standardize(ds);
  }
  if (cfg.lcn_window >= 3) {
    for (SceneSample& s : ds.samples) {
      s.image = local_contrast_normalize(s.image, cfg.lcn_window);
    }
  }
  return stats;
}

void preprocess_with(Dataset& ds, const NetworkConfig& cfg,
                     const ChannelStats& stats) {
  if (cfg.standardize_per_image) {
    preprocess_dataset(ds, cfg);  // per-image mode ignores train stats
    return;
  }
  standardize_with(ds, stats);
  if (cfg.lcn_window >= 3) {
    for (SceneSample& s : ds.samples) {
      s.image = local_contrast_normalize(s.image, cfg.lcn_window);
    }
  }
}

void preprocess_image(Tensor& image, const NetworkConfig& cfg,
                      const ChannelStats& stats) {
  if (cfg.standardize_per_image) {
    Dataset one;
    one.classes = 2;
    one.samples.push_back({image, LabelMap()});
    const ChannelStats st = compute_channel_stats(one);
    standardize_image(image, st);
  } else {
    standardize_image(image, stats);
  }
  if (cfg.lcn_window >= 3) {
    image = local_contrast_normalize(image, cfg.lcn_window);
  }
}

Tensor forward_features(const Network& net, const Trunk& trunk,
                        const Tensor& image) {
  Tensor x = image;
  for (const ConvStageParams& stage : trunk.conv) {
    x = conv_stage_forward(x, stage).pooled;
  }
  if (trunk.deconv.empty()) {
    return flatten(x);
  }
  Tensor target =
      net.cfg.deconv_target == DeconvTarget::conv_features ? x : image;
  standardize_image(target, trunk.target_stats);
  std::vector<DeconvLayerConfig> eval_cfgs = net.deconv_cfgs;
  for (DeconvLayerConfig& c : eval_cfgs) {
    c.ista_iterations = net.cfg.ista_eval_iters;
  }
  const LayerState state = ista_infer(target, trunk.deconv, eval_cfgs);
  const PoolResult top = pool(state.z, net.deconv_cfgs.back().pool);
  return flatten(top.pooled);
}

// ---------------------------------------------------------------------------
// Stage 1: supervised conv training with a throwaway per-cell softmax head
// ---------------------------------------------------------------------------

namespace {

// Nearest-neighbor label subsampling to the conv output resolution.
LabelMap subsample_labels(const LabelMap& labels, std::size_t ch,
                          std::size_t cw) {
  LabelMap out(ch, cw);
  for (std::size_t u = 0; u < ch; ++u) {
    const std::size_t i = std::min(
        labels.h - 1,
        static_cast<std::size_t>((static_cast<double>(u) + 0.5) *
                                 static_cast<double>(labels.h) /
                                 static_cast<double>(ch)));
    for (std::size_t v = 0; v < cw; ++v) {
      const std::size_t j = std::min(
          labels.w - 1,
          static_cast<std::size_t>((static_cast<double>(v) + 0.5) *
                                   static_cast<double>(labels.w) /
                                   static_cast<double>(cw)));
      out.at(u, v) = labels.at(i, j);
    }
  }
  return out;
}

void apply_mask_scaled(Tensor& t, const std::vector<std::uint8_t>& mask,
                       double scale) {
  double* v = t.data();
  for (std::size_t i = 0; i < t.size(); ++i) {
    v[i] = mask[i] ? v[i] * scale : 0.0;
  }
}

struct Stage1Result {
  std::vector<double> epoch_mean_loss;
};

Stage1Result stage1_train(const NetworkConfig& cfg, Trunk& trunk,
                          const Dataset& ds, std::uint64_t seed) {
  const std::size_t n_stages = trunk.conv.size();
  const std::size_t n_images = ds.size();

  // Conv output geometry from a dry run on the first image.
  std::vector<std::size_t> shape = {ds.samples[0].image.extent(0),
                                    ds.samples[0].image.extent(1),
                                    ds.samples[0].image.extent(2)};
  for (const ConvStageParams& s : trunk.conv) {
    chain_conv(shape, "stage1", s.maps_out(), s.kernel(), s.pool);
  }
  const std::size_t K = shape[0], ch = shape[1], cw = shape[2];
  const std::size_t D = K * ch * cw;
  const std::size_t C = cfg.classes;
  const std::size_t cells = ch * cw;

  // Throwaway linear softmax head at conv resolution, discarded afterwards.
  // One shared bias per class (not per cell): a per-cell bias could encode
  // the spatial prior by itself and let the optimizer kill the features.
  Rng wrng(Rng::derive(seed, 0x57a6e1));
  Tensor W = Tensor::randn({cells * C, D}, wrng, 0.01);
  Tensor b({C});

  // Per-image cell lists by class for balanced target sampling.
  std::vector<LabelMap> small(n_images);
  std::vector<std::vector<std::vector<std::uint32_t>>> by_class(n_images);
  std::vector<std::vector<int>> present(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    small[i] = subsample_labels(ds.samples[i].labels, ch, cw);
    by_class[i].resize(C);
    for (std::size_t px = 0; px < cells; ++px) {
      const int c = small[i].v[px];
      if (c < 0 || static_cast<std::size_t>(c) >= C) {
        throw LabelError("stage1: label out of range");
      }
      by_class[i][static_cast<std::size_t>(c)].push_back(
          static_cast<std::uint32_t>(px));
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (!by_class[i][c].empty()) present[i].push_back(static_cast<int>(c));
    }
  }

  Rng rng(Rng::derive(seed, 0x57a6e2));
  const std::size_t B = cfg.pixels_per_step;
  const double fc_scale = cfg.dropout.fc > 0.0 ? 1.0 / (1.0 - cfg.dropout.fc)
                                               : 1.0;

  Stage1Result result;
  std::vector<std::size_t> order(n_images);
  for (std::size_t i = 0; i < n_images; ++i) order[i] = i;

  for (std::size_t epoch = 0; epoch < cfg.epochs_conv; ++epoch) {
    for (std::size_t i = 0; i + 1 < n_images; ++i) {
      std::swap(order[i], order[i + rng.index(n_images - i)]);
    }
    double epoch_loss = 0.0;

    for (std::size_t oi = 0; oi < n_images; ++oi) {
      const std::size_t img = order[oi];
      const std::uint64_t step_seed =
          Rng::derive(seed, 0x100000 + epoch * n_images + img);

      // ---- forward, with dropout at the input / hidden / fc sites
      std::vector<Tensor> inputs(n_stages);
      std::vector<ConvStageActs> acts(n_stages);
      std::vector<std::vector<std::uint8_t>> hidden_masks(n_stages);
      Tensor x = cfg.dropout.input > 0.0
                     ? dropout_apply(ds.samples[img].image, cfg.dropout.input,
                                     Rng::derive(step_seed, 0), true)
                     : ds.samples[img].image;
      for (std::size_t s = 0; s < n_stages; ++s) {
        inputs[s] = x;
        acts[s] = conv_stage_forward(x, trunk.conv[s]);
        if (s + 1 < n_stages) {
          x = acts[s].pooled;
          if (cfg.dropout.hidden > 0.0) {
            hidden_masks[s] = dropout_mask(x.size(), cfg.dropout.hidden,
                                           Rng::derive(step_seed, 1 + s));
            apply_mask_scaled(x, hidden_masks[s],
                              1.0 / (1.0 - cfg.dropout.hidden));
          }
        }
      }
      const Tensor& feat3 = acts[n_stages - 1].pooled;
      std::vector<std::uint32_t> survivors;
      if (cfg.dropout.fc > 0.0) {
        const std::vector<std::uint8_t> mask =
            dropout_mask(D, cfg.dropout.fc, Rng::derive(step_seed, 100));
        for (std::size_t s = 0; s < D; ++s) {
          if (mask[s]) survivors.push_back(static_cast<std::uint32_t>(s));
        }
      } else {
        survivors.resize(D);
        for (std::size_t s = 0; s < D; ++s) {
          survivors[s] = static_cast<std::uint32_t>(s);
        }
      }
      const double* f = feat3.data();

      // ---- balanced target cells, per-cell softmax over sampled rows
      Tensor d_feat({D});
      double step_loss = 0.0;
      const double inv_b = 1.0 / static_cast<double>(B);
      std::vector<double> logits(C), probs(C);
      struct RowGrad {
        std::uint32_t cell;
        std::vector<double> g;
      };
      std::vector<RowGrad> row_grads;
      row_grads.reserve(B);

      for (std::size_t d = 0; d < B; ++d) {
        std::uint32_t cell;
        if (cfg.balance_classes && !present[img].empty()) {
          const int cls = present[img][rng.index(present[img].size())];
          const auto& bucket = by_class[img][static_cast<std::size_t>(cls)];
          cell = bucket[rng.index(bucket.size())];
        } else {
          cell = static_cast<std::uint32_t>(rng.index(cells));
        }
        const int target = small[img].v[cell];
        const std::size_t u0 = static_cast<std::size_t>(cell) * C;
        for (std::size_t c = 0; c < C; ++c) {
          const double* w = W.data() + (u0 + c) * D;
          double dot = 0.0;
          for (const std::uint32_t s : survivors) dot += w[s] * f[s];
          logits[c] = b[c] + dot * fc_scale;
        }
        double m = logits[0];
        for (std::size_t c = 1; c < C; ++c) m = std::max(m, logits[c]);
        double z = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
          probs[c] = std::exp(logits[c] - m);
          z += probs[c];
        }
        RowGrad rg;
        rg.cell = cell;
        rg.g.resize(C);
        for (std::size_t c = 0; c < C; ++c) {
          probs[c] /= z;
          rg.g[c] = (probs[c] -
                     (static_cast<std::size_t>(target) == c ? 1.0 : 0.0)) *
                    inv_b;
        }
        step_loss -= std::log(std::clamp(
            probs[static_cast<std::size_t>(target)], 1e-12, 1.0));
        // feature gradient with the pre-update weights
        for (std::size_t c = 0; c < C; ++c) {
          const double* w = W.data() + (u0 + c) * D;
          const double g = rg.g[c] * fc_scale;
          for (const std::uint32_t s : survivors) d_feat[s] += g * w[s];
        }
        row_grads.push_back(std::move(rg));
      }
      step_loss *= inv_b;
      if (!std::isfinite(step_loss)) {
        throw NumericalError("stage1: non-finite loss at epoch " +
                             std::to_string(epoch + 1) + ", image " +
                             std::to_string(img));
      }
      epoch_loss += step_loss;

      // ---- head update
      for (const RowGrad& rg : row_grads) {
        const std::size_t u0 = static_cast<std::size_t>(rg.cell) * C;
        for (std::size_t c = 0; c < C; ++c) {
          double* w = W.data() + (u0 + c) * D;
          b[c] -= cfg.lr_conv * rg.g[c];
          const double step = cfg.lr_conv * rg.g[c] * fc_scale;
          for (const std::uint32_t s : survivors) w[s] -= step * f[s];
        }
      }

      // ---- backprop into the conv stages
      Tensor g({K, ch, cw});
      std::copy(d_feat.data(), d_feat.data() + D, g.data());
      for (std::size_t s = n_stages; s-- > 0;) {
        ConvStageGrads grads = conv_stage_backward(
            inputs[s], trunk.conv[s], acts[s], g, /*need_input_grad=*/s > 0);
        sgd_step(trunk.conv[s].filters, grads.d_filters, cfg.lr_conv);
        sgd_step(trunk.conv[s].biases, grads.d_biases, cfg.lr_conv);
        if (s > 0) {
          g = std::move(grads.d_input);
          if (!hidden_masks[s - 1].empty()) {
            apply_mask_scaled(g, hidden_masks[s - 1],
                              1.0 / (1.0 - cfg.dropout.hidden));
          }
        }
      }
    }
    result.epoch_mean_loss.push_back(epoch_loss /
                                     static_cast<double>(n_images));
  }
  return result;
}

}  // namespace

void train_sequential(Network& net, const Dataset& raw_train) {
  const NetworkConfig& cfg = net.cfg;
  if (raw_train.samples.empty()) {
    throw DatasetError("train_sequential: empty training set");
  }
  if (raw_train.classes != cfg.classes) {
    throw DatasetError("train_sequential: dataset has " +
                       std::to_string(raw_train.classes) +
                       " classes, network expects " +
                       std::to_string(cfg.classes));
  }
  const Tensor& first = raw_train.samples[0].image;
  if (first.extent(0) != cfg.channels || first.extent(1) != cfg.image_h ||
      first.extent(2) != cfg.image_w) {
    throw DimensionError("train_sequential: dataset geometry mismatch");
  }

  Dataset ds = raw_train;
  net.input_stats = preprocess_dataset(ds, cfg);
  net.log.clear();
  net.stages_run.clear();

  const std::size_t n_images = ds.size();
  std::vector<const LabelMap*> label_ptrs(n_images);
  std::vector<LabelMap> labels(n_images);
  for (std::size_t i = 0; i < n_images; ++i) {
    labels[i] = ds.samples[i].labels;
    label_ptrs[i] = &labels[i];
  }

  for (std::size_t t = 0; t < net.trunks.size(); ++t) {
    Trunk& trunk = net.trunks[t];
    const std::uint64_t tseed = trunk_seed(cfg, t);
    const bool record = t == 0;

    // Stage 1: conv stages by SGD on pixel-wise cross entropy.
    if (!trunk.conv.empty() && cfg.epochs_conv > 0) {
      const Stage1Result s1 = stage1_train(cfg, trunk, ds,
                                           Rng::derive(tseed, 0x51));
      if (record) {
        net.stages_run.push_back("conv_sgd");
        for (std::size_t e = 0; e < s1.epoch_mean_loss.size(); ++e) {
          net.log.push_back({"conv_sgd", e + 1, 0, s1.epoch_mean_loss[e],
                             0.0, false});
        }
      }
    }

    // Stage 2: deconv layers, bottom-up, unsupervised.
    if (!trunk.deconv.empty() && cfg.epochs_deconv > 0) {
      std::vector<Tensor> targets(n_images);
      parallel_for(n_images, [&](std::size_t i) {
        if (cfg.deconv_target == DeconvTarget::conv_features) {
          Tensor x = ds.samples[i].image;
          for (const ConvStageParams& stage : trunk.conv) {
            x = conv_stage_forward(x, stage).pooled;
          }
          targets[i] = std::move(x);
        } else {
          targets[i] = ds.samples[i].image;
        }
      });
      // Standardize the reconstruction target per map so the sparsity
      // penalty acts on a consistent scale; the statistics travel with the
      // trunk for inference.
      {
        Dataset wrap;
        wrap.classes = cfg.classes;
        for (Tensor& t : targets) {
          wrap.samples.push_back({std::move(t), LabelMap()});
        }
        trunk.target_stats = standardize(wrap);
        for (std::size_t i = 0; i < n_images; ++i) {
          targets[i] = std::move(wrap.samples[i].image);
        }
      }
      for (std::size_t l = 1; l <= trunk.deconv.size(); ++l) {
        const std::vector<DeconvEpochLog> rows = train_deconv_layer(
            targets, trunk.deconv, l, net.deconv_cfgs, cfg.epochs_deconv,
            Rng::derive(tseed, 0xdc0 + l), cfg.filter_update_batch);
        if (record) {
          net.stages_run.push_back("deconv_ista");
          for (std::size_t e = 0; e < rows.size(); ++e) {
            net.log.push_back({"deconv_ista", e + 1, l, rows[e].mean_cost,
                               rows[e].nnz_fraction, true});
          }
        }
      }
    }
  }

  // Stage 3: per-patch heads on frozen features.
  std::vector<std::vector<Tensor>> features(net.trunks.size());
  for (std::size_t t = 0; t < net.trunks.size(); ++t) {
    features[t].resize(n_images);
    parallel_for(n_images, [&](std::size_t i) {
      features[t][i] =
          forward_features(net, net.trunks[t], ds.samples[i].image);
    });
  }

  const HeadTrainConfig hc = head_train_config(cfg);
  HeadTrainLog hlog;
  if (cfg.trunk_shared) {
    net.heads = train_multipatch(features[0], labels, net.grid, hc, &hlog);
  } else {
    std::vector<std::vector<double>> losses(net.grid.count());
    parallel_for(net.grid.count(), [&](std::size_t q) {
      net.heads[q] = train_patch_head(features[q], labels, net.grid, q, hc,
                                      &losses[q]);
    });
    hlog.epoch_mean_loss.assign(cfg.epochs_head, 0.0);
    for (std::size_t e = 0; e < cfg.epochs_head; ++e) {
      for (std::size_t q = 0; q < net.grid.count(); ++q) {
        hlog.epoch_mean_loss[e] += losses[q][e];
      }
      hlog.epoch_mean_loss[e] /= static_cast<double>(net.grid.count());
    }
  }
  net.stages_run.push_back("head_sgd");
  for (std::size_t e = 0; e < hlog.epoch_mean_loss.size(); ++e) {
    net.log.push_back({"head_sgd", e + 1, 0, hlog.epoch_mean_loss[e], 0.0,
                       false});
  }
  for (double loss : hlog.epoch_mean_loss) {
    if (!std::isfinite(loss)) {
      throw NumericalError("train_sequential: non-finite head loss");
    }
  }

  // Train-set accuracy of the final model, reused as the stored validation
  // metric (features are already cached).
  ConfusionMatrix cm(cfg.classes);
  std::vector<Tensor> patch_probs(net.grid.count());
  for (std::size_t i = 0; i < n_images; ++i) {
    for (std::size_t q = 0; q < net.grid.count(); ++q) {
      const std::size_t t = cfg.trunk_shared ? 0 : q;
      patch_probs[q] = head_forward(features[t][i], net.heads[q]);
    }
    const Tensor prob = assemble_prediction(patch_probs, net.grid);
    LabelMap pred(net.grid.label_h, net.grid.label_w);
    for (std::size_t r = 0; r < pred.h; ++r) {
      for (std::size_t c = 0; c < pred.w; ++c) {
        int best = 0;
        double best_p = prob.at3(0, r, c);
        for (std::size_t k = 1; k < cfg.classes; ++k) {
          if (prob.at3(k, r, c) > best_p) {
            best_p = prob.at3(k, r, c);
            best = static_cast<int>(k);
          }
        }
        pred.at(r, c) = best;
      }
    }
    cm.add(confusion_matrix(pred, labels[i], cfg.classes));
  }
  net.train_eval_pixel_acc = accuracy_metrics(cm).pixel_acc;
}

Prediction predict(const Network& net, const Tensor& raw_image) {
  const NetworkConfig& cfg = net.cfg;
  if (raw_image.rank() != 3 || raw_image.extent(0) != cfg.channels ||
      raw_image.extent(1) != cfg.image_h ||
      raw_image.extent(2) != cfg.image_w) {
    throw DimensionError("predict: image geometry does not match network (" +
                         std::to_string(cfg.channels) + "x" +
                         std::to_string(cfg.image_h) + "x" +
                         std::to_string(cfg.image_w) + " expected)");
  }
  Tensor image = raw_image;
  preprocess_image(image, cfg, net.input_stats);

  std::vector<Tensor> patch_probs(net.grid.count());
  if (cfg.trunk_shared) {
    const Tensor feat = forward_features(net, net.trunks[0], image);
    for (std::size_t q = 0; q < net.grid.count(); ++q) {
      patch_probs[q] = head_forward(feat, net.heads[q]);
    }
  } else {
    for (std::size_t q = 0; q < net.grid.count(); ++q) {
      const Tensor feat = forward_features(net, net.trunks[q], image);
      patch_probs[q] = head_forward(feat, net.heads[q]);
    }
  }

  Prediction out;
  out.prob = assemble_prediction(patch_probs, net.grid);
  out.labels = LabelMap(net.grid.label_h, net.grid.label_w);
  for (std::size_t i = 0; i < out.labels.h; ++i) {
    for (std::size_t j = 0; j < out.labels.w; ++j) {
      int best = 0;
      double best_p = out.prob.at3(0, i, j);
      for (std::size_t c = 1; c < cfg.classes; ++c) {
        if (out.prob.at3(c, i, j) > best_p) {
          best_p = out.prob.at3(c, i, j);
          best = static_cast<int>(c);
        }
      }
      out.labels.at(i, j) = best;
    }
  }
  return out;
}

MetricsReport evaluate(const Network& net, const Dataset& raw_test) {
  if (raw_test.samples.empty()) {
    throw DatasetError("evaluate: empty test set");
  }
  const std::size_t n = raw_test.size();
  const std::size_t C = net.cfg.classes;
  std::vector<ConfusionMatrix> partial(n);
  const bool binary = C == 2;
  std::vector<std::vector<double>> scores(binary ? n : 0);
  std::vector<std::vector<int>> bin_labels(binary ? n : 0);

  parallel_for(n, [&](std::size_t i) {
    const Prediction p = predict(net, raw_test.samples[i].image);
    partial[i] = confusion_matrix(p.labels, raw_test.samples[i].labels, C);
    if (binary) {
      const LabelMap& gt = raw_test.samples[i].labels;
      scores[i].reserve(gt.size());
      bin_labels[i].reserve(gt.size());
      for (std::size_t r = 0; r < gt.h; ++r) {
        for (std::size_t c = 0; c < gt.w; ++c) {
          scores[i].push_back(p.prob.at3(1, r, c));
          bin_labels[i].push_back(gt.at(r, c));
        }
      }
    }
  });

  MetricsReport report;
  report.confusion = ConfusionMatrix(C);
  for (const ConfusionMatrix& m : partial) report.confusion.add(m);
  report.accuracy = accuracy_metrics(report.confusion);
  if (binary) {
    std::vector<double> all_scores;
    std::vector<int> all_labels;
    for (std::size_t i = 0; i < n; ++i) {
      all_scores.insert(all_scores.end(), scores[i].begin(), scores[i].end());
      all_labels.insert(all_labels.end(), bin_labels[i].begin(),
                        bin_labels[i].end());
    }
    report.binary = binary_curve_metrics(all_scores, all_labels);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Variants, ablation, seed study
// ---------------------------------------------------------------------------

NetworkConfig make_variant_config(const NetworkConfig& base,
                                  const std::string& variant) {
  const std::size_t B = base.conv_stages.size();
  const std::size_t D = base.deconv_layers.size();
  NetworkConfig cfg = base;

  auto parse_depth = [&](const std::string& prefix) -> long {
    const std::string num = variant.substr(prefix.size());
    char* end = nullptr;
    const long total = std::strtol(num.c_str(), &end, 10);
    if (end == num.c_str() || *end != '\0') {
      throw ConfigError("unknown variant '" + variant + "'");
    }
    return total - static_cast<long>(B);
  };

  if (variant.rfind("Deconv-", 0) == 0) {
    const long j = parse_depth("Deconv-");
    if (j < 1 || static_cast<std::size_t>(j) > D) {
      throw ConfigError("variant '" + variant + "' out of range");
    }
    cfg.deconv_layers.resize(static_cast<std::size_t>(j));
    cfg.replacement_stages.clear();
    return cfg;
  }
  if (variant.rfind("CNN-", 0) == 0) {
    const long j = parse_depth("CNN-");
    if (j < 0 || static_cast<std::size_t>(j) > D) {
      throw ConfigError("variant '" + variant + "' out of range");
    }
    cfg.replacement_stages.assign(base.deconv_layers.begin(),
                                  base.deconv_layers.begin() + j);
    cfg.deconv_layers.clear();
    return cfg;
  }
  throw ConfigError("unknown variant '" + variant + "'");
}

std::vector<std::string> ablation_variants(const NetworkConfig& base,
                                           const std::string& mode) {
  const std::size_t B = base.conv_stages.size();
  const std::size_t D = base.deconv_layers.size();
  std::vector<std::string> out;
  if (mode == "remove") {
    for (std::size_t j = D; j >= 1; --j) {
      out.push_back("Deconv-" + std::to_string(B + j));
    }
  } else if (mode == "replace") {
    for (std::size_t j = D; j >= 1; --j) {
      out.push_back("CNN-" + std::to_string(B + j));
    }
  } else {
    throw ConfigError("ablation mode must be 'remove' or 'replace', got '" +
                      mode + "'");
  }
  out.push_back("CNN-" + std::to_string(B));
  return out;
}

std::vector<AblationRow> run_ablation(const NetworkConfig& base,
                                      const Dataset& raw_train,
                                      const Dataset& raw_test,
                                      const std::string& mode,
                                      std::span<const std::uint64_t> seeds) {
  const std::vector<std::string> variants = ablation_variants(base, mode);
  std::vector<AblationRow> rows(variants.size() * seeds.size());
  parallel_for(rows.size(), [&](std::size_t job) {
    const std::size_t vi = job / seeds.size();
    const std::size_t si = job % seeds.size();
    NetworkConfig cfg = make_variant_config(base, variants[vi]);
    cfg.seed = seeds[si];
    Network net = build_network(cfg);
    train_sequential(net, raw_train);
    const MetricsReport report = evaluate(net, raw_test);
    rows[job] = {variants[vi], seeds[si], report.accuracy.pixel_acc,
                 report.accuracy.class_acc};
  });
  return rows;
}

SeedStudyResult run_seed_study(const NetworkConfig& base,
                               std::span<const std::string> variants,
                               const Dataset& raw_train,
                               const Dataset& raw_test, std::size_t n_runs) {
  if (n_runs < 2) {
    throw ParameterError("run_seed_study: need at least 2 runs");
  }
  SeedStudyResult result;
  result.rows.resize(variants.size() * n_runs);
  parallel_for(result.rows.size(), [&](std::size_t job) {
    const std::size_t vi = job / n_runs;
    const std::size_t run = job % n_runs;
    NetworkConfig cfg = make_variant_config(base, variants[vi]);
    cfg.seed = base.seed + run;
    Network net = build_network(cfg);
    train_sequential(net, raw_train);
    const MetricsReport report = evaluate(net, raw_test);
    result.rows[job] = {variants[vi], cfg.seed, report.accuracy.pixel_acc};
  });

  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    SeedStudySummary s;
    s.variant = variants[vi];
    for (std::size_t run = 0; run < n_runs; ++run) {
      s.mean += result.rows[vi * n_runs + run].pixel_acc;
    }
    s.mean /= static_cast<double>(n_runs);
    for (std::size_t run = 0; run < n_runs; ++run) {
      const double d = result.rows[vi * n_runs + run].pixel_acc - s.mean;
      s.variance += d * d;
    }
    s.variance /= static_cast<double>(n_runs);
    result.summary.push_back(s);
  }
  return result;
}

// ---------------------------------------------------------------------------
// CSV serialization
// ---------------------------------------------------------------------------

std::string training_log_csv(const Network& net) {
  std::string out = "stage,epoch,layer,mean_cost,mean_nnz_fraction\n";
  for (const TrainLogRow& row : net.log) {
    out += row.stage;
    out += "," + std::to_string(row.epoch);
    out += "," + std::to_string(row.layer);
    out += "," + fmt_g(row.mean_cost, 10);
    out += ",";
    if (row.has_nnz) out += fmt_g(row.nnz_fraction, 10);
    out += "\n";
  }
  return out;
}

std::string ablation_csv(std::span<const AblationRow> rows,
                         const std::string& dataset_name) {
  std::string out = "variant,seed,dataset,pixel_acc,class_acc\n";
  for (const AblationRow& r : rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," + dataset_name +
           "," + fmt_g(r.pixel_acc, 10) + "," + fmt_g(r.class_acc, 10) + "\n";
  }
  return out;
}

std::string seed_study_csv(const SeedStudyResult& result) {
  std::string out = "variant,seed,pixel_acc\n";
  for (const SeedStudyRow& r : result.rows) {
    out += r.variant + "," + std::to_string(r.seed) + "," +
           fmt_g(r.pixel_acc, 10) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model persistence
// ---------------------------------------------------------------------------

namespace {

template <typename T>
std::string join_csv(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_same_v<T, double>) {
      out += fmt_g(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

std::vector<std::size_t> parse_size_list(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoull(tok));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

void spec_lists(const std::vector<DeconvLayerSpec>& specs,
                std::vector<std::size_t>& maps, std::vector<std::size_t>& kern,
                std::vector<std::size_t>& pd, std::vector<std::size_t>& ps) {
  for (const DeconvLayerSpec& s : specs) {
    maps.push_back(s.maps);
    kern.push_back(s.kernel);
    pd.push_back(s.pool.depth);
    ps.push_back(s.pool.h);
  }
}

std::vector<DeconvLayerSpec> specs_from_lists(
    const std::vector<std::size_t>& maps, const std::vector<std::size_t>& kern,
    const std::vector<std::size_t>& pd, const std::vector<std::size_t>& ps) {
  if (maps.size() != kern.size() || maps.size() != pd.size() ||
      maps.size() != ps.size()) {
    throw FormatError("model: inconsistent layer spec lists");
  }
  std::vector<DeconvLayerSpec> out;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    out.push_back({maps[i], kern[i], PoolRegion{pd[i], ps[i], ps[i]}});
  }
  return out;
}

}  // namespace

void save_model(const std::string& path, const Network& net) {
  const NetworkConfig& cfg = net.cfg;
  std::ostringstream h;
  h << "deconvparse-model 1\n";
  h << "classes=" << cfg.classes << "\n";
  h << "channels=" << cfg.channels << "\n";
  h << "image_h=" << cfg.image_h << "\n";
  h << "image_w=" << cfg.image_w << "\n";
  h << "head_mode=" << (cfg.head_mode == HeadMode::softmax ? "softmax"
                                                           : "sigmoid")
    << "\n";
  h << "grid_m=" << cfg.grid_m << "\n";
  h << "grid_n=" << cfg.grid_n << "\n";
  h << "seed=" << cfg.seed << "\n";

  std::vector<std::size_t> cm, ck, cp;
  for (const ConvStageSpec& s : cfg.conv_stages) {
    cm.push_back(s.maps);
    ck.push_back(s.kernel);
    cp.push_back(s.pool.h);
  }
  h << "conv_maps=" << join_csv(cm) << "\n";
  h << "conv_kernels=" << join_csv(ck) << "\n";
  h << "conv_pools=" << join_csv(cp) << "\n";

  std::vector<std::size_t> rm, rk, rpd, rps;
  spec_lists(cfg.replacement_stages, rm, rk, rpd, rps);
  h << "replacement_maps=" << join_csv(rm) << "\n";
  h << "replacement_kernels=" << join_csv(rk) << "\n";
  h << "replacement_pool_depth=" << join_csv(rpd) << "\n";
  h << "replacement_pool_spatial=" << join_csv(rps) << "\n";

  std::vector<std::size_t> dm, dk, dpd, dps;
  spec_lists(cfg.deconv_layers, dm, dk, dpd, dps);
  h << "deconv_maps=" << join_csv(dm) << "\n";
  h << "deconv_kernels=" << join_csv(dk) << "\n";
  h << "deconv_pool_depth=" << join_csv(dpd) << "\n";
  h << "deconv_pool_spatial=" << join_csv(dps) << "\n";

  h << "epochs_conv=" << cfg.epochs_conv << "\n";
  h << "epochs_deconv=" << cfg.epochs_deconv << "\n";
  h << "epochs_head=" << cfg.epochs_head << "\n";
  h << "lr_conv=" << fmt_g(cfg.lr_conv) << "\n";
  h << "lr_head=" << fmt_g(cfg.lr_head) << "\n";
  h << "dropout_input=" << fmt_g(cfg.dropout.input) << "\n";
  h << "dropout_hidden=" << fmt_g(cfg.dropout.hidden) << "\n";
  h << "dropout_fc=" << fmt_g(cfg.dropout.fc) << "\n";
  h << "deconv_lambda=" << fmt_g(cfg.deconv_lambda) << "\n";
  h << "shrink_beta=" << fmt_g(cfg.shrink_beta) << "\n";
  h << "ista_train_iters=" << cfg.ista_train_iters << "\n";
  h << "ista_eval_iters=" << cfg.ista_eval_iters << "\n";
  h << "cg_tol=" << fmt_g(cfg.cg_tol) << "\n";
  h << "cg_max_iters=" << cfg.cg_max_iters << "\n";
  h << "filter_update_batch=" << cfg.filter_update_batch << "\n";
  h << "unit_normalize=" << (cfg.unit_normalize ? 1 : 0) << "\n";
  h << "deconv_target="
    << (cfg.deconv_target == DeconvTarget::conv_features ? "conv" : "image")
    << "\n";
  h << "pixels_per_step=" << cfg.pixels_per_step << "\n";
  h << "balance_classes=" << (cfg.balance_classes ? 1 : 0) << "\n";
  h << "trunk_shared=" << (cfg.trunk_shared ? 1 : 0) << "\n";
  h << "lcn_window=" << cfg.lcn_window << "\n";
  h << "standardize_per_image=" << (cfg.standardize_per_image ? 1 : 0) << "\n";
  h << "stats_mean=" << join_csv(net.input_stats.mean) << "\n";
  h << "stats_std=" << join_csv(net.input_stats.stddev) << "\n";
  for (std::size_t t = 0; t < net.trunks.size(); ++t) {
    h << "target_stats_mean_" << t << "="
      << join_csv(net.trunks[t].target_stats.mean) << "\n";
    h << "target_stats_std_" << t << "="
      << join_csv(net.trunks[t].target_stats.stddev) << "\n";
  }
  h << "train_eval_pixel_acc=" << fmt_g(net.train_eval_pixel_acc) << "\n";
  {
    std::string stages;
    for (std::size_t i = 0; i < net.stages_run.size(); ++i) {
      if (i) stages += ",";
      stages += net.stages_run[i];
    }
    h << "stages_run=" << stages << "\n";
  }

  std::size_t n_tensors = 0;
  for (const Trunk& trunk : net.trunks) {
    n_tensors += trunk.conv.size() * 2 + trunk.deconv.size();
  }
  n_tensors += net.heads.size() * 2;
  h << "tensors=" << n_tensors << "\n";
  h << "---\n";

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("save_model: cannot open " + path);
  const std::string header = h.str();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const Trunk& trunk : net.trunks) {
    for (const ConvStageParams& s : trunk.conv) {
      write_tensor(out, s.filters);
      write_tensor(out, s.biases);
    }
    for (const FilterBank& b : trunk.deconv) {
      write_tensor(out, b.filters);
    }
  }
  for (const HeadParams& head : net.heads) {
    write_tensor(out, head.weights);
    write_tensor(out, head.biases);
  }
  if (!out) throw IoError("save_model: write failed for " + path);
}

Network load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("load_model: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "deconvparse-model 1") {
    throw FormatError("load_model: bad model header in " + path);
  }

  std::map<std::string, std::string> kv;
  while (std::getline(in, line)) {
    if (line == "---") break;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError("load_model: malformed header line '" + line + "'");
    }
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) {
      throw FormatError("load_model: missing key '" + std::string(key) + "'");
    }
    return it->second;
  };

  NetworkConfig cfg;
  cfg.classes = std::stoull(get("classes"));
  cfg.channels = std::stoull(get("channels"));
  cfg.image_h = std::stoull(get("image_h"));
  cfg.image_w = std::stoull(get("image_w"));
  cfg.head_mode =
      get("head_mode") == "sigmoid" ? HeadMode::sigmoid : HeadMode::softmax;
  cfg.grid_m = std::stoull(get("grid_m"));
  cfg.grid_n = std::stoull(get("grid_n"));
  cfg.seed = std::stoull(get("seed"));

  {
    const auto cm = parse_size_list(get("conv_maps"));
    const auto ck = parse_size_list(get("conv_kernels"));
    const auto cp = parse_size_list(get("conv_pools"));
    if (cm.size() != ck.size() || cm.size() != cp.size()) {
      throw FormatError("load_model: inconsistent conv stage lists");
    }
    cfg.conv_stages.clear();
    for (std::size_t i = 0; i < cm.size(); ++i) {
      cfg.conv_stages.push_back({cm[i], ck[i], PoolRegion{1, cp[i], cp[i]}});
    }
  }
  cfg.replacement_stages = specs_from_lists(
      parse_size_list(get("replacement_maps")),
      parse_size_list(get("replacement_kernels")),
      parse_size_list(get("replacement_pool_depth")),
      parse_size_list(get("replacement_pool_spatial")));
  cfg.deconv_layers = specs_from_lists(
      parse_size_list(get("deconv_maps")),
      parse_size_list(get("deconv_kernels")),
      parse_size_list(get("deconv_pool_depth")),
      parse_size_list(get("deconv_pool_spatial")));

  cfg.epochs_conv = std::stoull(get("epochs_conv"));
  cfg.epochs_deconv = std::stoull(get("epochs_deconv"));
  cfg.epochs_head = std::stoull(get("epochs_head"));
  cfg.lr_conv = std::stod(get("lr_conv"));
  cfg.lr_head = std::stod(get("lr_head"));
  cfg.dropout.input = std::stod(get("dropout_input"));
  cfg.dropout.hidden = std::stod(get("dropout_hidden"));
  cfg.dropout.fc = std::stod(get("dropout_fc"));
  cfg.deconv_lambda = std::stod(get("deconv_lambda"));
  cfg.shrink_beta = std::stod(get("shrink_beta"));
  cfg.ista_train_iters = std::stoull(get("ista_train_iters"));
  cfg.ista_eval_iters = std::stoull(get("ista_eval_iters"));
  cfg.cg_tol = std::stod(get("cg_tol"));
  cfg.cg_max_iters = std::stoull(get("cg_max_iters"));
  cfg.filter_update_batch = std::stoull(get("filter_update_batch"));
  cfg.unit_normalize = get("unit_normalize") == "1";
  cfg.deconv_target = get("deconv_target") == "image"
                          ? DeconvTarget::raw_image
                          : DeconvTarget::conv_features;
  cfg.pixels_per_step = std::stoull(get("pixels_per_step"));
  cfg.balance_classes = get("balance_classes") == "1";
  cfg.trunk_shared = get("trunk_shared") == "1";
  cfg.lcn_window = std::stoull(get("lcn_window"));
  cfg.standardize_per_image = get("standardize_per_image") == "1";

  Network net = build_network(cfg);
  net.input_stats.mean = parse_double_list(get("stats_mean"));
  net.input_stats.stddev = parse_double_list(get("stats_std"));
  for (std::size_t t = 0; t < net.trunks.size(); ++t) {
    const std::string mk = "target_stats_mean_" + std::to_string(t);
    const std::string sk = "target_stats_std_" + std::to_string(t);
    if (kv.count(mk) && kv.count(sk)) {
      net.trunks[t].target_stats.mean = parse_double_list(kv[mk]);
      net.trunks[t].target_stats.stddev = parse_double_list(kv[sk]);
    }
  }
  net.train_eval_pixel_acc = std::stod(get("train_eval_pixel_acc"));
  {
    std::stringstream ss(get("stages_run"));
    std::string tok;
    net.stages_run.clear();
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) net.stages_run.push_back(tok);
    }
  }

  auto read_into = [&](Tensor& dst, const char* what) {
    Tensor t = read_tensor(in);
    if (!t.same_shape(dst)) {
      throw FormatError(std::string("load_model: shape mismatch for ") +
                        what);
    }
    dst = std::move(t);
  };
  for (Trunk& trunk : net.trunks) {
    for (ConvStageParams& s : trunk.conv) {
      read_into(s.filters, "conv filters");
      read_into(s.biases, "conv biases");
    }
    for (FilterBank& b : trunk.deconv) {
      read_into(b.filters, "deconv filters");
    }
  }
  for (HeadParams& head : net.heads) {
    read_into(head.weights, "head weights");
    read_into(head.biases, "head biases");
  }
  return net;
}

}  // namespace deconvparse
