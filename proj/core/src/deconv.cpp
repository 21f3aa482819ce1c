#include "deconvparse/deconv.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "deconvparse/parallel.hpp"

namespace deconvparse {

namespace {

Tensor map_slice(const Tensor& t3, std::size_t k) {
  const std::size_t h = t3.extent(1), w = t3.extent(2);
  Tensor out({h, w});
  const double* src = t3.data() + k * h * w;
  std::copy(src, src + h * w, out.data());
  return out;
}

// filters[k] as a [maps_in, kh, kw] kernel tensor.
Tensor filter_slice(const FilterBank& bank, std::size_t k) {
  const std::size_t n = bank.slice_size();
  Tensor out({bank.maps_in(), bank.kernel_h(), bank.kernel_w()});
  const double* src = bank.filters.data() + k * n;
  std::copy(src, src + n, out.data());
  return out;
}

}  // namespace

double FilterBank::slice_norm(std::size_t k) const {
  const std::size_t n = slice_size();
  const double* src = filters.data() + k * n;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += src[i] * src[i];
  return std::sqrt(acc);
}

void FilterBank::scale_slice(std::size_t k, double factor) {
  const std::size_t n = slice_size();
  double* dst = filters.data() + k * n;
  for (std::size_t i = 0; i < n; ++i) dst[i] *= factor;
}

std::vector<double> FilterBank::normalize_slices(double min_norm) {
  std::vector<double> norms(maps_out());
  for (std::size_t k = 0; k < maps_out(); ++k) {
    const double n = slice_norm(k);
    norms[k] = n;
    if (n >= min_norm) {
      scale_slice(k, 1.0 / n);
    } else {
      // Degenerate slice: reset to a delta kernel so the invariant holds.
      double* dst = filters.data() + k * slice_size();
      std::fill(dst, dst + slice_size(), 0.0);
      dst[0] = 1.0;
      norms[k] = 0.0;
    }
  }
  return norms;
}

FilterBank FilterBank::init_random(std::size_t layer, std::size_t maps_out,
                                   std::size_t maps_in, std::size_t kh,
                                   std::size_t kw, std::uint64_t seed,
                                   double sigma, bool unit_norm) {
  FilterBank bank;
  bank.layer = layer;
  Rng rng(seed);
  bank.filters = Tensor::randn({maps_out, maps_in, kh, kw}, rng, sigma);
  if (unit_norm) bank.normalize_slices();
  return bank;
}

Tensor apply_bank_down(const FilterBank& bank, const Tensor& z) {
  if (z.rank() != 3 || z.extent(0) != bank.maps_out()) {
    throw DimensionError("apply_bank_down: layer " + std::to_string(bank.layer) +
                         " expects " + std::to_string(bank.maps_out()) +
                         " feature maps");
  }
  const std::size_t oh = z.extent(1) + bank.kernel_h() - 1;
  const std::size_t ow = z.extent(2) + bank.kernel_w() - 1;
  Tensor out({bank.maps_in(), oh, ow});
  for (std::size_t k = 0; k < bank.maps_out(); ++k) {
    convolve_full_accum(map_slice(z, k), filter_slice(bank, k), out);
  }
  return out;
}

Tensor apply_bank_up(const FilterBank& bank, const Tensor& signal) {
  if (signal.rank() != 3 || signal.extent(0) != bank.maps_in()) {
    throw DimensionError("apply_bank_up: layer " + std::to_string(bank.layer) +
                         " expects " + std::to_string(bank.maps_in()) +
                         " signal maps");
  }
  const std::size_t zh = signal.extent(1) - bank.kernel_h() + 1;
  const std::size_t zw = signal.extent(2) - bank.kernel_w() + 1;
  Tensor out({bank.maps_out(), zh, zw});
  for (std::size_t k = 0; k < bank.maps_out(); ++k) {
    const Tensor m = correlate_valid(signal, filter_slice(bank, k));
    std::copy(m.data(), m.data() + m.size(), out.data() + k * zh * zw);
  }
  return out;
}

Tensor reconstruct(const Tensor& z_top, std::span<const FilterBank> banks,
                   std::span<const SwitchSet> switches) {
  if (banks.empty()) {
    throw DimensionError("reconstruct: empty bank list");
  }
  if (switches.size() + 1 != banks.size()) {
    throw DimensionError("reconstruct: need one switch set per stage below "
                         "the top layer");
  }
  Tensor t = apply_bank_down(banks.back(), z_top);
  for (std::size_t l = banks.size() - 1; l >= 1; --l) {
    t = unpool(t, switches[l - 1]);
    t = apply_bank_down(banks[l - 1], t);
  }
  return t;
}

Tensor project(const Tensor& y, std::span<const FilterBank> banks,
               std::span<const SwitchSet> switches) {
  if (banks.empty()) {
    throw DimensionError("project: empty bank list");
  }
  if (switches.size() + 1 != banks.size()) {
    throw DimensionError("project: need one switch set per stage below the "
                         "top layer");
  }
  Tensor t = apply_bank_up(banks[0], y);
  for (std::size_t l = 1; l < banks.size(); ++l) {
    t = pool_fixed(t, switches[l - 1]);
    t = apply_bank_up(banks[l], t);
  }
  return t;
}

Tensor shrink(const Tensor& z, double beta) {
  if (beta < 0.0) {
    throw ParameterError("shrink: negative threshold");
  }
  Tensor out = z;
  for (double& x : out.values()) {
    if (x > beta) {
      x -= beta;
    } else if (x < -beta) {
      x += beta;
    } else {
      x = 0.0;
    }
  }
  return out;
}

double layer_cost(const Tensor& y, const LayerState& state,
                  std::span<const FilterBank> banks,
                  const DeconvLayerConfig& cfg) {
  const Tensor yhat = reconstruct(state.z, banks, state.switches);
  if (!yhat.same_shape(y)) {
    throw DimensionError("layer_cost: reconstruction shape mismatch");
  }
  double err = 0.0;
  const double* a = yhat.data();
  const double* b = y.data();
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = a[i] - b[i];
    err += d * d;
  }
  return 0.5 * cfg.lambda * err + state.z.l1_norm();
}

namespace {

// ISTA for the top layer of the prefix banks[0..L-1] with the lower-stage
// switches fixed. Returns the inferred feature maps.
Tensor ista_layer(const Tensor& y, std::span<const FilterBank> banks,
                  std::span<const SwitchSet> below,
                  const DeconvLayerConfig& cfg,
                  const std::vector<std::size_t>& z_shape) {
  LayerState state;
  state.z = Tensor(std::vector<std::size_t>(z_shape));
  state.switches.assign(below.begin(), below.end());

  const double lambda = cfg.lambda;
  double eta = cfg.ista_step > 0.0 ? cfg.ista_step : 1.0 / lambda;
  double cost = layer_cost(y, state, banks, cfg);

  for (std::size_t it = 0; it < cfg.ista_iterations; ++it) {
    Tensor resid = reconstruct(state.z, banks, state.switches);
    resid.add_scaled(y, -1.0);
    const Tensor grad = project(resid, banks, state.switches);

    bool accepted = false;
    LayerState cand;
    cand.switches = state.switches;
    for (int attempt = 0; attempt < 60; ++attempt) {
      Tensor step = state.z;
      step.add_scaled(grad, -eta * lambda);
      cand.z = shrink(step, eta * cfg.shrink_threshold);
      const double cand_cost = layer_cost(y, cand, banks, cfg);
      if (!std::isfinite(cand_cost)) {
        char buf[128];
        std::snprintf(buf, sizeof(buf),
                      "ista_infer: non-finite cost at layer %zu iteration %zu "
                      "(step %g)",
                      banks.size(), it + 1, eta);
        throw NumericalError(buf);
      }
      if (cand_cost <= cost) {
        state.z = std::move(cand.z);
        cost = cand_cost;
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) break;  // no admissible step size left; z is stationary
  }
  return state.z;
}

}  // namespace

LayerState ista_infer(const Tensor& y, std::span<const FilterBank> banks,
                      std::span<const DeconvLayerConfig> cfgs) {
  if (banks.empty() || cfgs.size() != banks.size()) {
    throw DimensionError("ista_infer: need one config per bank");
  }
  if (y.rank() != 3) {
    throw DimensionError("ista_infer: target must be [maps,H,W]");
  }

  LayerState out;
  std::vector<std::size_t> signal_shape = {y.extent(0), y.extent(1),
                                           y.extent(2)};
  for (std::size_t l = 1; l <= banks.size(); ++l) {
    const FilterBank& bank = banks[l - 1];
    if (bank.maps_in() != signal_shape[0] ||
        signal_shape[1] < bank.kernel_h() ||
        signal_shape[2] < bank.kernel_w()) {
      throw DimensionError("ista_infer: bank " + std::to_string(l) +
                           " inconsistent with signal shape");
    }
    const std::vector<std::size_t> z_shape = {
        bank.maps_out(), signal_shape[1] - bank.kernel_h() + 1,
        signal_shape[2] - bank.kernel_w() + 1};
    Tensor z = ista_layer(y, banks.first(l), out.switches, cfgs[l - 1],
                          z_shape);
    if (l < banks.size()) {
      PoolResult pr = pool(z, cfgs[l - 1].pool);
      out.switches.push_back(std::move(pr.switches));
      signal_shape = {pr.pooled.extent(0), pr.pooled.extent(1),
                      pr.pooled.extent(2)};
    } else {
      out.z = std::move(z);
    }
  }
  return out;
}

CgResult cg_solve(const std::function<Tensor(const Tensor&)>& apply_op,
                  const Tensor& b, double tol, std::size_t max_iter,
                  const Tensor* x0, bool probe_symmetry) {
  if (probe_symmetry) {
    Rng rng(0x5ca1ab1eULL);
    Tensor u(std::vector<std::size_t>(b.shape()));
    Tensor v(std::vector<std::size_t>(b.shape()));
    for (double& x : u.values()) x = rng.normal();
    for (double& x : v.values()) x = rng.normal();
    const Tensor au = apply_op(u);
    const Tensor av = apply_op(v);
    const double lhs = au.dot(v);
    const double rhs = u.dot(av);
    const double scale =
        std::sqrt(au.l2_norm_sq() * v.l2_norm_sq()) +
        std::sqrt(u.l2_norm_sq() * av.l2_norm_sq()) + 1e-30;
    if (std::fabs(lhs - rhs) > 1e-8 * scale) {
      throw OperatorError("cg_solve: symmetry probe failed (<Au,v>=" +
                          std::to_string(lhs) + ", <u,Av>=" +
                          std::to_string(rhs) + ")");
    }
  }

  CgResult res;
  const double b_norm = std::sqrt(b.l2_norm_sq());
  if (b_norm == 0.0) {
    res.x = Tensor(std::vector<std::size_t>(b.shape()));
    res.converged = true;
    return res;
  }

  res.x = x0 ? *x0 : Tensor(std::vector<std::size_t>(b.shape()));
  Tensor r = b;
  if (x0) r.add_scaled(apply_op(res.x), -1.0);
  Tensor p = r;
  double rr = r.l2_norm_sq();
  res.relative_residual = std::sqrt(rr) / b_norm;
  if (res.relative_residual <= tol) {
    res.converged = true;
    return res;
  }

  for (std::size_t it = 0; it < max_iter; ++it) {
    const Tensor ap = apply_op(p);
    const double p_ap = p.dot(ap);
    if (p_ap <= 0.0) break;  // hit the null space of a PSD operator
    const double alpha = rr / p_ap;
    res.x.add_scaled(p, alpha);
    r.add_scaled(ap, -alpha);
    const double rr_new = r.l2_norm_sq();
    res.iterations = it + 1;
    res.relative_residual = std::sqrt(rr_new) / b_norm;
    if (res.relative_residual <= tol) {
      res.converged = true;
      return res;
    }
    p.scale(rr_new / rr);
    p.add_scaled(r, 1.0);
    rr = rr_new;
  }
  return res;
}

namespace {

// Adjoint of f -> reconstruct(z; f) at fixed z and switches: pulls an
// image-space signal back to filter space through the sub-stack below the
// layer, then correlates with the feature maps.
void accumulate_filter_adjoint(const Tensor& image_signal,
                               std::span<const FilterBank> banks_below,
                               std::span<const SwitchSet> switches,
                               const Tensor& z, Tensor& acc) {
  Tensor u = image_signal;
  for (std::size_t j = 0; j < banks_below.size(); ++j) {
    u = apply_bank_up(banks_below[j], u);
    u = pool_fixed(u, switches[j]);
  }
  // acc[k][c] += correlate_valid(u[c], z[k])
  const std::size_t maps_out = acc.extent(0), maps_in = acc.extent(1);
  const std::size_t kh = acc.extent(2), kw = acc.extent(3);
  for (std::size_t k = 0; k < maps_out; ++k) {
    const Tensor zk = map_slice(z, k);
    for (std::size_t c = 0; c < maps_in; ++c) {
      const Tensor g = correlate_valid(map_slice(u, c), zk);
      double* dst = acc.data() + (k * maps_in + c) * kh * kw;
      const double* src = g.data();
      for (std::size_t i = 0; i < kh * kw; ++i) dst[i] += src[i];
    }
  }
}

double batch_error(std::span<DeconvTrainSample> batch,
                   std::span<const FilterBank> banks) {
  double err = 0.0;
  for (const DeconvTrainSample& s : batch) {
    Tensor r = reconstruct(s.state->z, banks, s.state->switches);
    r.add_scaled(*s.y, -1.0);
    err += r.l2_norm_sq();
  }
  return err;
}

}  // namespace

FilterUpdateInfo update_filters(std::span<DeconvTrainSample> batch,
                                std::vector<FilterBank>& banks,
                                std::size_t layer,
                                const DeconvLayerConfig& cfg) {
  if (batch.empty()) {
    throw DimensionError("update_filters: empty batch");
  }
  if (layer < 1 || layer > banks.size()) {
    throw DimensionError("update_filters: layer out of range");
  }
  FilterBank& bank = banks[layer - 1];
  const auto below = std::span<const FilterBank>(banks).first(layer - 1);
  std::vector<FilterBank> trial_banks(banks.begin(),
                                      banks.begin() + layer);

  auto forward = [&](const Tensor& f, const DeconvTrainSample& s) {
    trial_banks[layer - 1].filters = f;
    return reconstruct(s.state->z, trial_banks, s.state->switches);
  };

  auto apply_normal = [&](const Tensor& f) {
    Tensor acc(std::vector<std::size_t>(bank.filters.shape()));
    for (const DeconvTrainSample& s : batch) {
      const Tensor yhat = forward(f, s);
      accumulate_filter_adjoint(yhat, below, s.state->switches, s.state->z,
                                acc);
    }
    return acc;
  };

  Tensor rhs(std::vector<std::size_t>(bank.filters.shape()));
  for (const DeconvTrainSample& s : batch) {
    accumulate_filter_adjoint(*s.y, below, s.state->switches, s.state->z,
                              rhs);
  }

  FilterUpdateInfo info;
  {
    const auto current = std::span<const FilterBank>(banks).first(layer);
    info.error_before = batch_error(batch, current);
  }

  const CgResult cg = cg_solve(apply_normal, rhs, cfg.cg_tolerance,
                               cfg.cg_max_iterations, &bank.filters);
  info.cg_converged = cg.converged;
  info.cg_iterations = cg.iterations;

  // Warm-started CG decreases the least-squares objective monotonically, so
  // a truncated solve is still a valid descent step. The previous filters
  // are retained only when the iterate is unusable (non-finite values or an
  // increased batch error).
  bool usable = true;
  for (double v : cg.x.values()) {
    if (!std::isfinite(v)) {
      usable = false;
      break;
    }
  }
  if (usable) {
    const Tensor previous = std::move(bank.filters);
    bank.filters = cg.x;
    const auto current = std::span<const FilterBank>(banks).first(layer);
    info.error_after = batch_error(batch, current);
    if (info.error_after > info.error_before * (1.0 + 1e-12) + 1e-12) {
      bank.filters = previous;
      usable = false;
    }
  }
  if (!usable) {
    info.error_after = info.error_before;
    return info;  // previous filters retained
  }
  info.applied = true;

  if (cfg.unit_normalize) {
    const std::vector<double> norms = bank.normalize_slices();
    // Rescale feature maps inversely so reconstructions are unchanged.
    // Positive scaling also keeps pooling argmax positions valid.
    const std::size_t maps = bank.maps_out();
    for (const DeconvTrainSample& s : batch) {
      Tensor& z = s.state->z;
      const std::size_t plane = z.extent(1) * z.extent(2);
      for (std::size_t k = 0; k < maps; ++k) {
        if (norms[k] <= 0.0) continue;
        double* zp = z.data() + k * plane;
        for (std::size_t i = 0; i < plane; ++i) zp[i] *= norms[k];
      }
    }
  }
  return info;
}

std::vector<DeconvEpochLog> train_deconv_layer(
    std::span<const Tensor> images, std::vector<FilterBank>& banks,
    std::size_t layer, std::span<const DeconvLayerConfig> cfgs,
    std::size_t epochs, std::uint64_t seed, std::size_t update_batch) {
  if (images.empty()) {
    throw DatasetError("train_deconv_layer: empty image set");
  }
  if (layer < 1 || layer > banks.size() || cfgs.size() < layer) {
    throw DimensionError("train_deconv_layer: layer out of range");
  }

  FilterBank& bank = banks[layer - 1];
  bank = FilterBank::init_random(layer, bank.maps_out(), bank.maps_in(),
                                 bank.kernel_h(), bank.kernel_w(),
                                 Rng::derive(seed, 0x6f00 + layer), 0.01,
                                 cfgs[layer - 1].unit_normalize);

  Rng rng(Rng::derive(seed, 0xba7c4 + layer));
  const auto stack = std::span<const FilterBank>(banks).first(layer);
  const auto stack_cfgs = cfgs.first(layer);

  std::vector<DeconvEpochLog> log;
  std::vector<LayerState> states(images.size());
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    std::vector<double> costs(images.size());
    std::vector<double> nnz(images.size());
    parallel_for(images.size(), [&](std::size_t i) {
      states[i] = ista_infer(images[i], stack, stack_cfgs);
      LayerState& st = states[i];
      costs[i] = layer_cost(images[i], st, stack, cfgs[layer - 1]);
      nnz[i] = st.z.size() == 0
                   ? 0.0
                   : static_cast<double>(st.z.count_nonzero()) /
                         static_cast<double>(st.z.size());
    });

    DeconvEpochLog row;
    for (std::size_t i = 0; i < images.size(); ++i) {
      row.mean_cost += costs[i];
      row.nnz_fraction += nnz[i];
    }
    row.mean_cost /= static_cast<double>(images.size());
    row.nnz_fraction /= static_cast<double>(images.size());

    // Seeded subsample for the filter system when the set is large.
    std::vector<std::size_t> chosen(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) chosen[i] = i;
    if (update_batch > 0 && update_batch < images.size()) {
      for (std::size_t i = 0; i < update_batch; ++i) {
        std::swap(chosen[i], chosen[i + rng.index(images.size() - i)]);
      }
      chosen.resize(update_batch);
    }
    std::vector<DeconvTrainSample> samples;
    samples.reserve(chosen.size());
    for (std::size_t i : chosen) {
      samples.push_back({&images[i], &states[i]});
    }
    const FilterUpdateInfo info =
        update_filters(samples, banks, layer, cfgs[layer - 1]);
    row.update_applied = info.applied;
    log.push_back(row);
  }
  return log;
}

}  // namespace deconvparse
