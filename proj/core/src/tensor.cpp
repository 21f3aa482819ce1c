#include "deconvparse/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace deconvparse {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

// Interprets a rank-2 tensor as a single channel of a rank-3 one.
struct ChannelView {
  std::size_t channels, h, w;
};

ChannelView as_channels(const Tensor& t, const char* what) {
  if (t.rank() == 2) return {1, t.extent(0), t.extent(1)};
  if (t.rank() == 3) return {t.extent(0), t.extent(1), t.extent(2)};
  throw DimensionError(std::string(what) + ": expected rank 2 or 3, got rank " +
                       std::to_string(t.rank()));
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("tensor: shape product " +
                         std::to_string(shape_product(shape_)) +
                         " does not match data length " +
                         std::to_string(data_.size()));
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::randn(std::vector<std::size_t> shape, Rng& rng, double sigma) {
  Tensor t(std::move(shape));
  for (double& x : t.data_) x = sigma * rng.normal();
  return t;
}

void Tensor::fill(double value) {
  for (double& x : data_) x = value;
}

void Tensor::scale(double factor) {
  for (double& x : data_) x *= factor;
}

void Tensor::add_scaled(const Tensor& other, double factor) {
  if (!same_shape(other)) {
    throw DimensionError("add_scaled: shape mismatch");
  }
  const double* src = other.data();
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += factor * src[i];
}

double Tensor::dot(const Tensor& other) const {
  if (!same_shape(other)) {
    throw DimensionError("dot: shape mismatch");
  }
  double acc = 0.0;
  const double* a = data();
  const double* b = other.data();
  for (std::size_t i = 0; i < data_.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double Tensor::l1_norm() const {
  double acc = 0.0;
  for (double x : data_) acc += std::fabs(x);
  return acc;
}

double Tensor::l2_norm_sq() const {
  double acc = 0.0;
  for (double x : data_) acc += x * x;
  return acc;
}

double Tensor::max_abs() const {
  double acc = 0.0;
  for (double x : data_) acc = std::max(acc, std::fabs(x));
  return acc;
}

std::size_t Tensor::count_nonzero() const {
  std::size_t n = 0;
  for (double x : data_) n += (x != 0.0);
  return n;
}

void Tensor::check_finite(const char* what) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      char buf[160];
      std::snprintf(buf, sizeof(buf),
                    "%s: non-finite value %g at flat index %zu", what,
                    data_[i], i);
      throw NumericalError(buf);
    }
  }
}

TensorStats reduce_stats(const Tensor& t) {
  if (t.empty()) {
    throw DimensionError("reduce_stats: empty tensor");
  }
  TensorStats s;
  const double n = static_cast<double>(t.size());
  for (double x : t.values()) {
    s.mean += x;
    s.l1 += std::fabs(x);
    s.l2sq += x * x;
  }
  s.mean /= n;
  double acc = 0.0;
  for (double x : t.values()) {
    const double d = x - s.mean;
    acc += d * d;
  }
  s.variance = acc / n;
  return s;
}

Tensor correlate_valid(const Tensor& input, const Tensor& kernel) {
  const ChannelView in = as_channels(input, "correlate_valid input");
  const ChannelView k = as_channels(kernel, "correlate_valid kernel");
  if (in.channels != k.channels) {
    throw DimensionError("correlate_valid: channel mismatch (" +
                         std::to_string(in.channels) + " vs " +
                         std::to_string(k.channels) + ")");
  }
  if (k.h > in.h || k.w > in.w) {
    throw DimensionError("correlate_valid: kernel larger than input");
  }
  const std::size_t oh = in.h - k.h + 1;
  const std::size_t ow = in.w - k.w + 1;
  Tensor out({oh, ow});
  const double* x = input.data();
  const double* f = kernel.data();
  double* o = out.data();
  for (std::size_t c = 0; c < in.channels; ++c) {
    const double* xc = x + c * in.h * in.w;
    const double* fc = f + c * k.h * k.w;
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t a = 0; a < k.h; ++a) {
        const double* xrow = xc + (i + a) * in.w;
        const double* frow = fc + a * k.w;
        double* orow = o + i * ow;
        for (std::size_t b = 0; b < k.w; ++b) {
          const double fv = frow[b];
          if (fv == 0.0) continue;
          for (std::size_t j = 0; j < ow; ++j) {
            orow[j] += fv * xrow[j + b];
          }
        }
      }
    }
  }
  return out;
}

void convolve_full_accum(const Tensor& input, const Tensor& kernel,
                         Tensor& out) {
  if (input.rank() != 2) {
    throw DimensionError("convolve_full: input must be rank 2");
  }
  const ChannelView k = as_channels(kernel, "convolve_full kernel");
  const std::size_t ih = input.extent(0);
  const std::size_t iw = input.extent(1);
  const std::size_t oh = ih + k.h - 1;
  const std::size_t ow = iw + k.w - 1;
  const ChannelView ov = as_channels(out, "convolve_full output");
  if (ov.channels != k.channels || ov.h != oh || ov.w != ow) {
    throw DimensionError("convolve_full: output shape mismatch");
  }
  const double* x = input.data();
  const double* f = kernel.data();
  double* o = out.data();
  // Scatter form: each nonzero input element spreads a kernel footprint.
  // Inputs here are typically sparse feature maps, hence the zero skip.
  for (std::size_t u = 0; u < ih; ++u) {
    const double* xrow = x + u * iw;
    for (std::size_t v = 0; v < iw; ++v) {
      const double xv = xrow[v];
      if (xv == 0.0) continue;
      for (std::size_t c = 0; c < k.channels; ++c) {
        const double* fc = f + c * k.h * k.w;
        double* oc = o + c * oh * ow;
        for (std::size_t a = 0; a < k.h; ++a) {
          const double* frow = fc + a * k.w;
          double* orow = oc + (u + a) * ow + v;
          for (std::size_t b = 0; b < k.w; ++b) {
            orow[b] += xv * frow[b];
          }
        }
      }
    }
  }
}

Tensor convolve_full(const Tensor& input, const Tensor& kernel) {
  if (input.rank() != 2) {
    throw DimensionError("convolve_full: input must be rank 2");
  }
  const ChannelView k = as_channels(kernel, "convolve_full kernel");
  const std::size_t oh = input.extent(0) + k.h - 1;
  const std::size_t ow = input.extent(1) + k.w - 1;
  Tensor out = kernel.rank() == 2 ? Tensor({oh, ow})
                                  : Tensor({k.channels, oh, ow});
  convolve_full_accum(input, kernel, out);
  return out;
}

}  // namespace deconvparse
