#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "deconvparse/errors.hpp"
#include "deconvparse/rng.hpp"

namespace deconvparse {

// Dense n-dimensional array of doubles, row-major, zero-based.
class Tensor {
 public:
  Tensor() = default;

  // Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) {
    return Tensor(std::move(shape));
  }
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor randn(std::vector<std::size_t> shape, Rng& rng,
                      double sigma = 1.0);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t extent(std::size_t dim) const { return shape_.at(dim); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // 2D / 3D / 4D element access (unchecked beyond debug builds).
  double& at2(std::size_t i, std::size_t j) {
    return data_[i * shape_[1] + j];
  }
  double at2(std::size_t i, std::size_t j) const {
    return data_[i * shape_[1] + j];
  }
  double& at3(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double at3(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& at4(std::size_t a, std::size_t b, std::size_t i, std::size_t j) {
    return data_[((a * shape_[1] + b) * shape_[2] + i) * shape_[3] + j];
  }
  double at4(std::size_t a, std::size_t b, std::size_t i, std::size_t j) const {
    return data_[((a * shape_[1] + b) * shape_[2] + i) * shape_[3] + j];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  void fill(double value);
  void scale(double factor);
  // this += factor * other (shapes must match).
  void add_scaled(const Tensor& other, double factor);

  double dot(const Tensor& other) const;
  double l1_norm() const;
  double l2_norm_sq() const;
  double max_abs() const;
  std::size_t count_nonzero() const;

  // Throws NumericalError naming `what` if any entry is NaN/Inf.
  void check_finite(const char* what) const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

struct TensorStats {
  double mean = 0.0;
  double variance = 0.0;  // population
  double l1 = 0.0;
  double l2sq = 0.0;
};

// Population statistics over all entries. Empty tensor -> DimensionError.
TensorStats reduce_stats(const Tensor& t);

// Valid cross-correlation summed over channels.
//   input  [C,H,W] (or [H,W] read as C=1)
//   kernel [C,h,w] (or [h,w])
//   out[i,j] = sum_c sum_{a,b} input[c,i+a,j+b] * kernel[c,a,b]
// Output is [H-h+1, W-w+1]. Requires h <= H, w <= W and matching C.
Tensor correlate_valid(const Tensor& input, const Tensor& kernel);

// Full (zero-padded) convolution, the exact adjoint of correlate_valid:
//   <correlate_valid(x,k), y> == <x, convolve_full(y,k)>
// for every x, y of compatible shape.
//   input  [H,W]
//   kernel [h,w]   -> output [H+h-1, W+w-1]
//   kernel [C,h,w] -> output [C, H+h-1, W+w-1]
//   out[c,u,v] = sum_{a,b} input[u-a, v-b] * kernel[c,a,b]  (in-range terms)
Tensor convolve_full(const Tensor& input, const Tensor& kernel);

// convolve_full accumulated into an existing [C,H,W] (or [H,W]) tensor.
void convolve_full_accum(const Tensor& input, const Tensor& kernel,
                         Tensor& out);

}  // namespace deconvparse
