#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "deconvparse/label_map.hpp"
#include "deconvparse/rng.hpp"
#include "deconvparse/tensor.hpp"

namespace deconvparse {

// One scene: image [channels, H, W] (values start in [0,1]) and a label
// map of the same spatial extent with values in [0, classes).
struct SceneSample {
  Tensor image;
  LabelMap labels;
};

struct Dataset {
  std::size_t classes = 0;
  std::vector<SceneSample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t channels() const {
    return samples.empty() ? 0 : samples[0].image.extent(0);
  }
};

struct DatasetManifest {
  std::size_t classes = 0;
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> pixel_counts;  // per class, train split
};

// Synthetic scenes with a vertical spatial prior: a class-0 band above a
// jittered horizon in the top half, class 1 below it, and textured shapes
// of classes 2..C-1 scattered around the middle. Deterministic per seed.
// Requires classes >= 2 and size >= 16.
Dataset generate_synthetic_scenes(std::size_t count, std::size_t classes,
                                  std::size_t size, std::uint64_t seed,
                                  std::size_t channels = 3);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // floored at 1e-8
};

// Per-channel statistics pooled over the whole dataset.
ChannelStats compute_channel_stats(const Dataset& ds);

// In-place (x - mean) / std per channel with the given statistics.
void standardize_with(Dataset& ds, const ChannelStats& stats);
void standardize_image(Tensor& image, const ChannelStats& stats);

// Dataset-level standardization; returns the statistics used so the same
// transform can be applied to held-out inputs.
ChannelStats standardize(Dataset& ds);

// Subtractive + divisive local contrast normalization with a uniform
// window x window neighborhood per channel, reflect-101 borders,
// x' = (x - local_mean) / max(local_std, 1e-4). Window must be odd, >= 3.
Tensor local_contrast_normalize(const Tensor& image, std::size_t window);

// Balanced target-pixel sampler: each successive block of C draws covers
// every class once (seeded order), the pixel uniform within the class, so
// per-class frequency is exactly 1/C in expectation and every class appears
// in any stream of >= C draws. With `strict` every declared class must be
// present or DatasetError is thrown; otherwise balancing runs over the
// classes actually present.
class BalancedSampler {
 public:
  struct Draw {
    std::size_t sample = 0;
    std::size_t row = 0;
    std::size_t col = 0;
    int label = 0;
  };

  BalancedSampler(const std::vector<const LabelMap*>& labels,
                  std::size_t classes, std::uint64_t seed,
                  bool strict = true);

  Draw next();
  std::vector<Draw> next_batch(std::size_t batch_size);
  std::size_t class_count() const { return per_class_.size(); }

 private:
  struct Pixel {
    std::uint32_t sample, row, col;
  };
  std::vector<int> class_ids_;                  // present classes
  std::vector<std::vector<Pixel>> per_class_;   // pixels by present class
  std::vector<std::size_t> order_;              // shuffled class cursor
  std::size_t cursor_ = 0;
  Rng rng_;
};

// Convenience over a dataset's label maps.
BalancedSampler balanced_batches(const Dataset& ds, std::uint64_t seed,
                                 bool strict = true);

// Binary PPM (P6) / PGM (P5), maxval 255. Images are quantized to 8 bits
// on write (round(v*255) clamped); label gray value == class id.
void write_ppm(const std::string& path, const Tensor& image);
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const LabelMap& labels);
LabelMap read_pgm(const std::string& path);
// Gray image variant for probability maps (values clamped to [0,1]).
void write_pgm_gray(const std::string& path, const Tensor& gray);

// Tensor sidecar, lossless: magic "DPTN", u32 rank, u32 extents,
// little-endian f64 payload.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void write_tensor_file(const std::string& path, const Tensor& t);
Tensor read_tensor_file(const std::string& path);

// key=value manifest file.
void write_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest read_manifest(const std::string& path);

// Directory layout: <dir>/{train,test}/scene_NNNN.{ppm,pgm} + manifest.txt.
void save_dataset(const std::string& dir, const Dataset& train,
                  const Dataset& test, std::uint64_t seed);
Dataset load_dataset_split(const std::string& dir, const std::string& split);

}  // namespace deconvparse
