#include "deconvparse/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "deconvparse/errors.hpp"

namespace deconvparse {

namespace {

namespace fs = std::filesystem;

struct Rgb {
  double r, g, b;
};

// Base color per class; classes beyond the fixed palette get a hashed hue.
Rgb class_color(int c) {
  switch (c) {
    case 0: return {0.55, 0.68, 0.92};  // sky band
    case 1: return {0.42, 0.38, 0.22};  // ground band
    case 2: return {0.80, 0.28, 0.24};
    case 3: return {0.88, 0.78, 0.20};
    case 4: return {0.45, 0.30, 0.65};
    default: {
      auto frac = [](double x) { return x - std::floor(x); };
      return {0.2 + 0.6 * frac(0.31 * c + 0.17),
              0.2 + 0.6 * frac(0.57 * c + 0.43),
              0.2 + 0.6 * frac(0.83 * c + 0.71)};
    }
  }
}

// Cheap per-class texture offset so classes are separable by appearance,
// not only by color level.
double class_texture(int c, std::size_t i, std::size_t j, std::size_t H) {
  switch (c) {
    case 0:  // vertical gradient
      return 0.10 * (1.0 - static_cast<double>(i) / static_cast<double>(H));
    case 1:  // horizontal stripes
      return ((i / 2) % 2) ? 0.07 : -0.07;
    case 2:  // checkerboard
      return (((i / 2) + (j / 2)) % 2) ? 0.09 : -0.09;
    case 3:  // dots
      return ((i % 4) < 2 && (j % 4) < 2) ? 0.10 : -0.05;
    default:  // diagonal stripes
      return (((i + j) / 3) % 2) ? 0.08 : -0.08;
  }
}

}  // namespace

Dataset generate_synthetic_scenes(std::size_t count, std::size_t classes,
                                  std::size_t size, std::uint64_t seed,
                                  std::size_t channels) {
  if (classes < 2) {
    throw ParameterError("generate_synthetic_scenes: need >= 2 classes");
  }
  if (size < 16) {
    throw ParameterError("generate_synthetic_scenes: size must be >= 16");
  }
  if (channels != 1 && channels != 3) {
    throw ParameterError("generate_synthetic_scenes: 1 or 3 channels");
  }
  const std::size_t H = size, W = size;
  Dataset ds;
  ds.classes = classes;
  ds.samples.reserve(count);

  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(Rng::derive(seed, n));
    SceneSample s;
    s.labels = LabelMap(H, W);

    // Horizon stays in the top half so class 0 never reaches the bottom.
    std::size_t horizon = static_cast<std::size_t>(
        std::lround(static_cast<double>(H) * rng.uniform(0.30, 0.48)));
    horizon = std::min(horizon, H / 2);
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        s.labels.at(i, j) = i < horizon ? 0 : 1;
      }
    }

    if (classes > 2) {
      const std::size_t shapes = 1 + rng.index(3);
      for (std::size_t q = 0; q < shapes; ++q) {
        const int c = 2 + static_cast<int>(rng.index(classes - 2));
        const double cy = rng.uniform(0.35, 0.75) * static_cast<double>(H);
        const double cx = rng.uniform(0.15, 0.85) * static_cast<double>(W);
        const double ry = rng.uniform(0.10, 0.20) * static_cast<double>(H);
        const double rx = rng.uniform(0.10, 0.20) * static_cast<double>(W);
        const int kind = (c - 2) % 3;
        for (std::size_t i = 0; i < H; ++i) {
          for (std::size_t j = 0; j < W; ++j) {
            const double dy = (static_cast<double>(i) - cy) / ry;
            const double dx = (static_cast<double>(j) - cx) / rx;
            bool inside = false;
            if (kind == 0) {
              inside = std::fabs(dy) <= 1.0 && std::fabs(dx) <= 1.0;
            } else if (kind == 1) {
              inside = dy * dy + dx * dx <= 1.0;
            } else {
              inside = std::fabs(dy) + std::fabs(dx) <= 1.0;
            }
            if (inside) s.labels.at(i, j) = c;
          }
        }
      }
    }

    s.image = Tensor({channels, H, W});
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        const int c = s.labels.at(i, j);
        const Rgb base = class_color(c);
        const double tex = class_texture(c, i, j, H);
        double col[3] = {base.r + tex, base.g + tex, base.b + tex};
        for (std::size_t ch = 0; ch < channels; ++ch) {
          double v = channels == 3
                         ? col[ch]
                         : 0.30 * col[0] + 0.55 * col[1] + 0.15 * col[2];
          v += 0.02 * rng.normal();
          s.image.at3(ch, i, j) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

ChannelStats compute_channel_stats(const Dataset& ds) {
  if (ds.samples.empty()) {
    throw DatasetError("compute_channel_stats: empty dataset");
  }
  const std::size_t C = ds.channels();
  ChannelStats st;
  st.mean.assign(C, 0.0);
  st.stddev.assign(C, 0.0);
  std::vector<double> count(C, 0.0);
  for (const SceneSample& s : ds.samples) {
    const std::size_t plane = s.image.extent(1) * s.image.extent(2);
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = s.image.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) st.mean[c] += p[i];
      count[c] += static_cast<double>(plane);
    }
  }
  for (std::size_t c = 0; c < C; ++c) st.mean[c] /= count[c];
  for (const SceneSample& s : ds.samples) {
    const std::size_t plane = s.image.extent(1) * s.image.extent(2);
    for (std::size_t c = 0; c < C; ++c) {
      const double* p = s.image.data() + c * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = p[i] - st.mean[c];
        st.stddev[c] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < C; ++c) {
    st.stddev[c] = std::max(std::sqrt(st.stddev[c] / count[c]), 1e-8);
  }
  return st;
}

void standardize_image(Tensor& image, const ChannelStats& stats) {
  const std::size_t C = image.extent(0);
  if (C != stats.mean.size()) {
    throw DimensionError("standardize_image: channel mismatch");
  }
  const std::size_t plane = image.extent(1) * image.extent(2);
  for (std::size_t c = 0; c < C; ++c) {
    double* p = image.data() + c * plane;
    const double m = stats.mean[c];
    const double inv = 1.0 / stats.stddev[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] = (p[i] - m) * inv;
  }
}

void standardize_with(Dataset& ds, const ChannelStats& stats) {
  for (SceneSample& s : ds.samples) standardize_image(s.image, stats);
}

ChannelStats standardize(Dataset& ds) {
  const ChannelStats stats = compute_channel_stats(ds);
  standardize_with(ds, stats);
  return stats;
}

Tensor local_contrast_normalize(const Tensor& image, std::size_t window) {
  if (window < 3 || window % 2 == 0) {
    throw ParameterError("local_contrast_normalize: window must be odd, >=3");
  }
  if (image.rank() != 3) {
    throw DimensionError("local_contrast_normalize: expected [C,H,W]");
  }
  const std::size_t C = image.extent(0), H = image.extent(1),
                    W = image.extent(2);
  const long half = static_cast<long>(window / 2);
  const double k = static_cast<double>(window * window);
  Tensor out(std::vector<std::size_t>(image.shape()));

  // reflect-101 (mirror about the edge pixel)
  auto reflect = [](long i, long n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i;
      if (i >= n) i = 2 * n - 2 - i;
    }
    return static_cast<std::size_t>(i);
  };

  // All quantities derive from k*x - window_sum, which cancels global
  // additive shifts whenever the input sums are exact.
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t i = 0; i < H; ++i) {
      for (std::size_t j = 0; j < W; ++j) {
        double sum = 0.0;
        for (long a = -half; a <= half; ++a) {
          const std::size_t ri = reflect(static_cast<long>(i) + a,
                                         static_cast<long>(H));
          for (long b = -half; b <= half; ++b) {
            const std::size_t rj = reflect(static_cast<long>(j) + b,
                                           static_cast<long>(W));
            sum += image.at3(c, ri, rj);
          }
        }
        double sq = 0.0;
        for (long a = -half; a <= half; ++a) {
          const std::size_t ri = reflect(static_cast<long>(i) + a,
                                         static_cast<long>(H));
          for (long b = -half; b <= half; ++b) {
            const std::size_t rj = reflect(static_cast<long>(j) + b,
                                           static_cast<long>(W));
            const double n = k * image.at3(c, ri, rj) - sum;
            sq += n * n;
          }
        }
        const double centered = (k * image.at3(c, i, j) - sum) / k;
        const double stddev = std::sqrt(sq / (k * k * k));
        out.at3(c, i, j) = centered / std::max(stddev, 1e-4);
      }
    }
  }
  return out;
}

BalancedSampler::BalancedSampler(const std::vector<const LabelMap*>& labels,
                                 std::size_t classes, std::uint64_t seed,
                                 bool strict)
    : rng_(seed) {
  if (labels.empty()) {
    throw DatasetError("balanced sampler: no label maps");
  }
  std::vector<std::vector<Pixel>> buckets(classes);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const LabelMap& m = *labels[n];
    for (std::size_t i = 0; i < m.h; ++i) {
      for (std::size_t j = 0; j < m.w; ++j) {
        const int c = m.at(i, j);
        if (c < 0 || static_cast<std::size_t>(c) >= classes) {
          throw LabelError("balanced sampler: label " + std::to_string(c) +
                           " out of range");
        }
        buckets[static_cast<std::size_t>(c)].push_back(
            {static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(i),
             static_cast<std::uint32_t>(j)});
      }
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (buckets[c].empty()) {
      if (strict) {
        throw DatasetError("balanced sampler: class " + std::to_string(c) +
                           " absent from dataset");
      }
      continue;
    }
    class_ids_.push_back(static_cast<int>(c));
    per_class_.push_back(std::move(buckets[c]));
  }
  if (per_class_.size() < 2 && strict) {
    throw DatasetError("balanced sampler: fewer than two classes present");
  }
  if (per_class_.empty()) {
    throw DatasetError("balanced sampler: no labeled pixels");
  }
  order_.resize(per_class_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  cursor_ = order_.size();  // force shuffle on first draw
}

BalancedSampler::Draw BalancedSampler::next() {
  if (cursor_ >= order_.size()) {
    for (std::size_t i = 0; i + 1 < order_.size(); ++i) {
      std::swap(order_[i], order_[i + rng_.index(order_.size() - i)]);
    }
    cursor_ = 0;
  }
  const std::size_t slot = order_[cursor_++];
  const std::vector<Pixel>& bucket = per_class_[slot];
  const Pixel& px = bucket[rng_.index(bucket.size())];
  return {px.sample, px.row, px.col, class_ids_[slot]};
}

std::vector<BalancedSampler::Draw> BalancedSampler::next_batch(
    std::size_t batch_size) {
  std::vector<Draw> out;
  out.reserve(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) out.push_back(next());
  return out;
}

BalancedSampler balanced_batches(const Dataset& ds, std::uint64_t seed,
                                 bool strict) {
  std::vector<const LabelMap*> labels;
  labels.reserve(ds.samples.size());
  for (const SceneSample& s : ds.samples) labels.push_back(&s.labels);
  return BalancedSampler(labels, ds.classes, seed, strict);
}

// ---------------------------------------------------------------------------
// PNM I/O
// ---------------------------------------------------------------------------

namespace {

int pnm_get(std::istream& in) { return in.get(); }

// Skips whitespace and '#' comments, then parses one unsigned integer.
std::size_t pnm_uint(std::istream& in, const std::string& path) {
  int ch = pnm_get(in);
  for (;;) {
    while (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n') {
      ch = pnm_get(in);
    }
    if (ch == '#') {
      while (ch != '\n' && ch != EOF) ch = pnm_get(in);
      continue;
    }
    break;
  }
  if (ch < '0' || ch > '9') {
    throw FormatError(path + ": expected integer at byte " +
                      std::to_string(static_cast<long>(in.tellg()) - 1));
  }
  std::size_t v = 0;
  while (ch >= '0' && ch <= '9') {
    v = v * 10 + static_cast<std::size_t>(ch - '0');
    ch = pnm_get(in);
  }
  return v;
}

void pnm_read_header(std::istream& in, const std::string& path,
                     const char* magic, std::size_t& w, std::size_t& h) {
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (!in || m0 != magic[0] || m1 != magic[1]) {
    throw FormatError(path + ": bad magic at byte 0, expected '" +
                      std::string(magic) + "'");
  }
  w = pnm_uint(in, path);
  h = pnm_uint(in, path);
  const std::size_t maxval = pnm_uint(in, path);
  if (maxval != 255) {
    throw FormatError(path + ": unsupported maxval " + std::to_string(maxval));
  }
  // pnm_uint consumed exactly one whitespace byte after maxval
}

std::vector<unsigned char> pnm_read_payload(std::istream& in,
                                            const std::string& path,
                                            std::size_t n) {
  std::vector<unsigned char> buf(n);
  const std::size_t at = static_cast<std::size_t>(in.tellg());
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw FormatError(path + ": truncated payload at byte " +
                      std::to_string(at + static_cast<std::size_t>(
                                              std::max<std::streamsize>(
                                                  in.gcount(), 0))) +
                      ", expected " + std::to_string(n) + " bytes");
  }
  return buf;
}

unsigned char quantize(double v) {
  const double q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<unsigned char>(q);
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
  if (image.rank() != 3 || image.extent(0) != 3) {
    throw DimensionError("write_ppm: expected [3,H,W]");
  }
  const std::size_t H = image.extent(1), W = image.extent(2);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_ppm: cannot open " + path);
  out << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(W * 3);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      row[j * 3 + 0] = quantize(image.at3(0, i, j));
      row[j * 3 + 1] = quantize(image.at3(1, i, j));
      row[j * 3 + 2] = quantize(image.at3(2, i, j));
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_ppm: write failed for " + path);
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_ppm: cannot open " + path);
  std::size_t w = 0, h = 0;
  pnm_read_header(in, path, "P6", w, h);
  const std::vector<unsigned char> buf = pnm_read_payload(in, path, w * h * 3);
  Tensor img({3, h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        img.at3(c, i, j) = static_cast<double>(buf[(i * w + j) * 3 + c]) /
                           255.0;
      }
    }
  }
  return img;
}

void write_pgm(const std::string& path, const LabelMap& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm: cannot open " + path);
  out << "P5\n" << labels.w << " " << labels.h << "\n255\n";
  std::vector<unsigned char> row(labels.w);
  for (std::size_t i = 0; i < labels.h; ++i) {
    for (std::size_t j = 0; j < labels.w; ++j) {
      const int c = labels.at(i, j);
      if (c < 0 || c > 255) {
        throw ParameterError("write_pgm: class id " + std::to_string(c) +
                             " not encodable in 8 bits");
      }
      row[j] = static_cast<unsigned char>(c);
    }
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_pgm: write failed for " + path);
}

LabelMap read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_pgm: cannot open " + path);
  std::size_t w = 0, h = 0;
  pnm_read_header(in, path, "P5", w, h);
  const std::vector<unsigned char> buf = pnm_read_payload(in, path, w * h);
  LabelMap m(h, w);
  for (std::size_t i = 0; i < h * w; ++i) m.v[i] = buf[i];
  return m;
}

void write_pgm_gray(const std::string& path, const Tensor& gray) {
  if (gray.rank() != 2) {
    throw DimensionError("write_pgm_gray: expected [H,W]");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_pgm_gray: cannot open " + path);
  const std::size_t H = gray.extent(0), W = gray.extent(1);
  out << "P5\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(W);
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) row[j] = quantize(gray.at2(i, j));
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write_pgm_gray: write failed for " + path);
}

// ---------------------------------------------------------------------------
// Tensor sidecar ("DPTN")
// ---------------------------------------------------------------------------

namespace {

void put_u32le(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(std::istream& in, const char* what) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError(std::string("read_tensor: truncated ") + what);
  return static_cast<std::uint32_t>(b[0]) |
         (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) |
         (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write("DPTN", 4);
  put_u32le(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d = 0; d < t.rank(); ++d) {
    put_u32le(out, static_cast<std::uint32_t>(t.extent(d)));
  }
  static_assert(std::endian::native == std::endian::little,
                "payload written as native doubles");
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!out) throw IoError("write_tensor: stream failure");
}

Tensor read_tensor(std::istream& in) {
  const std::size_t at = static_cast<std::size_t>(in.tellg());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "DPTN", 4) != 0) {
    throw FormatError("read_tensor: bad magic at byte " + std::to_string(at));
  }
  const std::uint32_t rank = get_u32le(in, "rank");
  if (rank == 0 || rank > 8) {
    throw FormatError("read_tensor: implausible rank " + std::to_string(rank));
  }
  std::vector<std::size_t> shape(rank);
  std::size_t n = 1;
  for (std::uint32_t d = 0; d < rank; ++d) {
    shape[d] = get_u32le(in, "extent");
    n *= shape[d];
  }
  std::vector<double> data(n);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != n * sizeof(double)) {
    throw FormatError("read_tensor: truncated payload, expected " +
                      std::to_string(n * sizeof(double)) + " bytes");
  }
  return Tensor(std::move(shape), std::move(data));
}

void write_tensor_file(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("write_tensor_file: cannot open " + path);
  write_tensor(out, t);
}

Tensor read_tensor_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_tensor_file: cannot open " + path);
  return read_tensor(in);
}

// ---------------------------------------------------------------------------
// Manifest and dataset directories
// ---------------------------------------------------------------------------

void write_manifest(const std::string& path, const DatasetManifest& m) {
  std::ofstream out(path);
  if (!out) throw IoError("write_manifest: cannot open " + path);
  out << "classes=" << m.classes << "\n";
  out << "channels=" << m.channels << "\n";
  out << "height=" << m.height << "\n";
  out << "width=" << m.width << "\n";
  out << "train_count=" << m.train_count << "\n";
  out << "test_count=" << m.test_count << "\n";
  out << "seed=" << m.seed << "\n";
  out << "pixel_counts=";
  for (std::size_t c = 0; c < m.pixel_counts.size(); ++c) {
    out << (c ? "," : "") << m.pixel_counts[c];
  }
  out << "\n";
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_manifest: cannot open " + path);
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "classes") m.classes = std::stoull(val);
    else if (key == "channels") m.channels = std::stoull(val);
    else if (key == "height") m.height = std::stoull(val);
    else if (key == "width") m.width = std::stoull(val);
    else if (key == "train_count") m.train_count = std::stoull(val);
    else if (key == "test_count") m.test_count = std::stoull(val);
    else if (key == "seed") m.seed = std::stoull(val);
    else if (key == "pixel_counts") {
      std::stringstream ss(val);
      std::string tok;
      while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) m.pixel_counts.push_back(std::stoull(tok));
      }
    }
  }
  if (m.classes == 0) {
    throw FormatError("read_manifest: missing classes in " + path);
  }
  return m;
}

namespace {

std::string split_image_path(const std::string& dir, const std::string& split,
                             std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%04zu.ppm", i);
  return (fs::path(dir) / split / buf).string();
}

std::string split_label_path(const std::string& dir, const std::string& split,
                             std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "lab_%04zu.pgm", i);
  return (fs::path(dir) / split / buf).string();
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& train,
                  const Dataset& test, std::uint64_t seed) {
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  auto dump = [&](const Dataset& ds, const std::string& split) {
    for (std::size_t i = 0; i < ds.size(); ++i) {
      write_ppm(split_image_path(dir, split, i), ds.samples[i].image);
      write_pgm(split_label_path(dir, split, i), ds.samples[i].labels);
    }
  };
  dump(train, "train");
  dump(test, "test");

  DatasetManifest m;
  m.classes = train.classes;
  m.channels = train.channels();
  m.height = train.samples.empty() ? 0 : train.samples[0].image.extent(1);
  m.width = train.samples.empty() ? 0 : train.samples[0].image.extent(2);
  m.train_count = train.size();
  m.test_count = test.size();
  m.seed = seed;
  m.pixel_counts.assign(train.classes, 0);
  for (const SceneSample& s : train.samples) {
    for (int v : s.labels.v) m.pixel_counts[static_cast<std::size_t>(v)]++;
  }
  write_manifest((fs::path(dir) / "manifest.txt").string(), m);
}

Dataset load_dataset_split(const std::string& dir, const std::string& split) {
  const DatasetManifest m =
      read_manifest((fs::path(dir) / "manifest.txt").string());
  const std::size_t count = split == "train" ? m.train_count : m.test_count;
  Dataset ds;
  ds.classes = m.classes;
  ds.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    SceneSample s;
    s.image = read_ppm(split_image_path(dir, split, i));
    s.labels = read_pgm(split_label_path(dir, split, i));
    if (s.labels.h != s.image.extent(1) || s.labels.w != s.image.extent(2)) {
      throw FormatError("load_dataset_split: image/label size mismatch at " +
                        split_label_path(dir, split, i));
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace deconvparse
