#include "deconvparse/pooling.hpp"

#include <cmath>
#include <string>

namespace deconvparse {

namespace {

void check_region(const Tensor& z, PoolRegion region) {
  if (z.rank() != 3) {
    throw DimensionError("pool: expected [maps,H,W], got rank " +
                         std::to_string(z.rank()));
  }
  if (region.volume() == 0) {
    throw ParameterError("pool: empty region");
  }
  if (z.extent(0) % region.depth != 0 || z.extent(1) % region.h != 0 ||
      z.extent(2) % region.w != 0) {
    throw DimensionError("pool: shape [" + std::to_string(z.extent(0)) + "," +
                         std::to_string(z.extent(1)) + "," +
                         std::to_string(z.extent(2)) +
                         "] not divisible by region [" +
                         std::to_string(region.depth) + "," +
                         std::to_string(region.h) + "," +
                         std::to_string(region.w) + "]");
  }
}

void check_switches_source(const SwitchSet& s, const Tensor& z,
                           const char* what) {
  const auto src = s.source_shape();
  if (z.rank() != 3 || z.extent(0) != src[0] || z.extent(1) != src[1] ||
      z.extent(2) != src[2]) {
    throw SwitchError(std::string(what) + ": switch source shape mismatch");
  }
}

// Flat offset within z of region element `local` for pooled cell (m,pi,pj).
inline std::size_t source_offset(const SwitchSet& s, std::size_t m,
                                 std::size_t pi, std::size_t pj,
                                 std::uint32_t local, std::size_t H,
                                 std::size_t W) {
  const PoolRegion r = s.region;
  const std::size_t ld = local / (r.h * r.w);
  const std::size_t li = (local / r.w) % r.h;
  const std::size_t lj = local % r.w;
  const std::size_t map = m * r.depth + ld;
  const std::size_t row = pi * r.h + li;
  const std::size_t col = pj * r.w + lj;
  return (map * H + row) * W + col;
}

}  // namespace

PoolResult pool(const Tensor& z, PoolRegion region) {
  check_region(z, region);
  const std::size_t K = z.extent(0), H = z.extent(1), W = z.extent(2);
  const std::size_t pm = K / region.depth;
  const std::size_t ph = H / region.h;
  const std::size_t pw = W / region.w;

  PoolResult out;
  out.pooled = Tensor({pm, ph, pw});
  out.switches.pooled_shape = {pm, ph, pw};
  out.switches.region = region;
  out.switches.index.assign(pm * ph * pw, 0);

  const double* zd = z.data();
  double* pd = out.pooled.data();
  std::size_t cell = 0;
  for (std::size_t m = 0; m < pm; ++m) {
    for (std::size_t pi = 0; pi < ph; ++pi) {
      for (std::size_t pj = 0; pj < pw; ++pj, ++cell) {
        double best = 0.0;
        double best_abs = -1.0;
        std::uint32_t best_local = 0;
        std::uint32_t local = 0;
        for (std::size_t ld = 0; ld < region.depth; ++ld) {
          const std::size_t map = m * region.depth + ld;
          for (std::size_t li = 0; li < region.h; ++li) {
            const double* row =
                zd + (map * H + pi * region.h + li) * W + pj * region.w;
            for (std::size_t lj = 0; lj < region.w; ++lj, ++local) {
              const double v = row[lj];
              const double a = std::fabs(v);
              if (a > best_abs) {
                best_abs = a;
                best = v;
                best_local = local;
              }
            }
          }
        }
        pd[cell] = best;
        out.switches.index[cell] = best_local;
      }
    }
  }
  return out;
}

Tensor pool_fixed(const Tensor& z, const SwitchSet& s) {
  check_switches_source(s, z, "pool_fixed");
  const std::size_t H = z.extent(1), W = z.extent(2);
  Tensor p(std::vector<std::size_t>(s.pooled_shape));
  const double* zd = z.data();
  double* pd = p.data();
  const std::size_t pm = s.pooled_shape[0], ph = s.pooled_shape[1],
                    pw = s.pooled_shape[2];
  const std::uint32_t vol = static_cast<std::uint32_t>(s.region.volume());
  std::size_t cell = 0;
  for (std::size_t m = 0; m < pm; ++m) {
    for (std::size_t pi = 0; pi < ph; ++pi) {
      for (std::size_t pj = 0; pj < pw; ++pj, ++cell) {
        const std::uint32_t local = s.index[cell];
        if (local >= vol) {
          throw SwitchError("pool_fixed: switch index " +
                            std::to_string(local) + " out of region volume " +
                            std::to_string(vol));
        }
        pd[cell] = zd[source_offset(s, m, pi, pj, local, H, W)];
      }
    }
  }
  return p;
}

Tensor unpool(const Tensor& p, const SwitchSet& s) {
  if (p.rank() != 3 || std::vector<std::size_t>(p.shape()) != s.pooled_shape) {
    throw SwitchError("unpool: pooled shape mismatch");
  }
  if (s.index.size() != p.size()) {
    throw SwitchError("unpool: switch count mismatch");
  }
  const auto src = s.source_shape();
  Tensor z(src);
  const std::size_t H = src[1], W = src[2];
  const double* pd = p.data();
  double* zd = z.data();
  const std::size_t pm = s.pooled_shape[0], ph = s.pooled_shape[1],
                    pw = s.pooled_shape[2];
  const std::uint32_t vol = static_cast<std::uint32_t>(s.region.volume());
  std::size_t cell = 0;
  for (std::size_t m = 0; m < pm; ++m) {
    for (std::size_t pi = 0; pi < ph; ++pi) {
      for (std::size_t pj = 0; pj < pw; ++pj, ++cell) {
        const std::uint32_t local = s.index[cell];
        if (local >= vol) {
          throw SwitchError("unpool: switch index " + std::to_string(local) +
                            " out of region volume " + std::to_string(vol));
        }
        zd[source_offset(s, m, pi, pj, local, H, W)] = pd[cell];
      }
    }
  }
  return z;
}

}  // namespace deconvparse
