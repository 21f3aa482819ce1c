#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "deconvparse/rng.hpp"
#include "deconvparse/tensor.hpp"

using namespace deconvparse;

namespace {

// Independent oracle: direct nested-loop summation, no shared code with the
// implementation's loop structure.
Tensor naive_correlate_valid(const Tensor& input, const Tensor& kernel) {
  const std::size_t C = input.rank() == 3 ? input.extent(0) : 1;
  const std::size_t H = input.extent(input.rank() - 2);
  const std::size_t W = input.extent(input.rank() - 1);
  const std::size_t kh = kernel.extent(kernel.rank() - 2);
  const std::size_t kw = kernel.extent(kernel.rank() - 1);
  Tensor out({H - kh + 1, W - kw + 1});
  for (std::size_t i = 0; i + kh <= H; ++i) {
    for (std::size_t j = 0; j + kw <= W; ++j) {
      double acc = 0.0;
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t b = 0; b < kw; ++b) {
            acc += input[(c * H + i + a) * W + j + b] *
                   kernel[(c * kh + a) * kw + b];
          }
        }
      }
      out.at2(i, j) = acc;
    }
  }
  return out;
}

Tensor naive_convolve_full(const Tensor& input, const Tensor& kernel) {
  const std::size_t H = input.extent(0), W = input.extent(1);
  const std::size_t C = kernel.rank() == 3 ? kernel.extent(0) : 1;
  const std::size_t kh = kernel.extent(kernel.rank() - 2);
  const std::size_t kw = kernel.extent(kernel.rank() - 1);
  const std::size_t oh = H + kh - 1, ow = W + kw - 1;
  Tensor out = kernel.rank() == 3 ? Tensor({C, oh, ow}) : Tensor({oh, ow});
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t u = 0; u < oh; ++u) {
      for (std::size_t v = 0; v < ow; ++v) {
        double acc = 0.0;
        for (std::size_t a = 0; a < kh; ++a) {
          for (std::size_t b = 0; b < kw; ++b) {
            if (u < a || v < b) continue;
            const std::size_t iu = u - a, iv = v - b;
            if (iu >= H || iv >= W) continue;
            acc += input.at2(iu, iv) * kernel[(c * kh + a) * kw + b];
          }
        }
        out[(c * oh + u) * ow + v] = acc;
      }
    }
  }
  return out;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = rng.normal();
  return t;
}

double max_rel_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), 1e-30});
    m = std::max(m, std::fabs(a[i] - b[i]) / denom);
  }
  return m;
}

}  // namespace

TEST_CASE("correlate_valid hand examples") {
  // frozen from the nested-loop oracle
  const Tensor x({2, 2}, {1, 2, 3, 4});
  const Tensor k({2, 2}, {1, 0, 0, 1});
  const Tensor out = correlate_valid(x, k);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 1});
  CHECK(out[0] == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(naive_correlate_valid(x, k)[0] == doctest::Approx(5.0));

  // single-entry kernel is the identity
  const Tensor k1({1, 1}, {1});
  const Tensor idp = correlate_valid(x, k1);
  for (std::size_t i = 0; i < 4; ++i) CHECK(idp[i] == x[i]);

  // zero kernel annihilates
  const Tensor k0({2, 2}, {0, 0, 0, 0});
  const Tensor zero_out = correlate_valid(x, k0);
  for (double v : zero_out.values()) CHECK(v == 0.0);
}

TEST_CASE("convolve_full hand examples") {
  const Tensor x({1, 1}, {3});
  const Tensor k({1, 2}, {1, 2});
  const Tensor out = convolve_full(x, k);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 2});
  CHECK(out[0] == 3.0);
  CHECK(out[1] == 6.0);

  const Tensor k1({1, 1}, {1});
  const Tensor y({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const Tensor idp = convolve_full(y, k1);
  for (std::size_t i = 0; i < 9; ++i) CHECK(idp[i] == y[i]);
}

TEST_CASE("correlate/convolve match the naive oracles on random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t C = 1 + rng.index(3);
    const std::size_t kh = 1 + rng.index(4), kw = 1 + rng.index(4);
    const std::size_t H = kh + rng.index(10), W = kw + rng.index(10);
    const Tensor x = random_tensor({C, H, W}, rng);
    const Tensor k = random_tensor({C, kh, kw}, rng);
    CHECK(max_rel_diff(correlate_valid(x, k), naive_correlate_valid(x, k)) <
          1e-12);
    const Tensor y = random_tensor({H, W}, rng);
    CHECK(max_rel_diff(convolve_full(y, k), naive_convolve_full(y, k)) <
          1e-12);
  }
}

TEST_CASE("adjoint identity <corr(x,k),y> == <x, conv(y,k)>") {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t C = 1 + rng.index(3);
    const std::size_t kh = 1 + rng.index(5), kw = 1 + rng.index(5);
    const std::size_t H = kh + rng.index(16 - kh), W = kw + rng.index(16 - kw);
    const Tensor x = random_tensor({C, H, W}, rng);
    const Tensor k = random_tensor({C, kh, kw}, rng);
    const Tensor y = random_tensor({H - kh + 1, W - kw + 1}, rng);
    const double lhs = correlate_valid(x, k).dot(y);
    const double rhs = x.dot(convolve_full(y, k));
    const double rel = std::fabs(lhs - rhs) /
                       std::max({std::fabs(lhs), std::fabs(rhs), 1e-30});
    worst = std::max(worst, rel);
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("correlate_valid is linear in the input") {
  Rng rng(13);
  const Tensor x = random_tensor({2, 8, 9}, rng);
  const Tensor y = random_tensor({2, 8, 9}, rng);
  const Tensor k = random_tensor({2, 3, 3}, rng);
  const double a = 1.75, b = -0.625;
  Tensor combo = x;
  combo.scale(a);
  combo.add_scaled(y, b);
  Tensor expect = correlate_valid(x, k);
  expect.scale(a);
  expect.add_scaled(correlate_valid(y, k), b);
  CHECK(max_rel_diff(correlate_valid(combo, k), expect) < 1e-12);
}

TEST_CASE("output shapes follow the valid/full arithmetic") {
  Rng rng(17);
  for (std::size_t kh = 1; kh <= 4; ++kh) {
    for (std::size_t H = kh; H <= kh + 5; ++H) {
      const Tensor x = random_tensor({1, H, H + 1}, rng);
      const Tensor k = random_tensor({1, kh, kh}, rng);
      const Tensor v = correlate_valid(x, k);
      CHECK(v.extent(0) == H - kh + 1);
      CHECK(v.extent(1) == H + 1 - kh + 1);
      const Tensor y = random_tensor({H, H + 1}, rng);
      const Tensor f = convolve_full(y, k);
      CHECK(f.extent(f.rank() - 2) == H + kh - 1);
      CHECK(f.extent(f.rank() - 1) == H + 1 + kh - 1);
    }
  }
}

TEST_CASE("correlate_valid rejects bad shapes") {
  const Tensor x({2, 2}, {1, 2, 3, 4});
  CHECK_THROWS_AS(correlate_valid(x, Tensor({3, 3})), DimensionError);
  CHECK_THROWS_AS(correlate_valid(Tensor({2, 2, 2}), Tensor({3, 1, 1})),
                  DimensionError);
}

TEST_CASE("reduce_stats") {
  const Tensor t({2}, {1, 3});
  const TensorStats s = reduce_stats(t);
  CHECK(s.mean == doctest::Approx(2.0));
  CHECK(s.variance == doctest::Approx(1.0));
  CHECK(s.l1 == doctest::Approx(4.0));
  CHECK(s.l2sq == doctest::Approx(10.0));

  const TensorStats z = reduce_stats(Tensor({3, 3}));
  CHECK(z.mean == 0.0);
  CHECK(z.variance == 0.0);
  CHECK(z.l1 == 0.0);
  CHECK(z.l2sq == 0.0);

  const TensorStats c = reduce_stats(Tensor::full({5}, 2.5));
  CHECK(c.variance == doctest::Approx(0.0));

  CHECK_THROWS_AS(reduce_stats(Tensor()), DimensionError);
}

TEST_CASE("tensor invariants and helpers") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), DimensionError);
  Tensor t({2, 2}, {1, -2, 0, 4});
  CHECK(t.l1_norm() == 7.0);
  CHECK(t.l2_norm_sq() == 21.0);
  CHECK(t.count_nonzero() == 3);
  CHECK(t.max_abs() == 4.0);
  t[1] = std::nan("");
  CHECK_THROWS_AS(t.check_finite("test"), NumericalError);
}
