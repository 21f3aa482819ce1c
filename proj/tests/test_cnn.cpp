#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>

#include "deconvparse/cnn.hpp"
#include "deconvparse/rng.hpp"

using namespace deconvparse;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& x : t.values()) x = rng.normal();
  return t;
}

// Central finite differences over every entry of a parameter tensor.
double max_fd_rel_error(Tensor& param, const Tensor& analytic,
                        const std::function<double()>& loss_fn,
                        double h = 1e-5) {
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + h;
    const double up = loss_fn();
    param[i] = keep - h;
    const double down = loss_fn();
    param[i] = keep;
    const double fd = (up - down) / (2.0 * h);
    const double scale =
        std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-4});
    worst = std::max(worst, std::fabs(fd - analytic[i]) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("relu is idempotent and clamps") {
  Rng rng(3);
  const Tensor x = random_tensor({4, 4}, rng);
  const Tensor once = relu(x);
  const Tensor twice = relu(once);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(once[i] == (x[i] > 0 ? x[i] : 0.0));
    CHECK(twice[i] == once[i]);
  }
}

TEST_CASE("conv stage with a delta filter reduces to max pooling") {
  Rng rng(5);
  Tensor x = random_tensor({1, 4, 4}, rng);
  for (double& v : x.values()) v = std::fabs(v);  // nonnegative input

  ConvStageParams p;
  p.filters = Tensor({1, 1, 1, 1}, {1.0});
  p.biases = Tensor({1});
  p.pool = PoolRegion{1, 2, 2};
  const ConvStageActs acts = conv_stage_forward(x, p);
  const PoolResult expect = pool(x, PoolRegion{1, 2, 2});
  REQUIRE(acts.pooled.same_shape(expect.pooled));
  for (std::size_t i = 0; i < acts.pooled.size(); ++i) {
    CHECK(acts.pooled[i] == expect.pooled[i]);
  }
}

TEST_CASE("conv stage clamps all-negative input to zero") {
  Rng rng(7);
  Tensor x = random_tensor({2, 6, 6}, rng);
  for (double& v : x.values()) v = -std::fabs(v) - 0.1;
  ConvStageParams p;
  p.filters = Tensor({3, 2, 3, 3});
  p.biases = Tensor({3});
  // positive filters guarantee negative pre-activations
  p.filters.fill(0.5);
  p.pool = PoolRegion{1, 2, 2};
  const ConvStageActs acts = conv_stage_forward(x, p);
  CHECK(acts.pooled.count_nonzero() == 0);
}

TEST_CASE("conv stage output shape arithmetic") {
  Rng rng(9);
  const Tensor x = random_tensor({3, 64, 64}, rng);
  ConvStageParams p;
  p.filters = random_tensor({8, 3, 5, 5}, rng);
  p.biases = Tensor({8});
  p.pool = PoolRegion{1, 2, 2};
  const ConvStageActs acts = conv_stage_forward(x, p);
  // (64 - 5 + 1) / 2 = 30
  CHECK(acts.pooled.shape() == std::vector<std::size_t>{8, 30, 30});
}

TEST_CASE("dropout identity cases") {
  Rng rng(11);
  const Tensor x = random_tensor({5, 5}, rng);
  const Tensor same = dropout_apply(x, 0.0, 123, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);
  const Tensor eval = dropout_apply(x, 0.9, 123, false);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(eval[i] == x[i]);
  CHECK_THROWS_AS(dropout_apply(x, 1.0, 1, true), ParameterError);
  CHECK_THROWS_AS(dropout_apply(x, -0.1, 1, true), ParameterError);
}

TEST_CASE("dropout is deterministic per seed and unbiased in expectation") {
  Rng rng(13);
  const Tensor x = random_tensor({100}, rng);
  const Tensor a = dropout_apply(x, 0.5, 999, true);
  const Tensor b = dropout_apply(x, 0.5, 999, true);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(a[i] == b[i]);

  // Monte Carlo expectation over 1e5 trials on one element
  const Tensor one = Tensor::full({1}, 1.0);
  double acc = 0.0;
  const int trials = 100000;
  for (int t = 0; t < trials; ++t) {
    acc += dropout_apply(one, 0.5, static_cast<std::uint64_t>(t), true)[0];
  }
  acc /= trials;
  CHECK(acc == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("head_forward softmax probabilities") {
  HeadParams p = make_head(HeadMode::softmax, 2, 2, 2, 3);
  p.weights.fill(0.0);
  p.biases.fill(0.0);
  Rng rng(17);
  const Tensor f = random_tensor({3}, rng);
  const Tensor out = head_forward(f, p);
  REQUIRE(out.shape() == std::vector<std::size_t>{2, 2, 2});
  for (std::size_t px = 0; px < 4; ++px) {
    CHECK(out[px * 2 + 0] == doctest::Approx(0.5));
    CHECK(out[px * 2 + 1] == doctest::Approx(0.5));
  }

  // probabilities sum to one for any parameters
  HeadParams q = make_head(HeadMode::softmax, 3, 2, 4, 5);
  q.weights = random_tensor({q.units(), 5}, rng);
  q.biases = random_tensor({q.units()}, rng);
  const Tensor f2 = random_tensor({5}, rng);
  const Tensor out2 = head_forward(f2, q);
  for (std::size_t px = 0; px < 6; ++px) {
    double s = 0.0;
    for (std::size_t c = 0; c < 4; ++c) s += out2[px * 4 + c];
    CHECK(std::fabs(s - 1.0) <= 1e-12);
  }
}

TEST_CASE("head_forward sigmoid at zero logit") {
  HeadParams p = make_head(HeadMode::sigmoid, 2, 2, 2, 3);
  p.weights.fill(0.0);
  p.biases.fill(0.0);
  const Tensor f({3}, {1, 2, 3});
  const Tensor out = head_forward(f, p);
  for (std::size_t px = 0; px < 4; ++px) {
    CHECK(out[px * 2 + 0] == doctest::Approx(0.5));
    CHECK(out[px * 2 + 1] == doctest::Approx(0.5));
  }
  CHECK_THROWS_AS(make_head(HeadMode::sigmoid, 2, 2, 3, 3),
                  ParameterError);
}

TEST_CASE("cross_entropy_loss frozen values") {
  // perfect one-hot prediction
  Tensor pred({1, 2, 2});
  LabelMap target(1, 2);
  target.at(0, 0) = 0;
  target.at(0, 1) = 1;
  pred.at3(0, 0, 0) = 1.0;
  pred.at3(0, 1, 1) = 1.0;
  CHECK(cross_entropy_loss(pred, target) ==
        doctest::Approx(0.0).epsilon(1e-9));

  // uniform prediction over C classes -> ln C
  Tensor uni = Tensor::full({2, 2, 4}, 0.25);
  LabelMap t2(2, 2);
  CHECK(cross_entropy_loss(uni, t2) == doctest::Approx(std::log(4.0)));

  LabelMap bad(1, 2);
  bad.at(0, 0) = 5;
  CHECK_THROWS_AS(cross_entropy_loss(pred, bad), LabelError);
}

TEST_CASE("softmax cross entropy gradient vs finite differences") {
  Rng rng(19);
  Tensor logits = random_tensor({3, 3, 4}, rng);
  LabelMap target(3, 3);
  for (int& v : target.v) v = static_cast<int>(rng.index(4));

  Tensor analytic;
  softmax_xent_grad(logits, target, analytic);
  const double worst = max_fd_rel_error(logits, analytic, [&]() {
    Tensor d;
    return softmax_xent_grad(logits, target, d);
  });
  CHECK(worst <= 1e-4);
}

TEST_CASE("sgd_step") {
  Tensor w({1}, {1.0});
  sgd_step(w, Tensor({1}), 0.1);
  CHECK(w[0] == 1.0);  // zero gradient is a fixed point
  const Tensor g({1}, {2.0});
  sgd_step(w, g, 0.0);
  CHECK(w[0] == 1.0);  // zero rate is a fixed point
  // f(w) = w^2 at w=1, lr=0.1: w <- 1 - 0.1*2 = 0.8
  sgd_step(w, g, 0.1);
  CHECK(w[0] == doctest::Approx(0.8));
  CHECK_THROWS_AS(sgd_step(w, Tensor({2}), 0.1), DimensionError);
}

TEST_CASE("end-to-end gradient check: conv stage + head + cross entropy") {
  // 3-class toy on an 8x8 image, dropout off. Margins in the pooling
  // argmax are generically safe at h = 1e-5.
  Rng rng(23);
  const Tensor x = random_tensor({1, 8, 8}, rng);
  ConvStageParams stage;
  stage.filters = random_tensor({2, 1, 3, 3}, rng);
  stage.biases = random_tensor({2}, rng);
  stage.pool = PoolRegion{1, 2, 2};

  const std::size_t D = 2 * 3 * 3;
  HeadParams head = make_head(HeadMode::softmax, 2, 2, 3, D);
  // small random parameters keep the softmax away from the clamp plateau
  head.weights = random_tensor({head.units(), D}, rng);
  head.weights.scale(0.05);
  head.biases = random_tensor({head.units()}, rng);
  head.biases.scale(0.05);
  LabelMap target(2, 2);
  for (int& v : target.v) v = static_cast<int>(rng.index(3));

  // forward pass producing logits [2,2,3] from the flattened pooled maps
  auto logits_of = [&]() {
    const ConvStageActs acts = conv_stage_forward(x, stage);
    Tensor logits({2, 2, 3});
    const double* f = acts.pooled.data();
    for (std::size_t u = 0; u < head.units(); ++u) {
      const double* w = head.weights.data() + u * D;
      double acc = head.biases[u];
      for (std::size_t i = 0; i < D; ++i) acc += w[i] * f[i];
      logits[u] = acc;
    }
    return logits;
  };
  auto loss_of = [&]() {
    Tensor d;
    const Tensor logits = logits_of();
    return softmax_xent_grad(logits, target, d);
  };

  // analytic gradients
  const ConvStageActs acts = conv_stage_forward(x, stage);
  Tensor d_logits;
  const Tensor logits = logits_of();
  softmax_xent_grad(logits, target, d_logits);

  Tensor d_w(std::vector<std::size_t>(head.weights.shape()));
  Tensor d_b(std::vector<std::size_t>(head.biases.shape()));
  Tensor d_feat({D});
  const double* f = acts.pooled.data();
  for (std::size_t u = 0; u < head.units(); ++u) {
    const double g = d_logits[u];
    d_b[u] = g;
    double* dwr = d_w.data() + u * D;
    const double* w = head.weights.data() + u * D;
    for (std::size_t i = 0; i < D; ++i) {
      dwr[i] = g * f[i];
      d_feat[i] += g * w[i];
    }
  }
  Tensor d_pooled({2, 3, 3});
  std::copy(d_feat.data(), d_feat.data() + D, d_pooled.data());
  const ConvStageGrads grads =
      conv_stage_backward(x, stage, acts, d_pooled, false);

  CHECK(max_fd_rel_error(head.weights, d_w, loss_of) <= 1e-4);
  CHECK(max_fd_rel_error(head.biases, d_b, loss_of) <= 1e-4);
  CHECK(max_fd_rel_error(stage.filters, grads.d_filters, loss_of) <= 1e-4);
  CHECK(max_fd_rel_error(stage.biases, grads.d_biases, loss_of) <= 1e-4);
}
