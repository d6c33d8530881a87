#include <doctest.h>

#include <cmath>

#include "signattack/nn.hpp"
#include "signattack/rng.hpp"
#include "test_helpers.hpp"

using namespace signattack;

namespace {

// direct convolution, written independently of the im2col path
Tensor direct_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, int in_c, int out_c,
                   int ksize, int stride) {
  int pad = ksize / 2;
  int oh = (x.h() + 2 * pad - ksize) / stride + 1;
  int ow = (x.w() + 2 * pad - ksize) / stride + 1;
  Tensor out(x.n(), oh, ow, out_c);
  for (int n = 0; n < x.n(); ++n)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox)
        for (int oc = 0; oc < out_c; ++oc) {
          double acc = bias.at(0, 0, 0, oc);
          for (int ky = 0; ky < ksize; ++ky)
            for (int kx = 0; kx < ksize; ++kx)
              for (int ic = 0; ic < in_c; ++ic) {
                int iy = oy * stride - pad + ky;
                int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += weight.at(0, 0, (ky * ksize + kx) * in_c + ic, oc) * x.at(n, iy, ix, ic);
              }
          out.at(n, oy, ox, oc) = acc;
        }
  return out;
}

Tensor random_tensor(int n, int h, int w, int c, Rng& rng, double lo = -1, double hi = 1) {
  Tensor t(n, h, w, c);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// scalar probe loss: fixed random projection of the layer output
struct Probe {
  Tensor weights;
  double value(const Tensor& out) const {
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += weights[i] * out[i];
    return s;
  }
  Tensor grad() const { return weights; }
};

Probe make_probe(const Tensor& shaped, Rng& rng) {
  Probe p{zeros_like(shaped)};
  for (std::size_t i = 0; i < p.weights.size(); ++i) p.weights[i] = rng.uniform(-1, 1);
  return p;
}

// central finite differences through layer.forward against layer.backward
void check_input_gradient(nn::Layer& layer, const Tensor& x0, Rng& rng, int samples = 20,
                          double step = 1e-4, double tol = 1e-3) {
  Tensor x = x0;
  Tensor out = layer.forward(x);
  Probe probe = make_probe(out, rng);
  Tensor analytic = layer.backward(probe.grad());
  REQUIRE(analytic.same_shape(x));

  for (int s = 0; s < samples; ++s) {
    std::size_t i = static_cast<std::size_t>(rng.uniform_int(x.size()));
    Tensor xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    double fp = probe.value(layer.forward(xp));
    double fm = probe.value(layer.forward(xm));
    double numeric = (fp - fm) / (2 * step);
    double denom = std::max({std::abs(numeric), std::abs(analytic[i]), 1e-6});
    CHECK(std::abs(numeric - analytic[i]) / denom < tol);
  }
  layer.forward(x);  // restore the cached state
}

}  // namespace

TEST_CASE("conv2d forward matches direct convolution") {
  Rng rng(1);
  for (int stride : {1, 2}) {
    nn::Conv2d conv(3, 4, 3, stride, rng);
    Tensor x = random_tensor(2, 6, 5, 3, rng);
    Tensor got = conv.forward(x);
    Tensor want = direct_conv(x, conv.weight, conv.bias, 3, 4, 3, stride);
    REQUIRE(got.same_shape(want));
    for (std::size_t i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d input gradient passes finite differences") {
  Rng rng(2);
  for (int stride : {1, 2}) {
    nn::Conv2d conv(2, 3, 3, stride, rng);
    Tensor x = random_tensor(1, 5, 5, 2, rng);
    check_input_gradient(conv, x, rng);
  }
}

TEST_CASE("conv2d parameter gradients pass finite differences") {
  Rng rng(3);
  nn::Conv2d conv(2, 3, 3, 1, rng);
  Tensor x = random_tensor(1, 4, 4, 2, rng);
  Tensor out = conv.forward(x);
  Probe probe = make_probe(out, rng);
  conv.grad_weight.fill(0.0);
  conv.grad_bias.fill(0.0);
  conv.backward(probe.grad());

  for (int s = 0; s < 15; ++s) {
    std::size_t i = static_cast<std::size_t>(rng.uniform_int(conv.weight.size()));
    double step = 1e-4;
    double orig = conv.weight[i];
    conv.weight[i] = orig + step;
    double fp = probe.value(conv.forward(x));
    conv.weight[i] = orig - step;
    double fm = probe.value(conv.forward(x));
    conv.weight[i] = orig;
    double numeric = (fp - fm) / (2 * step);
    double denom = std::max({std::abs(numeric), std::abs(conv.grad_weight[i]), 1e-6});
    CHECK(std::abs(numeric - conv.grad_weight[i]) / denom < 1e-3);
  }
}

TEST_CASE("dense, activations and pooling pass finite differences") {
  Rng rng(4);
  {
    nn::Dense dense(24, 5, rng);
    check_input_gradient(dense, random_tensor(2, 2, 2, 6, rng), rng);
  }
  {
    nn::Relu relu;
    check_input_gradient(relu, random_tensor(2, 3, 3, 2, rng), rng);
  }
  {
    nn::TanhLayer tanh_layer;
    check_input_gradient(tanh_layer, random_tensor(2, 3, 3, 2, rng), rng);
  }
  {
    nn::SigmoidLayer sigmoid;
    check_input_gradient(sigmoid, random_tensor(2, 3, 3, 2, rng), rng);
  }
  {
    nn::MaxPool2 pool;
    check_input_gradient(pool, random_tensor(2, 6, 6, 3, rng), rng);
  }
}

TEST_CASE("maxpool picks maxima and routes gradient to them") {
  nn::MaxPool2 pool;
  Tensor x(1, 2, 2, 1);
  x.at(0, 0, 0, 0) = 0.1;
  x.at(0, 0, 1, 0) = 0.9;
  x.at(0, 1, 0, 0) = 0.3;
  x.at(0, 1, 1, 0) = 0.2;
  Tensor out = pool.forward(x);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == 0.9);
  Tensor g(1, 1, 1, 1);
  g[0] = 2.5;
  Tensor gi = pool.backward(g);
  CHECK(gi.at(0, 0, 1, 0) == 2.5);
  CHECK(gi.at(0, 0, 0, 0) == 0.0);
}

TEST_CASE("residual unit with zeroed branch is the identity") {
  Rng rng(5);
  nn::ResidualUnit unit(3, 3, 1, "relu", rng);
  std::vector<nn::ParamRef> params;
  unit.collect_params(params);
  for (auto& p : params) p.value->fill(0.0);
  Tensor x = random_tensor(1, 4, 4, 3, rng);
  Tensor out = unit.forward(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(out[i] == x[i]);
}

TEST_CASE("residual unit gradients pass finite differences") {
  Rng rng(6);
  for (int stride : {1, 2}) {
    nn::ResidualUnit unit(2, stride == 1 ? 2 : 4, stride, "relu", rng);
    check_input_gradient(unit, random_tensor(1, 6, 6, 2, rng), rng);
  }
}

TEST_CASE("attention module gradients pass finite differences") {
  Rng rng(7);
  nn::AttentionModule module(2, "relu", rng);
  check_input_gradient(module, random_tensor(1, 8, 8, 2, rng), rng, 25);
}

TEST_CASE("attention module on tiny spatial inputs still round-trips shapes") {
  Rng rng(8);
  nn::AttentionModule module(1, "relu", rng);
  Tensor x = random_tensor(1, 2, 2, 1, rng);
  Tensor out = module.forward(x);
  CHECK(out.same_shape(x));
  Tensor grad = module.backward(out);
  CHECK(grad.same_shape(x));
}

TEST_CASE("softmax rows sum to one and ties pick the lowest index") {
  Rng rng(9);
  Tensor logits = random_tensor(4, 1, 1, 7, rng, -5, 5);
  Tensor probs = nn::softmax_rows(logits);
  for (int i = 0; i < 4; ++i) {
    double sum = 0.0;
    for (int j = 0; j < 7; ++j) sum += probs.at(i, 0, 0, j);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
  Tensor zeros(1, 1, 1, 5);
  CHECK(nn::argmax_row(nn::softmax_rows(zeros), 0) == 0);
}

TEST_CASE("cross entropy equals -log p_y and its gradient is softmax minus onehot") {
  Rng rng(10);
  Tensor logits = random_tensor(3, 1, 1, 4, rng, -3, 3);
  std::vector<int> targets = {2, 0, 3};
  auto ce = nn::softmax_cross_entropy(logits, targets);
  Tensor probs = nn::softmax_rows(logits);
  for (int i = 0; i < 3; ++i)
    CHECK(ce.per_sample[i] ==
          doctest::Approx(-std::log(probs.at(i, 0, 0, targets[i]))).epsilon(1e-12));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      double want = (probs.at(i, 0, 0, j) - (j == targets[i] ? 1.0 : 0.0)) / 3.0;
      CHECK(ce.grad_logits.at(i, 0, 0, j) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("adam drives a quadratic to its minimum") {
  Tensor x(1, 1, 1, 2);
  x[0] = 3.0;
  x[1] = -2.0;
  Tensor g = zeros_like(x);
  nn::Adam adam(0.1, 0.9, 0.999, 1e-8);
  for (int it = 0; it < 400; ++it) {
    g[0] = 2 * (x[0] - 1.0);
    g[1] = 2 * (x[1] + 0.5);
    adam.step({{&x, &g}});
  }
  CHECK(x[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(x[1] == doctest::Approx(-0.5).epsilon(1e-3));
}

TEST_CASE("sequential prefix forward/backward matches composing layers") {
  Rng rng(12);
  nn::Sequential seq;
  seq.add(std::make_unique<nn::Conv2d>(2, 3, 3, 1, rng));
  seq.add(std::make_unique<nn::Relu>());
  seq.add(std::make_unique<nn::Dense>(3 * 4 * 4, 3, rng));
  seq.add(std::make_unique<nn::Softmax>());

  Tensor x = random_tensor(1, 4, 4, 2, rng);
  Tensor logits = seq.forward_prefix(x, 1);
  CHECK(logits.c() == 3);
  Tensor full = seq.forward(x);
  double sum = 0.0;
  for (int j = 0; j < 3; ++j) sum += full.at(0, 0, 0, j);
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(seq.summary().back() == "softmax");
}
