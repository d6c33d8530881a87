#include <doctest.h>

#include <cmath>

#include "signattack/attack.hpp"
#include "signattack/errors.hpp"
#include "signattack/rng.hpp"
#include "signattack/synthetic.hpp"
#include "test_helpers.hpp"

using namespace signattack;

namespace {

// mean-threshold model: predicts 1 when the mean pixel exceeds `threshold`
TrainedClassifier mean_model(int side, double threshold) {
  int features = side * side * 3;
  Tensor w0(1, 1, 1, features), w1(1, 1, 1, features);
  for (int i = 0; i < features; ++i) w1[i] = 1.0;
  return test_helpers::linear_model(w0.slice(0), w1.slice(0), 0.0, -threshold * features, side);
}

LabeledImage uniform_image(int side, double value, int label, const std::string& id) {
  LabeledImage img;
  img.pixels = test_helpers::filled(1, side, side, 3, value);
  img.label = label;
  img.id = id;
  return img;
}

AttentionMap ones_map(int side, int cls) {
  AttentionMap m;
  m.weights = test_helpers::filled(1, side, side, 1, 1.0);
  m.class_index = cls;
  m.source_image_id = "ones";
  return m;
}

}  // namespace

TEST_CASE("apply: additive identity, clipping, and hand-computed fixture") {
  const int side = 8;
  LabeledImage img = uniform_image(side, 0.5, 0, "x");

  Perturbation zero;
  zero.delta = Tensor(1, side, side, 1);
  zero.mode = ChannelMode::grayscale_broadcast;
  Tensor out = apply_perturbation(img.pixels, zero, nullptr);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == img.pixels[i]);

  Perturbation pos;
  pos.delta = test_helpers::filled(1, side, side, 1, 0.7);
  pos.mode = ChannelMode::grayscale_broadcast;
  Tensor ones_img = test_helpers::filled(1, side, side, 3, 1.0);
  Tensor clipped = apply_perturbation(ones_img, pos, nullptr);
  for (std::size_t i = 0; i < clipped.size(); ++i) CHECK(clipped[i] == 1.0);

  // 2x2 pixel-by-pixel arithmetic with a soft map
  Tensor x(1, 2, 2, 3);
  double px[4] = {0.1, 0.5, 0.9, 0.2};
  for (int p = 0; p < 4; ++p)
    for (int c = 0; c < 3; ++c) x.at(0, p / 2, p % 2, c) = px[p];
  Perturbation d;
  d.mode = ChannelMode::grayscale_broadcast;
  d.delta = Tensor(1, 2, 2, 1);
  double dv[4] = {0.3, -0.2, 0.4, -0.5};
  for (int p = 0; p < 4; ++p) d.delta[p] = dv[p];
  Tensor map(1, 2, 2, 1);
  double mv[4] = {1.0, 0.5, 0.0, 1.0};
  for (int p = 0; p < 4; ++p) map[p] = mv[p];

  Tensor adv = apply_perturbation(x, d, &map);
  for (int p = 0; p < 4; ++p) {
    double want = std::clamp(px[p] + mv[p] * dv[p], 0.0, 1.0);
    for (int c = 0; c < 3; ++c) CHECK(adv.at(0, p / 2, p % 2, c) == doctest::Approx(want));
  }
  // zero-weight pixels never move
  for (int c = 0; c < 3; ++c) CHECK(adv.at(0, 1, 0, c) == x.at(0, 1, 0, c));

  Perturbation wrong;
  wrong.delta = Tensor(1, 4, 4, 1);
  CHECK_THROWS_AS(apply_perturbation(x, wrong, nullptr), ShapeError);
}

TEST_CASE("effective noise: single-channel norm convention") {
  Perturbation p;
  p.mode = ChannelMode::grayscale_broadcast;
  p.delta = test_helpers::filled(1, 32, 32, 1, 1.0);
  CHECK(effective_noise(p, nullptr).l2_norm() == doctest::Approx(32.0));
}

TEST_CASE("fgsm: zero epsilon is the identity and steps live on the sign grid") {
  const int side = 8;
  auto model = mean_model(side, 0.5);
  LabeledImage img = uniform_image(side, 0.7, 1, "a");

  auto zero = fgsm(model, img, 0, 0.0);
  for (std::size_t i = 0; i < zero.pixels.size(); ++i) CHECK(zero.pixels[i] == img.pixels[i]);
  CHECK(zero.epsilon_used == 0.0);

  Tensor stepped = fgsm_step(model, img.pixels, 0, 0.05);
  for (std::size_t i = 0; i < stepped.size(); ++i) {
    double diff = stepped[i] - img.pixels[i];
    bool on_grid = std::abs(diff) < 1e-12 || std::abs(std::abs(diff) - 0.05) < 1e-12;
    CHECK(on_grid);
  }
}

TEST_CASE("fgsm flipping epsilon matches the analytic margin threshold") {
  const int side = 8;
  const int features = side * side * 3;
  Rng rng(3);
  Tensor w0(1, 1, 1, features), w1(1, 1, 1, features);
  for (int i = 0; i < features; ++i) {
    w0[i] = rng.uniform(-0.5, 0.5);
    w1[i] = rng.uniform(-0.5, 0.5);
  }
  double b0 = 0.2, b1 = -0.1;
  auto model = test_helpers::linear_model(w0.slice(0), w1.slice(0), b0, b1, side);

  LabeledImage img = uniform_image(side, 0.5, 0, "x");
  REQUIRE(model.predict(img.pixels).label == 0);  // verify the setup

  // label flips to 1 when (w1-w0).x' + (b1-b0) > 0; the fgsm step moves x by
  // -eps*sign(grad) with sign(grad) = sign(w0-w1) elementwise, so the logit
  // gap grows by eps*||w1-w0||_1 per unit epsilon
  double margin = 0.0, l1 = 0.0;
  for (int i = 0; i < features; ++i) {
    margin += (w1[i] - w0[i]) * 0.5;
    l1 += std::abs(w1[i] - w0[i]);
  }
  margin += b1 - b0;
  REQUIRE(margin < 0.0);
  double eps_star = -margin / l1;

  const int grid = 400;
  const double eps_max = 0.2;
  REQUIRE(eps_star < eps_max);  // interior, and 0.5 +- eps stays unclipped
  auto res = fgsm(model, img, 1, eps_max, grid);
  CHECK(res.success);
  CHECK(std::abs(res.epsilon_used - eps_star) <= eps_max / grid + 1e-12);
}

TEST_CASE("salt_pepper corrupts pixels to exactly {0,1} on a nested schedule") {
  const int side = 8;
  // threshold well above the corrupted-pixel mean of 0.5, so the schedule
  // reliably flips the prediction
  auto model = mean_model(side, 0.75);
  LabeledImage img = uniform_image(side, 0.9, 1, "a");

  auto res = salt_pepper(model, img, 77);
  CHECK(res.success);
  CHECK(res.param > 0.0);
  int corrupted = 0;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double v = res.pixels.at(0, y, x, 0);
      if (v != 0.9) {
        CHECK((v == 0.0 || v == 1.0));
        // whole pixel corrupted across channels
        CHECK(res.pixels.at(0, y, x, 1) == v);
        CHECK(res.pixels.at(0, y, x, 2) == v);
        ++corrupted;
      }
    }
  CHECK(corrupted > 0);

  // replay oracle: regenerate the schedule with the same seed and verify the
  // attack stopped at the first flipping fraction
  Rng rng(77);
  std::vector<double> order(side * side), value(side * side);
  for (auto& v : order) v = rng.uniform();
  for (auto& v : value) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
  int steps = 50;
  double first_flip = 0.0;
  for (int k = 1; k <= steps; ++k) {
    double f = static_cast<double>(k) / steps;
    Tensor noisy = img.pixels;
    for (int p = 0; p < side * side; ++p)
      if (order[p] < f)
        for (int c = 0; c < 3; ++c) noisy.at(0, p / side, p % side, c) = value[p];
    if (model.predict(noisy).label != img.label) {
      first_flip = f;
      break;
    }
  }
  CHECK(res.param == doctest::Approx(first_flip));

  // determinism
  auto res2 = salt_pepper(model, img, 77);
  for (std::size_t i = 0; i < res.pixels.size(); ++i) CHECK(res.pixels[i] == res2.pixels[i]);
}

TEST_CASE("contrast reduction blends toward the mean over a linear grid") {
  const int side = 8;
  auto model = mean_model(side, 0.5);
  // gradient image: mean 0.55, prediction 1
  LabeledImage img;
  img.pixels = Tensor(1, side, side, 3);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      for (int c = 0; c < 3; ++c) img.pixels.at(0, y, x, c) = 0.55 + 0.4 * (y - 3.5) / 3.5;
  img.label = 1;
  img.id = "grad";
  REQUIRE(model.predict(img.pixels).label == 1);

  // full blend is the constant mean image
  double mean = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) mean += img.pixels[i];
  mean /= img.pixels.size();
  auto res = contrast_reduction(model, img);
  // this model never flips under contrast reduction (mean stays put), so the
  // final blend must be the constant image and the attack reports failure
  CHECK_FALSE(res.success);
  CHECK(res.param == doctest::Approx(1.0));
  for (std::size_t i = 0; i < res.pixels.size(); ++i)
    CHECK(res.pixels[i] == doctest::Approx(mean).epsilon(1e-12));

  // a model thresholding on a corner pixel flips at a predictable t
  const int features = side * side * 3;
  Tensor w0(1, 1, 1, features), w1(1, 1, 1, features);
  w1[0] = 1.0;  // looks only at pixel (0,0,0), threshold 0.4
  auto corner_model = test_helpers::linear_model(w0.slice(0), w1.slice(0), 0.0, -0.4, side);
  REQUIRE(corner_model.predict(img.pixels).label == 0);  // corner value 0.15
  LabeledImage img0 = img;
  img0.label = 0;
  auto res2 = contrast_reduction(corner_model, img0);
  CHECK(res2.success);
  // corner pixel alpha-blends to the mean: 0.15 + t*(mean-0.15) crosses 0.4
  double t_star = (0.4 - img.pixels[0]) / (mean - img.pixels[0]);
  CHECK(res2.param >= t_star);
  CHECK(res2.param - t_star <= 1.0 / 50 + 1e-12);
}

TEST_CASE("gaussian blur: zero sigma identity, unit kernel mass, constant invariance") {
  Rng rng(9);
  Tensor x(1, 8, 8, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  Tensor same = gaussian_blur_pixels(x, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

  Tensor flat = test_helpers::filled(1, 8, 8, 3, 0.42);
  Tensor blurred = gaussian_blur_pixels(flat, 1.7);
  for (std::size_t i = 0; i < flat.size(); ++i)
    CHECK(blurred[i] == doctest::Approx(0.42).epsilon(1e-12));

  // blur must preserve total mass on interior-heavy content (kernel sums to 1)
  Tensor soft = gaussian_blur_pixels(x, 0.8);
  double before = 0.0, after = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    before += x[i];
    after += soft[i];
  }
  CHECK(after == doctest::Approx(before).epsilon(0.05));
}

TEST_CASE("pointwise: returns clean when already target, shrinks the seed's support") {
  const int side = 8;
  auto model = mean_model(side, 0.5);

  LabeledImage already = uniform_image(side, 0.8, 1, "hit");
  auto res = pointwise(model, already, 1, 5);
  CHECK(res.success);
  CHECK(res.l0 == 0);
  for (std::size_t i = 0; i < res.pixels.size(); ++i) CHECK(res.pixels[i] == already.pixels[i]);

  // dark image, target = bright class: seed succeeds, greedy pass shrinks it
  LabeledImage dark = uniform_image(side, 0.2, 0, "dark");
  auto res2 = pointwise(model, dark, 1, 5);
  CHECK(res2.success);
  CHECK(model.predict(res2.pixels).label == 1);
  CHECK(res2.l0 > 0);
  CHECK(res2.l0 <= side * side);

  // determinism
  auto res3 = pointwise(model, dark, 1, 5);
  CHECK(res3.l0 == res2.l0);
  for (std::size_t i = 0; i < res2.pixels.size(); ++i) CHECK(res2.pixels[i] == res3.pixels[i]);
}

TEST_CASE("average_perturbation: identity, cancellation, and a 3-element fixture") {
  Tensor v = test_helpers::filled(1, 2, 2, 3, 0.25);
  auto same = average_perturbation({v, v, v}, 0, 1);
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(same.delta[i] == doctest::Approx(0.25));

  Tensor neg = v;
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -neg[i];
  auto cancel = average_perturbation({v, neg}, 0, 1);
  for (std::size_t i = 0; i < cancel.delta.size(); ++i) CHECK(cancel.delta[i] == 0.0);

  Tensor a = test_helpers::filled(1, 1, 1, 3, 0.3);
  Tensor b = test_helpers::filled(1, 1, 1, 3, 0.6);
  Tensor c = test_helpers::filled(1, 1, 1, 3, -0.3);
  auto mean = average_perturbation({a, b, c}, 0, 1);
  for (std::size_t i = 0; i < mean.delta.size(); ++i)
    CHECK(mean.delta[i] == doctest::Approx(0.2).epsilon(1e-12));

  CHECK_THROWS_AS(average_perturbation({}, 0, 1), DataError);
}

TEST_CASE("taa: zero map annihilates delta; preconditions enforced") {
  const int side = 8;
  auto model = mean_model(side, 0.5);
  std::vector<LabeledImage> train = {uniform_image(side, 0.8, 1, "t0"),
                                     uniform_image(side, 0.75, 1, "t1")};

  AttentionMap zero_map;
  zero_map.weights = Tensor(1, side, side, 1);
  zero_map.class_index = 0;
  AttackObjectiveConfig obj;
  obj.target_class = 0;
  obj.epochs = 5;
  obj.seed = 3;
  auto result = taa_optimize(model, train, zero_map, obj, {});

  for (const auto& img : train) {
    Tensor adv = apply_perturbation(img.pixels, result.perturbation, &zero_map.weights);
    for (std::size_t i = 0; i < adv.size(); ++i) CHECK(adv[i] == img.pixels[i]);
  }
  // clean predictions are correct, so nothing reaches the target class
  CHECK(result.trace.back().asr == 0.0);
  CHECK(result.trace.back().p_loss == 0.0);

  AttentionMap mismatched = zero_map;
  mismatched.class_index = 1;  // attack targets 0, map says 1
  CHECK_THROWS_AS(taa_optimize(model, train, mismatched, obj, {}), ConfigError);
  CHECK_THROWS_AS(taa_optimize(model, {}, zero_map, obj, {}), DataError);
  std::vector<LabeledImage> mixed = {uniform_image(side, 0.8, 1, "a"),
                                     uniform_image(side, 0.8, 0, "b")};
  CHECK_THROWS_AS(taa_optimize(model, mixed, zero_map, obj, {}), DataError);
}

TEST_CASE("taa drives a soft-threshold model to the target and is deterministic") {
  const int side = 8;
  auto model = mean_model(side, 0.5);
  std::vector<LabeledImage> train;
  for (int i = 0; i < 6; ++i)
    train.push_back(uniform_image(side, 0.62 + 0.01 * i, 1, "img" + std::to_string(i)));

  AttentionMap map = ones_map(side, 0);
  AttackObjectiveConfig obj;
  obj.target_class = 0;
  obj.epochs = 60;
  obj.seed = 11;
  obj.lambda = 0.001;
  auto a = taa_optimize(model, train, map, obj, {});
  CHECK(a.trace.back().asr == doctest::Approx(1.0));  // all six flip to class 0

  auto b = taa_optimize(model, train, map, obj, {});
  REQUIRE(a.perturbation.delta.size() == b.perturbation.delta.size());
  for (std::size_t i = 0; i < a.perturbation.delta.size(); ++i)
    CHECK(a.perturbation.delta[i] == b.perturbation.delta[i]);

  // the objective settles far below where it started (the strict moving
  // average property is asserted on the blob toy in the acceptance suite;
  // this linear fixture oscillates at the flip boundary by design)
  CHECK(a.trace.back().objective < 0.25 * a.trace.front().objective);
}

TEST_CASE("binarize keeps the top-q pixels; rectangularize fills component boxes") {
  Tensor delta(1, 3, 3, 1);
  double vals[9] = {0.9, 0.1, 0.8, 0.05, 0.7, 0.02, 0.6, 0.01, 0.5};
  for (int i = 0; i < 9; ++i) delta[i] = vals[i];
  Tensor top4 = binarize_top_fraction(delta, 4.0 / 9.0);
  // largest |values|: 0.9, 0.8, 0.7, 0.6
  std::vector<int> want = {1, 0, 1, 0, 1, 0, 1, 0, 0};
  for (int i = 0; i < 9; ++i) CHECK(top4[i] == want[i]);

  Tensor all = binarize_top_fraction(delta, 1.0);
  for (int i = 0; i < 9; ++i) CHECK(all[i] == 1.0);

  // L-shaped component becomes its bounding box
  Tensor mask(1, 4, 4, 1);
  mask.at(0, 0, 0, 0) = 1;
  mask.at(0, 1, 0, 0) = 1;
  mask.at(0, 1, 1, 0) = 1;
  Tensor rect = rectangularize_mask(mask);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) CHECK(rect.at(0, y, x, 0) == 1.0);
  CHECK(rect.at(0, 2, 2, 0) == 0.0);
  CHECK(rect.at(0, 3, 3, 0) == 0.0);

  // all-ones stays all-ones
  Tensor ones = test_helpers::filled(1, 4, 4, 1, 1.0);
  Tensor still = rectangularize_mask(ones);
  for (std::size_t i = 0; i < still.size(); ++i) CHECK(still[i] == 1.0);
}

TEST_CASE("rp2 with q=1 reproduces all-ones-map taa bit-for-bit") {
  const int side = 8;
  auto model = mean_model(side, 0.5);
  std::vector<LabeledImage> train;
  for (int i = 0; i < 4; ++i)
    train.push_back(uniform_image(side, 0.7 + 0.02 * i, 1, "img" + std::to_string(i)));

  AttackObjectiveConfig obj;
  obj.target_class = 0;
  obj.epochs = 12;
  obj.seed = 29;
  obj.lambda = 0.01;
  OptimizerConfig opt;

  Rp2Config rp2cfg;
  rp2cfg.keep_fraction = 1.0;
  auto rp2 = rp2_optimize(model, train, obj, opt, ChannelMode::full_rgb, rp2cfg);

  auto taa = taa_optimize(model, train, ones_map(side, 0), obj, opt, ChannelMode::full_rgb);

  REQUIRE(rp2.perturbation.delta.size() == taa.perturbation.delta.size());
  for (std::size_t i = 0; i < rp2.perturbation.delta.size(); ++i)
    CHECK(rp2.perturbation.delta[i] == taa.perturbation.delta[i]);
  REQUIRE(rp2.trace.size() == taa.trace.size());
  for (std::size_t i = 0; i < rp2.trace.size(); ++i) {
    CHECK(rp2.trace[i].objective == taa.trace[i].objective);
    CHECK(rp2.trace[i].asr == taa.trace[i].asr);
    CHECK(rp2.trace[i].p_loss == taa.trace[i].p_loss);
  }
  for (std::size_t i = 0; i < rp2.mask.weights.size(); ++i) CHECK(rp2.mask.weights[i] == 1.0);
  CHECK(rp2.mask.provenance == MaskProvenance::rectangularized);
}

TEST_CASE("universal attacks keep adversarial pixels inside [0,1]") {
  const int side = 8;
  auto model = mean_model(side, 0.5);
  std::vector<LabeledImage> train = {uniform_image(side, 0.95, 1, "hi"),
                                     uniform_image(side, 0.05, 1, "lo")};
  AttackObjectiveConfig obj;
  obj.target_class = 0;
  obj.epochs = 30;
  obj.seed = 7;
  auto res = taa_optimize(model, train, ones_map(side, 0), obj, {});
  for (const auto& img : train) {
    Tensor adv = apply_perturbation(img.pixels, res.perturbation, nullptr);
    for (std::size_t i = 0; i < adv.size(); ++i) {
      CHECK(adv[i] >= 0.0);
      CHECK(adv[i] <= 1.0);
    }
  }
}
