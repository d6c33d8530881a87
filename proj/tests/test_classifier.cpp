#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "signattack/classifier.hpp"
#include "signattack/errors.hpp"
#include "signattack/rng.hpp"
#include "signattack/synthetic.hpp"
#include "test_helpers.hpp"

using namespace signattack;

namespace {

int count_kind(const std::vector<std::string>& summary, const std::string& prefix) {
  int n = 0;
  for (const auto& k : summary)
    if (k.rfind(prefix, 0) == 0) ++n;
  return n;
}

}  // namespace

TEST_CASE("forward pass of every variant is a probability vector") {
  Rng rng(1);
  for (auto variant : {ClassifierVariant::cnn, ClassifierVariant::cnn2, ClassifierVariant::cnn3,
                       ClassifierVariant::cnn4}) {
    ClassifierSpec spec{variant, 26, 32};
    auto model = TrainedClassifier::build(spec, 5, {});
    Tensor x(1, 32, 32, 3);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();
    auto pred = model.predict(x);
    REQUIRE(pred.probabilities.size() == 26);
    double sum = 0.0;
    for (double p : pred.probabilities) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-5);
    CHECK(pred.label == static_cast<int>(std::max_element(pred.probabilities.begin(),
                                                          pred.probabilities.end()) -
                                         pred.probabilities.begin()));
  }
}

TEST_CASE("variant layer lists differ exactly as specified") {
  auto build_summary = [](ClassifierVariant v) {
    return TrainedClassifier::build({v, 5, 32}, 1, {}).layer_summary();
  };
  auto cnn = build_summary(ClassifierVariant::cnn);
  auto cnn2 = build_summary(ClassifierVariant::cnn2);
  auto cnn3 = build_summary(ClassifierVariant::cnn3);
  auto cnn4 = build_summary(ClassifierVariant::cnn4);

  // cnn2 = cnn + one conv + one activation
  CHECK(cnn2.size() == cnn.size() + 2);
  CHECK(count_kind(cnn2, "conv") == count_kind(cnn, "conv") + 1);
  CHECK(count_kind(cnn2, "relu") == count_kind(cnn, "relu") + 1);

  // cnn3 = cnn2 + one activation after the dense layer
  CHECK(cnn3.size() == cnn2.size() + 1);
  CHECK(count_kind(cnn3, "relu") == count_kind(cnn2, "relu") + 1);
  auto dense_pos = std::find(cnn3.begin(), cnn3.end(), "dense");
  REQUIRE(dense_pos != cnn3.end());
  CHECK(*(dense_pos + 1) == "relu");
  CHECK(cnn3.back() == "softmax");

  // cnn4 swaps every relu for tanh, same layer count
  CHECK(cnn4.size() == cnn.size());
  CHECK(count_kind(cnn4, "relu") == 0);
  CHECK(count_kind(cnn4, "tanh") == count_kind(cnn, "relu"));
}

TEST_CASE("uniform logits tie-break to the lowest class index") {
  int side = 8, features = side * side * 3;
  Tensor w0(1, 1, 1, features), w1(1, 1, 1, features);
  auto model = test_helpers::linear_model(w0.slice(0), w1.slice(0), 0.0, 0.0, side);
  Tensor x = test_helpers::filled(1, side, side, 3, 0.3);
  CHECK(model.predict(x).label == 0);
}

TEST_CASE("loss is -log p_y and the input gradient matches finite differences") {
  Rng rng(2);
  ClassifierSpec spec{ClassifierVariant::cnn, 3, 8};
  auto model = TrainedClassifier::build(spec, 7, {});
  Tensor x(1, 8, 8, 3);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform();

  auto pred = model.predict(x);
  auto [loss, grad] = model.loss_and_input_gradient(x, 1);
  CHECK(loss == doctest::Approx(-std::log(pred.probabilities[1])).epsilon(1e-10));
  REQUIRE(grad.same_shape(x));

  const double step = 1e-4;
  for (int s = 0; s < 20; ++s) {
    std::size_t i = static_cast<std::size_t>(rng.uniform_int(x.size()));
    Tensor xp = x, xm = x;
    xp[i] += step;
    xm[i] -= step;
    double fp = model.loss_and_input_gradient(xp, 1).first;
    double fm = model.loss_and_input_gradient(xm, 1).first;
    double numeric = (fp - fm) / (2 * step);
    double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-6});
    CHECK(std::abs(numeric - grad[i]) / denom < 1e-3);
  }
}

TEST_CASE("perfectly confident correct prediction has near-zero loss and gradient") {
  int side = 8, features = side * side * 3;
  Tensor w0(1, 1, 1, features), w1(1, 1, 1, features);
  // huge margin toward class 1
  auto model = test_helpers::linear_model(w0.slice(0), w1.slice(0), -200.0, 200.0, side);
  Tensor x = test_helpers::filled(1, side, side, 3, 0.5);
  auto [loss, grad] = model.loss_and_input_gradient(x, 1);
  CHECK(loss < 1e-12);
  for (std::size_t i = 0; i < grad.size(); ++i) CHECK(std::abs(grad[i]) < 1e-12);
}

TEST_CASE("training separates toy blobs and is seed-deterministic") {
  auto images = make_blobs(30, 16, 99);
  DatasetSplit data = split(images, 0.8, 5);

  ClassifierSpec spec{ClassifierVariant::cnn, 2, 16};
  TrainConfig cfg{6, 16, 1e-3, 21};

  auto model_a = TrainedClassifier::build(spec, 3, {"a", "b"});
  TrainLog log_a = model_a.train(data, cfg);
  CHECK(log_a.epochs.size() == 6);
  CHECK(log_a.epochs.back().test_accuracy == doctest::Approx(1.0));
  CHECK(model_a.trained());

  auto model_b = TrainedClassifier::build(spec, 3, {"a", "b"});
  model_b.train(data, cfg);
  CHECK(model_a.weights_hash() == model_b.weights_hash());
  for (const auto& img : data.test)
    CHECK(model_a.predict(img.pixels).label == model_b.predict(img.pixels).label);
}

TEST_CASE("training aborts with a diagnostic when the loss diverges") {
  auto images = make_blobs(10, 8, 4);
  DatasetSplit data = split(images, 0.8, 5);
  ClassifierSpec spec{ClassifierVariant::cnn, 2, 8};
  auto model = TrainedClassifier::build(spec, 3, {});
  TrainConfig cfg{30, 8, 1e100, 21};  // step size large enough to overflow activations
  CHECK_THROWS_AS(model.train(data, cfg), NumericError);
}

TEST_CASE("checkpoints round-trip exactly and name their producer when absent") {
  test_helpers::TempDir dir("classifier_ckpt");
  auto images = make_blobs(12, 8, 7);
  DatasetSplit data = split(images, 0.75, 5);
  ClassifierSpec spec{ClassifierVariant::cnn2, 2, 8};
  auto model = TrainedClassifier::build(spec, 3, {"x", "y"});
  model.train(data, {2, 8, 1e-3, 21});
  model.save(dir.file("m.bin"));

  auto back = TrainedClassifier::load(dir.file("m.bin"));
  CHECK(back.trained());
  CHECK(back.spec().variant == ClassifierVariant::cnn2);
  CHECK(back.class_names() == model.class_names());
  CHECK(back.weights_hash() == model.weights_hash());
  for (const auto& img : data.test)
    CHECK(back.predict(img.pixels).label == model.predict(img.pixels).label);

  try {
    TrainedClassifier::load(dir.file("missing.bin"));
    FAIL("expected MissingArtifactError");
  } catch (const MissingArtifactError& e) {
    CHECK(e.producer() == "train-classifier");
  }
}

TEST_CASE("shape and label range violations are fatal") {
  auto model = TrainedClassifier::build({ClassifierVariant::cnn, 2, 8}, 1, {});
  Tensor wrong(1, 16, 16, 3);
  CHECK_THROWS_AS(model.predict(wrong), ShapeError);
  Tensor ok(1, 8, 8, 3);
  CHECK_THROWS_AS(model.loss_and_input_gradient(ok, 5), ConfigError);
  CHECK_THROWS_AS(TrainedClassifier::build({ClassifierVariant::cnn, 1, 8}, 1, {}), ConfigError);
}
