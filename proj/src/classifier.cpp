#include "signattack/classifier.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "signattack/errors.hpp"
#include "signattack/rng.hpp"
#include "signattack/serialize.hpp"

namespace signattack {

using nn::LayerPtr;

ClassifierVariant parse_classifier_variant(const std::string& name) {
  if (name == "cnn") return ClassifierVariant::cnn;
  if (name == "cnn2") return ClassifierVariant::cnn2;
  if (name == "cnn3") return ClassifierVariant::cnn3;
  if (name == "cnn4") return ClassifierVariant::cnn4;
  throw ConfigError("unknown classifier variant '" + name + "'");
}

std::string classifier_variant_name(ClassifierVariant v) {
  switch (v) {
    case ClassifierVariant::cnn: return "cnn";
    case ClassifierVariant::cnn2: return "cnn2";
    case ClassifierVariant::cnn3: return "cnn3";
    case ClassifierVariant::cnn4: return "cnn4";
  }
  return "?";
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  f << "epoch,train_loss,test_accuracy\n";
  for (const auto& e : log.epochs) f << e.epoch << "," << e.train_loss << "," << e.test_accuracy << "\n";
}

TrainedClassifier TrainedClassifier::build(const ClassifierSpec& spec, std::uint64_t init_seed,
                                           std::vector<std::string> class_names) {
  if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (spec.input_side < 8) throw ConfigError("input_side must be >= 8");
  if (!class_names.empty() && static_cast<int>(class_names.size()) != spec.num_classes)
    throw ConfigError("class_names length does not match num_classes");
  if (class_names.empty())
    for (int i = 0; i < spec.num_classes; ++i) class_names.push_back("class" + std::to_string(i));

  Rng rng(init_seed);
  const bool use_tanh = spec.variant == ClassifierVariant::cnn4;
  auto act = [&]() -> LayerPtr {
    if (use_tanh) return std::make_unique<nn::TanhLayer>();
    return std::make_unique<nn::Relu>();
  };

  nn::Sequential net;
  net.add(std::make_unique<nn::Conv2d>(3, 32, 3, 1, rng));
  net.add(act());
  net.add(std::make_unique<nn::MaxPool2>());
  net.add(std::make_unique<nn::Conv2d>(32, 64, 3, 1, rng));
  net.add(act());
  net.add(std::make_unique<nn::MaxPool2>());
  net.add(std::make_unique<nn::Conv2d>(64, 128, 3, 1, rng));
  net.add(act());
  if (spec.variant == ClassifierVariant::cnn2 || spec.variant == ClassifierVariant::cnn3) {
    net.add(std::make_unique<nn::Conv2d>(128, 128, 3, 1, rng));
    net.add(act());
  }
  const int spatial = spec.input_side / 2 / 2;  // two 2x2 pools, floor semantics
  net.add(std::make_unique<nn::Dense>(spatial * spatial * 128, spec.num_classes, rng));
  if (spec.variant == ClassifierVariant::cnn3) net.add(act());
  net.add(std::make_unique<nn::Softmax>());

  TrainedClassifier model;
  model.spec_ = spec;
  model.class_names_ = std::move(class_names);
  model.init_seed_ = init_seed;
  model.net_ = std::move(net);
  return model;
}

TrainedClassifier TrainedClassifier::from_network(nn::Sequential net,
                                                  std::vector<std::string> class_names,
                                                  int input_side) {
  TrainedClassifier model;
  model.spec_.variant = ClassifierVariant::cnn;
  model.spec_.num_classes = static_cast<int>(class_names.size());
  model.spec_.input_side = input_side;
  model.class_names_ = std::move(class_names);
  model.net_ = std::move(net);
  model.trained_ = true;
  return model;
}

void TrainedClassifier::check_input(const Tensor& batch) const {
  if (batch.h() != spec_.input_side || batch.w() != spec_.input_side || batch.c() != 3)
    throw ShapeError("classifier expects (N," + std::to_string(spec_.input_side) + "," +
                     std::to_string(spec_.input_side) + ",3), got " + batch.shape_str());
}

TrainLog TrainedClassifier::train(const DatasetSplit& data, const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
    throw ConfigError("train config values must be positive");
  for (const auto& img : data.train)
    if (img.label < 0 || img.label >= spec_.num_classes)
      throw DataError("train label " + std::to_string(img.label) + " outside classifier range");
  if (data.train.empty()) throw DataError("empty training set");

  std::vector<nn::ParamRef> params;
  net_.collect_params(params);
  nn::Adam adam(cfg.learning_rate, 0.9, 0.999, 1e-8);
  Rng rng(cfg.seed);

  const int n = static_cast<int>(data.train.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainLog log;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      int count = std::min(cfg.batch_size, n - start);
      Tensor batch(count, spec_.input_side, spec_.input_side, 3);
      std::vector<int> targets(count);
      for (int i = 0; i < count; ++i) {
        batch.set_slice(i, data.train[order[start + i]].pixels);
        targets[i] = data.train[order[start + i]].label;
      }
      Tensor logits = net_.forward_prefix(batch, 1);
      auto ce = nn::softmax_cross_entropy(logits, targets);
      if (!std::isfinite(ce.mean_loss))
        throw NumericError("training diverged at epoch " + std::to_string(epoch));
      loss_sum += ce.mean_loss * count;
      nn::zero_grads(params);
      net_.backward_prefix(ce.grad_logits, 1);
      adam.step(params);
    }
    double test_acc = data.test.empty() ? 0.0 : accuracy(data.test);
    log.epochs.push_back({epoch, loss_sum / n, test_acc});
  }
  trained_ = true;
  return log;
}

PredictionResult TrainedClassifier::predict(const Tensor& image) {
  check_input(image);
  if (image.n() != 1) throw ShapeError("predict takes a single image");
  Tensor probs = net_.forward(image);
  PredictionResult res;
  res.probabilities.resize(probs.c());
  for (int j = 0; j < probs.c(); ++j) res.probabilities[j] = probs.at(0, 0, 0, j);
  res.label = nn::argmax_row(probs, 0);
  return res;
}

std::vector<int> TrainedClassifier::predict_batch(const Tensor& batch) {
  check_input(batch);
  std::vector<int> labels(batch.n());
  constexpr int kChunk = 64;
  for (int start = 0; start < batch.n(); start += kChunk) {
    int count = std::min(kChunk, batch.n() - start);
    Tensor chunk(count, batch.h(), batch.w(), batch.c());
    for (int i = 0; i < count; ++i) chunk.set_slice(i, batch.slice(start + i));
    Tensor probs = net_.forward(chunk);
    for (int i = 0; i < count; ++i) labels[start + i] = nn::argmax_row(probs, i);
  }
  return labels;
}

double TrainedClassifier::accuracy(const std::vector<LabeledImage>& images) {
  if (images.empty()) return 0.0;
  Tensor batch(static_cast<int>(images.size()), spec_.input_side, spec_.input_side, 3);
  for (std::size_t i = 0; i < images.size(); ++i) batch.set_slice(static_cast<int>(i), images[i].pixels);
  auto labels = predict_batch(batch);
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (labels[i] == images[i].label) ++correct;
  return static_cast<double>(correct) / images.size();
}

std::pair<double, Tensor> TrainedClassifier::loss_and_input_gradient(const Tensor& image,
                                                                     int target_label) {
  auto bg = batch_loss_and_input_gradients(image, target_label);
  return {bg.mean_loss, bg.input_grads};
}

TrainedClassifier::BatchGradients TrainedClassifier::batch_loss_and_input_gradients(
    const Tensor& batch, int target_label) {
  check_input(batch);
  if (target_label < 0 || target_label >= spec_.num_classes)
    throw ConfigError("target label outside [0, L)");

  BatchGradients out;
  out.input_grads = zeros_like(batch);
  out.per_sample_loss.resize(batch.n());
  out.predicted.resize(batch.n());

  constexpr int kChunk = 64;
  for (int start = 0; start < batch.n(); start += kChunk) {
    int count = std::min(kChunk, batch.n() - start);
    Tensor chunk(count, batch.h(), batch.w(), batch.c());
    for (int i = 0; i < count; ++i) chunk.set_slice(i, batch.slice(start + i));
    Tensor logits = net_.forward_prefix(chunk, 1);
    std::vector<int> targets(count, target_label);
    auto ce = nn::softmax_cross_entropy(logits, targets);
    // per-sample gradients: undo the 1/count scaling of the mean loss
    for (std::size_t i = 0; i < ce.grad_logits.size(); ++i) ce.grad_logits[i] *= count;
    Tensor grads = net_.backward_prefix(ce.grad_logits, 1);
    for (int i = 0; i < count; ++i) {
      out.per_sample_loss[start + i] = ce.per_sample[i];
      out.predicted[start + i] = ce.predicted[i];
      out.input_grads.set_slice(start + i, grads.slice(i));
      out.mean_loss += ce.per_sample[i];
    }
  }
  out.mean_loss /= batch.n();
  return out;
}

std::uint64_t TrainedClassifier::weights_hash() const {
  std::vector<nn::ParamRef> params;
  const_cast<nn::Sequential&>(net_).collect_params(params);
  std::string bytes;
  for (const auto& p : params)
    bytes.append(reinterpret_cast<const char*>(p.value->data()), p.value->size() * sizeof(double));
  return fnv1a64(bytes);
}

void TrainedClassifier::save(const std::string& path) const {
  Artifact a("classifier_checkpoint");
  auto& hdr = a.header();
  hdr["variant"] = classifier_variant_name(spec_.variant);
  hdr["num_classes"] = spec_.num_classes;
  hdr["input_side"] = spec_.input_side;
  hdr["class_names"] = class_names_;
  hdr["init_seed"] = init_seed_;
  hdr["trained"] = trained_;

  std::vector<nn::ParamRef> params;
  const_cast<nn::Sequential&>(net_).collect_params(params);
  for (std::size_t i = 0; i < params.size(); ++i) a.put("p" + std::to_string(i), *params[i].value);
  a.save(path);
}

TrainedClassifier TrainedClassifier::load(const std::string& path) {
  Artifact a = Artifact::load(path, "classifier_checkpoint", "train-classifier");
  const auto& hdr = a.header();
  ClassifierSpec spec;
  spec.variant = parse_classifier_variant(hdr.at("variant").get<std::string>());
  spec.num_classes = hdr.at("num_classes").get<int>();
  spec.input_side = hdr.at("input_side").get<int>();
  auto names = hdr.at("class_names").get<std::vector<std::string>>();

  TrainedClassifier model = build(spec, hdr.at("init_seed").get<std::uint64_t>(), names);
  std::vector<nn::ParamRef> params;
  model.net_.collect_params(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& stored = a.get("p" + std::to_string(i));
    if (!stored.same_shape(*params[i].value))
      throw IoError("checkpoint parameter " + std::to_string(i) + " has unexpected shape");
    *params[i].value = stored;
  }
  model.trained_ = hdr.at("trained").get<bool>();
  return model;
}

}  // namespace signattack
