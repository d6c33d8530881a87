#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "signattack/data.hpp"
#include "signattack/nn.hpp"
#include "signattack/tensor.hpp"

namespace signattack {

enum class ClassifierVariant { cnn, cnn2, cnn3, cnn4 };
ClassifierVariant parse_classifier_variant(const std::string& name);
std::string classifier_variant_name(ClassifierVariant v);

struct ClassifierSpec {
  ClassifierVariant variant = ClassifierVariant::cnn;
  int num_classes = 2;
  int input_side = 32;
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct PredictionResult {
  std::vector<double> probabilities;
  int label = 0;  // argmax, lowest index on exact ties
};

struct EpochStat {
  int epoch;
  double train_loss;
  double test_accuracy;
};

struct TrainLog {
  std::vector<EpochStat> epochs;
};

void write_train_log_csv(const TrainLog& log, const std::string& path);

// The victim model: a small convolutional stack ending in softmax, with
// input-gradient access for attack optimization.
//
// Prediction mutates per-layer caches, so one instance is not safe for
// concurrent calls; clone per thread when parallelizing.
class TrainedClassifier {
 public:
  static TrainedClassifier build(const ClassifierSpec& spec, std::uint64_t init_seed,
                                 std::vector<std::string> class_names);
  // Wraps an arbitrary logits network (last layer softmax). Test helper and
  // binding hook for hand-built models.
  static TrainedClassifier from_network(nn::Sequential net, std::vector<std::string> class_names,
                                        int input_side);

  TrainLog train(const DatasetSplit& data, const TrainConfig& cfg);

  PredictionResult predict(const Tensor& image);
  std::vector<int> predict_batch(const Tensor& batch);
  double accuracy(const std::vector<LabeledImage>& images);

  // Cross-entropy of the prediction against `target_label`, plus its
  // gradient with respect to the input pixels.
  std::pair<double, Tensor> loss_and_input_gradient(const Tensor& image, int target_label);

  struct BatchGradients {
    double mean_loss = 0.0;
    std::vector<double> per_sample_loss;
    std::vector<int> predicted;
    Tensor input_grads;  // per-sample gradients (not mean-scaled)
  };
  BatchGradients batch_loss_and_input_gradients(const Tensor& batch, int target_label);

  const ClassifierSpec& spec() const { return spec_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  std::vector<std::string> layer_summary() const { return net_.summary(); }
  std::uint64_t weights_hash() const;

  void save(const std::string& path) const;
  static TrainedClassifier load(const std::string& path);

 private:
  TrainedClassifier() = default;
  void check_input(const Tensor& batch) const;

  ClassifierSpec spec_;
  std::vector<std::string> class_names_;
  std::uint64_t init_seed_ = 0;
  bool trained_ = false;
  nn::Sequential net_;  // ends in softmax; training uses the logits prefix
};

}  // namespace signattack
