#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signattack/attention.hpp"
#include "signattack/classifier.hpp"
#include "signattack/data.hpp"
#include "signattack/tensor.hpp"

namespace signattack {

enum class ChannelMode { grayscale_broadcast, full_rgb };
ChannelMode parse_channel_mode(const std::string& name);
std::string channel_mode_name(ChannelMode mode);

// A single additive noise tensor shared by all images of a source class.
// delta is (1, m, n, 1) in grayscale-broadcast mode, (1, m, n, 3) otherwise.
struct Perturbation {
  Tensor delta;
  ChannelMode mode = ChannelMode::grayscale_broadcast;
  int source_class = -1;
  int target_class = -1;
};

struct AttackObjectiveConfig {
  double lambda = 0.02;
  int p_norm = 2;
  int epochs = 300;
  int target_class = -1;
  std::uint64_t seed = 0;
};

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double step_size = 0.01;
};

struct EpochTracePoint {
  int epoch;
  double objective;
  double asr;     // on the attack's own training images
  double p_loss;  // effective noise norm at this epoch
};
using EpochTrace = std::vector<EpochTracePoint>;

struct UniversalAttackResult {
  Perturbation perturbation;
  EpochTrace trace;
};

// Targeted attention attack: minimizes
//   lambda * ||A_t . delta||_p + mean_i J(f(clip(x_i + A_t . delta)), y*)
// by ADAM over a seeded uniform-noise init. `target_map` must belong to the
// target class; images must all share one source class.
UniversalAttackResult taa_optimize(TrainedClassifier& model,
                                   const std::vector<LabeledImage>& train_images,
                                   const AttentionMap& target_map,
                                   const AttackObjectiveConfig& obj, const OptimizerConfig& opt,
                                   ChannelMode mode = ChannelMode::grayscale_broadcast);

enum class MaskProvenance { learned_raw, binarized, rectangularized };

struct L1Mask {
  Tensor weights;  // (1, m, n, 1), values in {0,1} after post-processing
  MaskProvenance provenance = MaskProvenance::learned_raw;
};

struct Rp2Config {
  double stage1_lambda = -1.0;  // < 0 means: reuse obj.lambda
  int stage1_epochs = -1;       // < 0 means: reuse obj.epochs
  double keep_fraction = 0.3;   // q, fraction of pixels kept by |delta|
};

struct Rp2Result {
  Perturbation perturbation;
  L1Mask mask;
  EpochTrace trace;  // stage-2 (final delta) trace
  EpochTrace stage1_trace;
  Tensor stage1_delta;
};

// Two-stage universal baseline: stage 1 learns delta under L1 regularization,
// a binary mask keeps the top-q pixels by |delta| and is dilated to its
// components' bounding boxes; stage 2 re-optimizes delta on the mask under
// the configured norm, same code path as taa_optimize.
Rp2Result rp2_optimize(TrainedClassifier& model, const std::vector<LabeledImage>& train_images,
                       const AttackObjectiveConfig& obj, const OptimizerConfig& opt,
                       ChannelMode mode = ChannelMode::full_rgb, const Rp2Config& rp2 = {});

// map (or all-ones) times delta, in delta's native channel layout. This is
// the tensor P_loss norms are taken over; apply broadcasts it to RGB.
Tensor effective_noise(const Perturbation& pert, const Tensor* map_weights);

// clip(x + A . delta, 0, 1); map_weights == nullptr means all-ones.
Tensor apply_perturbation(const Tensor& image, const Perturbation& pert,
                          const Tensor* map_weights);

// Mask post-processing, exposed for tests.
Tensor binarize_top_fraction(const Tensor& delta, double keep_fraction);
Tensor rectangularize_mask(const Tensor& mask);

// ---------------------------------------------------------------------------
// Single-image baselines

struct FgsmResult {
  Tensor pixels;
  double epsilon_used = 0.0;
  bool success = false;
};

// One-shot gradient sign step, scanned over an epsilon grid up to eps_max;
// returns the first grid point that flips the prediction to target_label,
// or the eps_max image with success=false.
FgsmResult fgsm(TrainedClassifier& model, const LabeledImage& image, int target_label,
                double eps_max, int grid_steps = 50);

// Single fixed-epsilon step (the primitive the scan is built from).
Tensor fgsm_step(TrainedClassifier& model, const Tensor& pixels, int target_label, double eps);

struct ScalarAttackResult {
  Tensor pixels;
  bool success = false;
  double param = 0.0;  // corruption fraction / blend t / sigma reached
};

// Grows a nested set of {0,1}-corrupted pixels until the prediction leaves
// the true label.
ScalarAttackResult salt_pepper(TrainedClassifier& model, const LabeledImage& image,
                               std::uint64_t seed, int steps = 50);

// Blends toward the image mean over a linear grid in t.
ScalarAttackResult contrast_reduction(TrainedClassifier& model, const LabeledImage& image,
                                      int steps = 50);

// Gaussian blur with linearly increasing sigma.
ScalarAttackResult gaussian_blur(TrainedClassifier& model, const LabeledImage& image,
                                 double sigma_max = 3.0, int steps = 30);

// Truncated-kernel separable Gaussian blur (radius 3*sigma, replicated
// borders); sigma <= 0 returns the input unchanged.
Tensor gaussian_blur_pixels(const Tensor& pixels, double sigma);

struct PointwiseResult {
  Tensor pixels;
  bool success = false;
  int l0 = 0;  // pixels differing from the clean image
};

// Seeds with a salt-pepper (or random-binary) image that already predicts
// target_label, then greedily resets pixels to clean values while the
// prediction holds; stops after a pass with no resets.
PointwiseResult pointwise(TrainedClassifier& model, const LabeledImage& image, int target_label,
                          std::uint64_t seed, int max_passes = 10);

// Elementwise mean of per-image noises (x' - x), as one full-rgb
// perturbation.
Perturbation average_perturbation(const std::vector<Tensor>& noises, int source_class,
                                  int target_class);

}  // namespace signattack
