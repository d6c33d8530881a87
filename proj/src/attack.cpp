#include "signattack/attack.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "signattack/errors.hpp"
#include "signattack/nn.hpp"
#include "signattack/rng.hpp"

namespace signattack {

ChannelMode parse_channel_mode(const std::string& name) {
  if (name == "grayscale" || name == "grayscale_broadcast") return ChannelMode::grayscale_broadcast;
  if (name == "rgb" || name == "full_rgb") return ChannelMode::full_rgb;
  throw ConfigError("unknown channel mode '" + name + "'");
}

std::string channel_mode_name(ChannelMode mode) {
  return mode == ChannelMode::grayscale_broadcast ? "grayscale_broadcast" : "full_rgb";
}

namespace {

// delta + map and image shapes must agree spatially
void check_spatial(const Tensor& delta, const Tensor* map, int h, int w) {
  if (delta.h() != h || delta.w() != w)
    throw ShapeError("perturbation " + delta.shape_str() + " does not match images " +
                     std::to_string(h) + "x" + std::to_string(w));
  if (map && (map->h() != h || map->w() != w || map->c() != 1))
    throw ShapeError("attention map " + map->shape_str() + " does not match images");
}

}  // namespace

Tensor effective_noise(const Perturbation& pert, const Tensor* map_weights) {
  Tensor z = pert.delta;
  if (map_weights) {
    check_spatial(pert.delta, map_weights, pert.delta.h(), pert.delta.w());
    for (int y = 0; y < z.h(); ++y)
      for (int x = 0; x < z.w(); ++x) {
        double a = map_weights->at(0, y, x, 0);
        for (int c = 0; c < z.c(); ++c) z.at(0, y, x, c) *= a;
      }
  }
  return z;
}

Tensor apply_perturbation(const Tensor& image, const Perturbation& pert,
                          const Tensor* map_weights) {
  if (image.n() != 1 || image.c() != 3)
    throw ShapeError("apply expects one RGB image, got " + image.shape_str());
  check_spatial(pert.delta, map_weights, image.h(), image.w());
  if (pert.delta.c() != 1 && pert.delta.c() != 3)
    throw ShapeError("perturbation must have 1 or 3 channels");

  Tensor z = effective_noise(pert, map_weights);
  Tensor out = image;
  for (int y = 0; y < image.h(); ++y)
    for (int x = 0; x < image.w(); ++x)
      for (int c = 0; c < 3; ++c) {
        double noise = z.c() == 1 ? z.at(0, y, x, 0) : z.at(0, y, x, c);
        out.at(0, y, x, c) = std::clamp(image.at(0, y, x, c) + noise, 0.0, 1.0);
      }
  return out;
}

namespace {

struct UniversalProblem {
  TrainedClassifier* model;
  const std::vector<LabeledImage>* images;
  const Tensor* map;  // (1,m,n,1); never null here (all-ones is materialized)
  double lambda;
  int p_norm;
  int epochs;
  int target;
  std::uint64_t seed;
  OptimizerConfig opt;
  ChannelMode mode;
  int source_class;
};

UniversalAttackResult optimize_universal(const UniversalProblem& prob) {
  const auto& images = *prob.images;
  const Tensor& map = *prob.map;
  const int n = static_cast<int>(images.size());
  const int h = images[0].pixels.h(), w = images[0].pixels.w();
  const int dc = prob.mode == ChannelMode::grayscale_broadcast ? 1 : 3;

  Tensor clean(n, h, w, 3);
  for (int i = 0; i < n; ++i) clean.set_slice(i, images[i].pixels);

  // eligibility for the trace ASR: clean prediction must match the label
  std::vector<int> clean_pred = prob.model->predict_batch(clean);
  std::vector<char> eligible(n);
  int n_eligible = 0;
  for (int i = 0; i < n; ++i) {
    eligible[i] = clean_pred[i] == images[i].label;
    n_eligible += eligible[i];
  }

  Perturbation pert;
  pert.mode = prob.mode;
  pert.source_class = prob.source_class;
  pert.target_class = prob.target;
  pert.delta = Tensor(1, h, w, dc);
  Rng rng(prob.seed);
  for (std::size_t i = 0; i < pert.delta.size(); ++i) pert.delta[i] = rng.uniform(-0.1, 0.1);

  std::vector<nn::ParamRef> delta_param;
  Tensor delta_grad = zeros_like(pert.delta);
  delta_param.push_back({&pert.delta, &delta_grad});
  nn::Adam adam(prob.opt.step_size, prob.opt.beta1, prob.opt.beta2, prob.opt.epsilon);

  EpochTrace trace;
  Tensor adv(n, h, w, 3);
  Tensor gate(n, h, w, 3);
  for (int epoch = 1; epoch <= prob.epochs; ++epoch) {
    Tensor z = effective_noise(pert, &map);

    // forward through clip; the gate records where clip passes gradient
    for (int i = 0; i < n; ++i)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = 0; c < 3; ++c) {
            double noise = dc == 1 ? z.at(0, y, x, 0) : z.at(0, y, x, c);
            double v = clean.at(i, y, x, c) + noise;
            gate.at(i, y, x, c) = (v >= 0.0 && v <= 1.0) ? 1.0 : 0.0;
            adv.at(i, y, x, c) = std::clamp(v, 0.0, 1.0);
          }

    auto bg = prob.model->batch_loss_and_input_gradients(adv, prob.target);

    double z_l2 = z.l2_norm();
    double reg = prob.p_norm == 1 ? z.l1_norm() : z_l2;
    double objective = prob.lambda * reg + bg.mean_loss;
    if (!std::isfinite(objective))
      throw NumericError("attack objective became non-finite at epoch " + std::to_string(epoch));

    int hits = 0;
    for (int i = 0; i < n; ++i)
      if (eligible[i] && bg.predicted[i] == prob.target) ++hits;
    trace.push_back({epoch, objective, n_eligible > 0 ? static_cast<double>(hits) / n_eligible : 0.0,
                     z_l2});

    // mean data gradient wrt delta: gate, reduce channels in grayscale
    // mode, then weight by the map
    delta_grad.fill(0.0);
    for (int i = 0; i < n; ++i)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double a = map.at(0, y, x, 0);
          if (dc == 1) {
            double sum = 0.0;
            for (int c = 0; c < 3; ++c)
              sum += gate.at(i, y, x, c) * bg.input_grads.at(i, y, x, c);
            delta_grad.at(0, y, x, 0) += a * sum / n;
          } else {
            for (int c = 0; c < 3; ++c)
              delta_grad.at(0, y, x, c) +=
                  a * gate.at(i, y, x, c) * bg.input_grads.at(i, y, x, c) / n;
          }
        }

    // regularizer gradient
    if (prob.lambda > 0.0) {
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double a = map.at(0, y, x, 0);
          for (int c = 0; c < dc; ++c) {
            double zi = z.at(0, y, x, c);
            double g = 0.0;
            if (prob.p_norm == 1) {
              g = zi > 0.0 ? 1.0 : (zi < 0.0 ? -1.0 : 0.0);
            } else if (z_l2 > 0.0) {
              g = zi / z_l2;
            }
            delta_grad.at(0, y, x, c) += prob.lambda * a * g;
          }
        }
    }

    adam.step(delta_param);
  }

  return {std::move(pert), std::move(trace)};
}

void validate_universal_inputs(const std::vector<LabeledImage>& images,
                               const AttackObjectiveConfig& obj) {
  if (images.empty()) throw DataError("attack needs a non-empty training set");
  for (const auto& img : images)
    if (img.label != images[0].label)
      throw DataError("attack training images must share one source class");
  if (obj.epochs < 1) throw ConfigError("attack epochs must be >= 1");
  if (obj.p_norm != 1 && obj.p_norm != 2) throw ConfigError("p_norm must be 1 or 2");
  if (obj.lambda < 0.0) throw ConfigError("lambda must be >= 0");
}

}  // namespace

UniversalAttackResult taa_optimize(TrainedClassifier& model,
                                   const std::vector<LabeledImage>& train_images,
                                   const AttentionMap& target_map,
                                   const AttackObjectiveConfig& obj, const OptimizerConfig& opt,
                                   ChannelMode mode) {
  validate_universal_inputs(train_images, obj);
  if (target_map.class_index != obj.target_class)
    throw ConfigError("attention map belongs to class " + std::to_string(target_map.class_index) +
                      " but the attack targets class " + std::to_string(obj.target_class) +
                      "; TAA takes the target class's map");

  UniversalProblem prob;
  prob.model = &model;
  prob.images = &train_images;
  prob.map = &target_map.weights;
  prob.lambda = obj.lambda;
  prob.p_norm = obj.p_norm;
  prob.epochs = obj.epochs;
  prob.target = obj.target_class;
  prob.seed = obj.seed;
  prob.opt = opt;
  prob.mode = mode;
  prob.source_class = train_images[0].label;
  return optimize_universal(prob);
}

Tensor binarize_top_fraction(const Tensor& delta, double keep_fraction) {
  const int h = delta.h(), w = delta.w();
  std::vector<double> agg(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int c = 0; c < delta.c(); ++c) s += std::abs(delta.at(0, y, x, c));
      agg[static_cast<std::size_t>(y) * w + x] = s / delta.c();
    }

  long total = static_cast<long>(agg.size());
  long k = std::clamp(std::lround(keep_fraction * total), 1L, total);
  std::vector<std::size_t> order(agg.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return agg[a] > agg[b]; });

  Tensor mask(1, h, w, 1);
  for (long i = 0; i < k; ++i) mask[order[i]] = 1.0;
  return mask;
}

Tensor rectangularize_mask(const Tensor& mask) {
  const int h = mask.h(), w = mask.w();
  Tensor out = mask;
  std::vector<int> component(static_cast<std::size_t>(h) * w, -1);
  int next_id = 0;
  std::vector<std::array<int, 4>> boxes;  // left, top, right, bottom (inclusive)

  std::vector<std::size_t> stack;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      std::size_t start = static_cast<std::size_t>(y) * w + x;
      if (mask[start] <= 0.0 || component[start] >= 0) continue;
      int id = next_id++;
      boxes.push_back({x, y, x, y});
      stack.push_back(start);
      component[start] = id;
      while (!stack.empty()) {
        std::size_t cur = stack.back();
        stack.pop_back();
        int cy = static_cast<int>(cur) / w, cx = static_cast<int>(cur) % w;
        auto& box = boxes[id];
        box[0] = std::min(box[0], cx);
        box[1] = std::min(box[1], cy);
        box[2] = std::max(box[2], cx);
        box[3] = std::max(box[3], cy);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
            if (mask[ni] > 0.0 && component[ni] < 0) {
              component[ni] = id;
              stack.push_back(ni);
            }
          }
      }
    }

  for (const auto& box : boxes)
    for (int y = box[1]; y <= box[3]; ++y)
      for (int x = box[0]; x <= box[2]; ++x) out.at(0, y, x, 0) = 1.0;
  return out;
}

Rp2Result rp2_optimize(TrainedClassifier& model, const std::vector<LabeledImage>& train_images,
                       const AttackObjectiveConfig& obj, const OptimizerConfig& opt,
                       ChannelMode mode, const Rp2Config& rp2) {
  validate_universal_inputs(train_images, obj);
  if (!(rp2.keep_fraction > 0.0 && rp2.keep_fraction <= 1.0))
    throw ConfigError("rp2 keep_fraction must lie in (0,1]");

  const int h = train_images[0].pixels.h(), w = train_images[0].pixels.w();
  Tensor all_ones(1, h, w, 1);
  all_ones.fill(1.0);

  // stage 1: learn delta under L1 to find where noise wants to live
  UniversalProblem stage1;
  stage1.model = &model;
  stage1.images = &train_images;
  stage1.map = &all_ones;
  stage1.lambda = rp2.stage1_lambda >= 0.0 ? rp2.stage1_lambda : obj.lambda;
  stage1.p_norm = 1;
  stage1.epochs = rp2.stage1_epochs >= 0 ? rp2.stage1_epochs : obj.epochs;
  stage1.target = obj.target_class;
  stage1.seed = obj.seed;
  stage1.opt = opt;
  stage1.mode = mode;
  stage1.source_class = train_images[0].label;
  auto s1 = optimize_universal(stage1);

  L1Mask mask;
  mask.weights = binarize_top_fraction(s1.perturbation.delta, rp2.keep_fraction);
  mask.provenance = MaskProvenance::binarized;
  mask.weights = rectangularize_mask(mask.weights);
  mask.provenance = MaskProvenance::rectangularized;

  // stage 2: same optimizer as TAA, with the binary mask in place of the
  // attention map and a fresh seeded init
  UniversalProblem stage2 = stage1;
  stage2.map = &mask.weights;
  stage2.lambda = obj.lambda;
  stage2.p_norm = obj.p_norm;
  stage2.epochs = obj.epochs;
  auto s2 = optimize_universal(stage2);

  Rp2Result out;
  out.perturbation = std::move(s2.perturbation);
  out.mask = std::move(mask);
  out.trace = std::move(s2.trace);
  out.stage1_trace = std::move(s1.trace);
  out.stage1_delta = std::move(s1.perturbation.delta);
  return out;
}

// ---------------------------------------------------------------------------
// Single-image baselines

Tensor fgsm_step(TrainedClassifier& model, const Tensor& pixels, int target_label, double eps) {
  auto [loss, grad] = model.loss_and_input_gradient(pixels, target_label);
  Tensor out = pixels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
    out[i] = std::clamp(out[i] - eps * s, 0.0, 1.0);
  }
  return out;
}

FgsmResult fgsm(TrainedClassifier& model, const LabeledImage& image, int target_label,
                double eps_max, int grid_steps) {
  if (eps_max < 0.0) throw ConfigError("fgsm epsilon must be >= 0");
  FgsmResult res;
  res.pixels = image.pixels;
  res.epsilon_used = 0.0;
  res.success = model.predict(image.pixels).label == target_label;
  if (res.success || eps_max == 0.0 || grid_steps < 1) return res;

  // one gradient, scanned over the epsilon grid
  auto [loss, grad] = model.loss_and_input_gradient(image.pixels, target_label);
  Tensor sign = grad;
  for (std::size_t i = 0; i < sign.size(); ++i)
    sign[i] = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);

  for (int k = 1; k <= grid_steps; ++k) {
    double eps = eps_max * k / grid_steps;
    Tensor candidate = image.pixels;
    for (std::size_t i = 0; i < candidate.size(); ++i)
      candidate[i] = std::clamp(candidate[i] - eps * sign[i], 0.0, 1.0);
    res.pixels = candidate;
    res.epsilon_used = eps;
    if (model.predict(candidate).label == target_label) {
      res.success = true;
      return res;
    }
  }
  res.success = false;
  return res;
}

ScalarAttackResult salt_pepper(TrainedClassifier& model, const LabeledImage& image,
                               std::uint64_t seed, int steps) {
  ScalarAttackResult res;
  res.pixels = image.pixels;
  if (model.predict(image.pixels).label != image.label) {
    res.success = true;
    return res;
  }

  const int h = image.pixels.h(), w = image.pixels.w();
  Rng rng(seed);
  std::vector<double> order(static_cast<std::size_t>(h) * w);
  std::vector<double> value(order.size());
  for (auto& v : order) v = rng.uniform();
  for (auto& v : value) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

  for (int k = 1; k <= steps; ++k) {
    double fraction = static_cast<double>(k) / steps;
    Tensor noisy = image.pixels;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::size_t p = static_cast<std::size_t>(y) * w + x;
        if (order[p] < fraction)
          for (int c = 0; c < 3; ++c) noisy.at(0, y, x, c) = value[p];
      }
    res.pixels = noisy;
    res.param = fraction;
    if (model.predict(noisy).label != image.label) {
      res.success = true;
      return res;
    }
  }
  res.success = false;
  return res;
}

ScalarAttackResult contrast_reduction(TrainedClassifier& model, const LabeledImage& image,
                                      int steps) {
  ScalarAttackResult res;
  res.pixels = image.pixels;
  if (model.predict(image.pixels).label != image.label) {
    res.success = true;
    return res;
  }

  double mean = 0.0;
  for (std::size_t i = 0; i < image.pixels.size(); ++i) mean += image.pixels[i];
  mean /= image.pixels.size();

  for (int k = 1; k <= steps; ++k) {
    double t = static_cast<double>(k) / steps;
    Tensor blended = image.pixels;
    for (std::size_t i = 0; i < blended.size(); ++i)
      blended[i] = (1.0 - t) * image.pixels[i] + t * mean;
    res.pixels = blended;
    res.param = t;
    if (model.predict(blended).label != image.label) {
      res.success = true;
      return res;
    }
  }
  res.success = false;
  return res;
}

Tensor gaussian_blur_pixels(const Tensor& pixels, double sigma) {
  if (sigma <= 0.0) return pixels;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double sum = 0.0;
  for (int j = -radius; j <= radius; ++j) {
    kernel[j + radius] = std::exp(-0.5 * j * j / (sigma * sigma));
    sum += kernel[j + radius];
  }
  for (auto& v : kernel) v /= sum;

  const int h = pixels.h(), w = pixels.w(), c = pixels.c();
  Tensor tmp = pixels, out = pixels;
  // horizontal, then vertical; borders replicate so constants stay constant
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) {
          int xx = std::clamp(x + j, 0, w - 1);
          acc += kernel[j + radius] * pixels.at(0, y, xx, ch);
        }
        tmp.at(0, y, x, ch) = acc;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int j = -radius; j <= radius; ++j) {
          int yy = std::clamp(y + j, 0, h - 1);
          acc += kernel[j + radius] * tmp.at(0, yy, x, ch);
        }
        out.at(0, y, x, ch) = acc;
      }
  return out;
}

ScalarAttackResult gaussian_blur(TrainedClassifier& model, const LabeledImage& image,
                                 double sigma_max, int steps) {
  ScalarAttackResult res;
  res.pixels = image.pixels;
  if (model.predict(image.pixels).label != image.label) {
    res.success = true;
    return res;
  }
  for (int k = 1; k <= steps; ++k) {
    double sigma = sigma_max * k / steps;
    Tensor blurred = gaussian_blur_pixels(image.pixels, sigma);
    res.pixels = blurred;
    res.param = sigma;
    if (model.predict(blurred).label != image.label) {
      res.success = true;
      return res;
    }
  }
  res.success = false;
  return res;
}

PointwiseResult pointwise(TrainedClassifier& model, const LabeledImage& image, int target_label,
                          std::uint64_t seed, int max_passes) {
  PointwiseResult res;
  res.pixels = image.pixels;
  if (model.predict(image.pixels).label == target_label) {
    res.success = true;
    res.l0 = 0;
    return res;
  }

  const int h = image.pixels.h(), w = image.pixels.w();
  Rng rng(seed);

  // seed adversarial: salt-pepper schedule first, random binary images after
  Tensor adv;
  bool seeded = false;
  {
    std::vector<double> order(static_cast<std::size_t>(h) * w);
    std::vector<double> value(order.size());
    for (auto& v : order) v = rng.uniform();
    for (auto& v : value) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
    for (int k = 1; k <= 50 && !seeded; ++k) {
      double fraction = static_cast<double>(k) / 50;
      Tensor noisy = image.pixels;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          std::size_t p = static_cast<std::size_t>(y) * w + x;
          if (order[p] < fraction)
            for (int c = 0; c < 3; ++c) noisy.at(0, y, x, c) = value[p];
        }
      if (model.predict(noisy).label == target_label) {
        adv = noisy;
        seeded = true;
      }
    }
    for (int attempt = 0; attempt < 20 && !seeded; ++attempt) {
      Tensor noisy = image.pixels;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double v = rng.uniform() < 0.5 ? 0.0 : 1.0;
          for (int c = 0; c < 3; ++c) noisy.at(0, y, x, c) = v;
        }
      if (model.predict(noisy).label == target_label) {
        adv = noisy;
        seeded = true;
      }
    }
  }
  if (!seeded) {
    res.success = false;
    return res;
  }

  // greedy minimization: reset pixels to clean while still adversarial
  std::vector<std::size_t> coords(static_cast<std::size_t>(h) * w);
  std::iota(coords.begin(), coords.end(), 0);
  for (int pass = 0; pass < max_passes; ++pass) {
    rng.shuffle(coords);
    int resets = 0;
    for (std::size_t p : coords) {
      int y = static_cast<int>(p) / w, x = static_cast<int>(p) % w;
      bool differs = false;
      for (int c = 0; c < 3; ++c)
        if (adv.at(0, y, x, c) != image.pixels.at(0, y, x, c)) differs = true;
      if (!differs) continue;
      Tensor candidate = adv;
      for (int c = 0; c < 3; ++c) candidate.at(0, y, x, c) = image.pixels.at(0, y, x, c);
      if (model.predict(candidate).label == target_label) {
        adv = std::move(candidate);
        ++resets;
      }
    }
    if (resets == 0) break;
  }

  res.pixels = adv;
  res.success = true;
  res.l0 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        if (adv.at(0, y, x, c) != image.pixels.at(0, y, x, c)) {
          ++res.l0;
          break;
        }
  return res;
}

Perturbation average_perturbation(const std::vector<Tensor>& noises, int source_class,
                                  int target_class) {
  if (noises.empty()) throw DataError("average_perturbation on an empty list");
  Perturbation out;
  out.mode = ChannelMode::full_rgb;
  out.source_class = source_class;
  out.target_class = target_class;
  out.delta = zeros_like(noises[0]);
  for (const auto& nz : noises) {
    if (!nz.same_shape(out.delta)) throw ShapeError("perturbation shapes differ in average");
    for (std::size_t i = 0; i < nz.size(); ++i) out.delta[i] += nz[i] / noises.size();
  }
  return out;
}

}  // namespace signattack
