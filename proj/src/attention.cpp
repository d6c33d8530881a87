#include "signattack/attention.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "signattack/errors.hpp"
#include "signattack/image.hpp"
#include "signattack/rng.hpp"
#include "signattack/serialize.hpp"

namespace signattack {

using nn::LayerPtr;

AttentionNetwork AttentionNetwork::build(const AttentionNetworkSpec& spec, std::uint64_t init_seed,
                                         std::vector<std::string> class_names) {
  if (spec.stage_module_counts.empty()) throw ConfigError("stage_module_counts must be non-empty");
  for (int m : spec.stage_module_counts)
    if (m < 1) throw ConfigError("every attention stage needs at least one module");
  if (spec.num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (spec.input_side < 8) throw ConfigError("input_side must be >= 8");
  if (spec.last_stage_channels < 1) throw ConfigError("last_stage_channels must be >= 1");
  if (!class_names.empty() && static_cast<int>(class_names.size()) != spec.num_classes)
    throw ConfigError("class_names length does not match num_classes");
  if (class_names.empty())
    for (int i = 0; i < spec.num_classes; ++i) class_names.push_back("class" + std::to_string(i));

  Rng rng(init_seed);
  AttentionNetwork ran;
  nn::Sequential net;

  const int num_stages = static_cast<int>(spec.stage_module_counts.size());
  std::vector<int> widths = {16, 32, 64};
  while (static_cast<int>(widths.size()) < num_stages) widths.push_back(widths.back() * 2);

  net.add(std::make_unique<nn::Conv2d>(3, widths[0], 3, 1, rng));
  // the raw image passes through one residual unit before the first module
  net.add(std::make_unique<nn::ResidualUnit>(widths[0], widths[0], 1, "relu", rng));

  int spatial = spec.input_side;
  for (int stage = 0; stage < num_stages; ++stage) {
    int channels = widths[stage];
    if (stage + 1 == num_stages && spec.last_stage_channels != channels) {
      // collapse the final stage so module outputs are directly readable as maps
      net.add(std::make_unique<nn::Conv2d>(channels, spec.last_stage_channels, 1, 1, rng));
      net.add(std::make_unique<nn::Relu>());
      channels = spec.last_stage_channels;
    }
    for (int m = 0; m < spec.stage_module_counts[stage]; ++m) {
      auto module = std::make_unique<nn::AttentionModule>(channels, "relu", rng);
      ran.modules_.push_back(module.get());
      net.add(std::move(module));
    }
    if (stage + 1 < num_stages) {
      net.add(std::make_unique<nn::ResidualUnit>(channels, widths[stage + 1], 2, "relu", rng));
      spatial /= 2;
    }
  }
  net.add(std::make_unique<nn::Dense>(spatial * spatial * spec.last_stage_channels,
                                      spec.num_classes, rng));
  net.add(std::make_unique<nn::Softmax>());

  ran.spec_ = spec;
  ran.class_names_ = std::move(class_names);
  ran.init_seed_ = init_seed;
  ran.net_ = std::move(net);
  return ran;
}

void AttentionNetwork::check_input(const Tensor& batch) const {
  if (batch.h() != spec_.input_side || batch.w() != spec_.input_side || batch.c() != 3)
    throw ShapeError("attention network expects (N," + std::to_string(spec_.input_side) + "," +
                     std::to_string(spec_.input_side) + ",3), got " + batch.shape_str());
}

TrainLog AttentionNetwork::train(const DatasetSplit& data, const TrainConfig& cfg) {
  if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.learning_rate <= 0.0)
    throw ConfigError("train config values must be positive");
  if (data.train.empty()) throw DataError("empty training set");
  for (const auto& img : data.train)
    if (img.label < 0 || img.label >= spec_.num_classes)
      throw DataError("train label outside network range");

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
        throw NumericError("attention training diverged at epoch " + std::to_string(epoch));
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

PredictionResult AttentionNetwork::predict(const Tensor& image) {
  check_input(image);
  Tensor probs = net_.forward(image);
  PredictionResult res;
  res.probabilities.resize(probs.c());
  for (int j = 0; j < probs.c(); ++j) res.probabilities[j] = probs.at(0, 0, 0, j);
  res.label = nn::argmax_row(probs, 0);
  return res;
}

std::vector<int> AttentionNetwork::predict_batch(const Tensor& batch) {
  check_input(batch);
  std::vector<int> labels(batch.n());
  constexpr int kChunk = 32;
  for (int start = 0; start < batch.n(); start += kChunk) {
    int count = std::min(kChunk, batch.n() - start);
    Tensor chunk(count, batch.h(), batch.w(), batch.c());
    for (int i = 0; i < count; ++i) chunk.set_slice(i, batch.slice(start + i));
    Tensor probs = net_.forward(chunk);
    for (int i = 0; i < count; ++i) labels[start + i] = nn::argmax_row(probs, i);
  }
  return labels;
}

double AttentionNetwork::accuracy(const std::vector<LabeledImage>& images) {
  if (images.empty()) return 0.0;
  Tensor batch(static_cast<int>(images.size()), spec_.input_side, spec_.input_side, 3);
  for (std::size_t i = 0; i < images.size(); ++i) batch.set_slice(static_cast<int>(i), images[i].pixels);
  auto labels = predict_batch(batch);
  int correct = 0;
  for (std::size_t i = 0; i < images.size(); ++i)
    if (labels[i] == images[i].label) ++correct;
  return static_cast<double>(correct) / images.size();
}

std::vector<AttentionMap> AttentionNetwork::extract_maps(const std::vector<LabeledImage>& images,
                                                         bool use_mask_branch) {
  if (!trained_) throw Error("untrained", "cannot extract maps from an untrained network");
  if (spec_.last_stage_channels != 1)
    throw ConfigError("map extraction needs last_stage_channels == 1");
  if (images.empty()) return {};

  nn::AttentionModule* last = modules_.back();
  last->set_capture(true);
  std::vector<AttentionMap> maps;
  constexpr int kChunk = 32;
  const int n = static_cast<int>(images.size());
  for (int start = 0; start < n; start += kChunk) {
    int count = std::min(kChunk, n - start);
    Tensor batch(count, spec_.input_side, spec_.input_side, 3);
    for (int i = 0; i < count; ++i) batch.set_slice(i, images[start + i].pixels);
    net_.forward(batch);
    const Tensor& tap = use_mask_branch ? last->last_mask() : last->last_combined();
    for (int i = 0; i < count; ++i) {
      AttentionMap map;
      map.weights = tap.slice(i);
      map.class_index = images[start + i].label;
      map.source_image_id = images[start + i].id;
      maps.push_back(std::move(map));
    }
  }
  last->set_capture(false);
  return maps;
}

std::uint64_t AttentionNetwork::weights_hash() const {
  std::vector<nn::ParamRef> params;
  const_cast<nn::Sequential&>(net_).collect_params(params);
  std::string bytes;
  for (const auto& p : params)
    bytes.append(reinterpret_cast<const char*>(p.value->data()), p.value->size() * sizeof(double));
  return fnv1a64(bytes);
}

void AttentionNetwork::save(const std::string& path) const {
  Artifact a("attention_checkpoint");
  auto& hdr = a.header();
  hdr["stage_module_counts"] = spec_.stage_module_counts;
  hdr["last_stage_channels"] = spec_.last_stage_channels;
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

AttentionNetwork AttentionNetwork::load(const std::string& path) {
  Artifact a = Artifact::load(path, "attention_checkpoint", "train-attention");
  const auto& hdr = a.header();
  AttentionNetworkSpec spec;
  spec.stage_module_counts = hdr.at("stage_module_counts").get<std::vector<int>>();
  spec.last_stage_channels = hdr.at("last_stage_channels").get<int>();
  spec.num_classes = hdr.at("num_classes").get<int>();
  spec.input_side = hdr.at("input_side").get<int>();

  AttentionNetwork ran = build(spec, hdr.at("init_seed").get<std::uint64_t>(),
                               hdr.at("class_names").get<std::vector<std::string>>());
  std::vector<nn::ParamRef> params;
  ran.net_.collect_params(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& stored = a.get("p" + std::to_string(i));
    if (!stored.same_shape(*params[i].value))
      throw IoError("checkpoint parameter " + std::to_string(i) + " has unexpected shape");
    *params[i].value = stored;
  }
  ran.trained_ = hdr.at("trained").get<bool>();
  return ran;
}

AttentionMap select_representative(const std::vector<AttentionMap>& maps) {
  if (maps.empty()) throw DataError("select_representative on an empty map list");
  const Tensor& first = maps[0].weights;
  for (const auto& m : maps) {
    if (!m.weights.same_shape(first)) throw ShapeError("representative selection needs uniform shapes");
    if (m.class_index != maps[0].class_index)
      throw DataError("representative selection mixes classes");
  }

  Tensor avg = zeros_like(first);
  for (const auto& m : maps)
    for (std::size_t i = 0; i < avg.size(); ++i) avg[i] += m.weights[i] / maps.size();

  auto dist_to_avg = [&](std::size_t k) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < avg.size(); ++i) {
      double diff = avg[i] - maps[k].weights[i];
      d2 += diff * diff;
    }
    return std::sqrt(d2);
  };

  std::size_t best = 0;
  double best_dist = dist_to_avg(0);
  for (std::size_t k = 1; k < maps.size(); ++k) {
    double d = dist_to_avg(k);
    if (d < best_dist || (d == best_dist && maps[k].source_image_id < maps[best].source_image_id)) {
      best = k;
      best_dist = d;
    }
  }
  return maps[best];
}

AttentionMap finalize_map(const AttentionMap& map, int m, int n) {
  if (m < 2 || n < 2) throw ConfigError("finalize_map target must be at least 2x2");
  if (!map.weights.all_finite()) throw NumericError("attention map contains non-finite weights");

  AttentionMap out;
  out.class_index = map.class_index;
  out.source_image_id = map.source_image_id;
  out.weights = bilinear_resize(map.weights, m, n);

  double lo = out.weights.min(), hi = out.weights.max();
  if (hi - lo < 1e-12) {
    out.weights.fill(0.0);  // constant map carries no attention signal
  } else {
    for (std::size_t i = 0; i < out.weights.size(); ++i)
      out.weights[i] = (out.weights[i] - lo) / (hi - lo);
  }
  return out;
}

void save_map_archive(const std::string& path, const MapArchive& archive) {
  Artifact a("map_archive");
  auto& hdr = a.header();
  hdr["class_names"] = archive.class_names;
  hdr["network_hash"] = archive.network_hash;
  std::vector<std::string> sources;
  std::vector<int> classes;
  for (std::size_t i = 0; i < archive.maps.size(); ++i) {
    a.put("map_" + std::to_string(i), archive.maps[i].weights);
    sources.push_back(archive.maps[i].source_image_id);
    classes.push_back(archive.maps[i].class_index);
  }
  hdr["source_ids"] = sources;
  hdr["class_indices"] = classes;
  a.save(path);
}

MapArchive load_map_archive(const std::string& path) {
  Artifact a = Artifact::load(path, "map_archive", "train-attention");
  const auto& hdr = a.header();
  MapArchive archive;
  archive.class_names = hdr.at("class_names").get<std::vector<std::string>>();
  archive.network_hash = hdr.at("network_hash").get<std::string>();
  auto sources = hdr.at("source_ids").get<std::vector<std::string>>();
  auto classes = hdr.at("class_indices").get<std::vector<int>>();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    AttentionMap map;
    map.weights = a.get("map_" + std::to_string(i));
    map.class_index = classes[i];
    map.source_image_id = sources[i];
    archive.maps.push_back(std::move(map));
  }
  return archive;
}

void export_maps_as_images(const MapArchive& archive, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < archive.maps.size(); ++i) {
    std::string name = i < archive.class_names.size() ? archive.class_names[i]
                                                      : "class" + std::to_string(i);
    encode_image(archive.maps[i].weights, dir + "/map_" + name + ".png");
  }
}

}  // namespace signattack
