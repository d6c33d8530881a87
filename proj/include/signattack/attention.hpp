#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signattack/classifier.hpp"
#include "signattack/data.hpp"
#include "signattack/nn.hpp"

namespace signattack {

struct AttentionNetworkSpec {
  std::vector<int> stage_module_counts = {1, 2, 3};
  int last_stage_channels = 1;
  int num_classes = 2;
  int input_side = 32;
};

// Per-class soft weight matrix; `weights` is (1, m, n, 1).
struct AttentionMap {
  Tensor weights;
  int class_index = -1;
  std::string source_image_id;
};

// Stacked residual attention classifier. Stages run at 16/32/64 trunk
// channels with stride-2 transitions; the final stage is collapsed to
// `last_stage_channels` so the last module's combined output doubles as a
// spatial attention map.
class AttentionNetwork {
 public:
  static AttentionNetwork build(const AttentionNetworkSpec& spec, std::uint64_t init_seed,
                                std::vector<std::string> class_names);

  TrainLog train(const DatasetSplit& data, const TrainConfig& cfg);
  PredictionResult predict(const Tensor& image);
  std::vector<int> predict_batch(const Tensor& batch);
  double accuracy(const std::vector<LabeledImage>& images);

  // One map per image: the last attention module's combined output H at its
  // native resolution. `use_mask_branch` taps M instead of H.
  std::vector<AttentionMap> extract_maps(const std::vector<LabeledImage>& images,
                                         bool use_mask_branch = false);

  const AttentionNetworkSpec& spec() const { return spec_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }
  std::vector<std::string> layer_summary() const { return net_.summary(); }
  std::uint64_t weights_hash() const;
  std::vector<nn::AttentionModule*>& modules() { return modules_; }

  void save(const std::string& path) const;
  static AttentionNetwork load(const std::string& path);

 private:
  AttentionNetwork() = default;
  void check_input(const Tensor& batch) const;

  AttentionNetworkSpec spec_;
  std::vector<std::string> class_names_;
  std::uint64_t init_seed_ = 0;
  bool trained_ = false;
  nn::Sequential net_;
  std::vector<nn::AttentionModule*> modules_;  // non-owning, in network order
};

// Eq-style representative pick: the member closest (L2) to the average of
// the list; ties broken by lowest source_image_id.
AttentionMap select_representative(const std::vector<AttentionMap>& maps);

// Bilinear resize to (m, n), then min-max normalize into [0,1]. A constant
// map normalizes to all zeros.
AttentionMap finalize_map(const AttentionMap& map, int m, int n);

struct MapArchive {
  std::vector<AttentionMap> maps;  // index = class index
  std::vector<std::string> class_names;
  std::string network_hash;
};

void save_map_archive(const std::string& path, const MapArchive& archive);
MapArchive load_map_archive(const std::string& path);

// Grayscale dump of every map for eyeballing, one image per class.
void export_maps_as_images(const MapArchive& archive, const std::string& dir);

}  // namespace signattack
