#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "signattack/attack.hpp"
#include "signattack/attention.hpp"
#include "signattack/classifier.hpp"
#include "signattack/data.hpp"
#include "signattack/evaluation.hpp"
#include "signattack/synthetic.hpp"

namespace signattack {

struct DatasetBlock {
  std::string format = "folder_per_class";
  std::string root;
  int min_count = 40;
  int side = 32;
  double train_fraction = 0.8;
  std::uint64_t seed = 7;
  std::string cache;  // defaults to <out_dir>/dataset.bin
  std::map<std::string, std::string> alias;
  std::optional<FixtureSpec> synthesize;  // generate root when it is missing
};

struct ClassifierBlock {
  std::string variant = "cnn";
  TrainConfig train;
  std::string checkpoint;
  std::string log;
};

struct AttentionBlock {
  std::vector<int> stage_modules = {1, 2, 3};
  int last_stage_channels = 1;
  TrainConfig train;
  bool use_mask_branch = false;
  bool export_maps = false;
  std::string checkpoint;
  std::string maps;
  std::string log;
};

struct AttackBlock {
  std::string method = "taa";
  std::string source_class;
  std::string target_class;
  AttackObjectiveConfig objective;
  OptimizerConfig optimizer;
  std::string channel_mode = "grayscale_broadcast";
  Rp2Config rp2;
  double fgsm_eps_max = 0.5;
  int fgsm_grid = 50;
  int max_train_images = 0;     // 0 = use every source-class train image
  int baseline_max_images = 0;  // cap for the slow per-image baselines
  std::string archive;          // defaults to <out_dir>/perturbations/<method>.bin
};

struct TransferDatasetBlock {
  std::string format = "folder_per_class";
  std::string root;
  std::map<std::string, std::string> alias;
  std::optional<FixtureSpec> synthesize;
};

struct EvaluationBlock {
  std::string out_dir;  // defaults to <out_dir>/reports
  std::vector<std::string> transfer_models = {"cnn2", "cnn3", "cnn4"};
  std::optional<TransferDatasetBlock> transfer_dataset;
};

struct GeneralizationPair {
  std::string source;
  std::string target;
};

struct PairsBlock {
  GeneralizationPair ii;   // headline attack pair
  GeneralizationPair iii;  // second attack pair
  std::vector<GeneralizationPair> generalization;
};

struct ExperimentConfig {
  std::string scale = "desk";
  std::string out_dir = "out";
  DatasetBlock dataset;
  ClassifierBlock classifier;
  AttentionBlock attention;
  AttackBlock attack;
  EvaluationBlock evaluation;
  PairsBlock pairs;
  std::string config_hash;  // of the canonical merged config
  std::map<std::string, std::string> block_dumps;  // canonical json per block
};

// Built-in defaults for --scale desk (synthetic stand-in) and full (real
// archives; paths must be overridden to point at them).
nlohmann::json default_config_json(const std::string& scale);

// Parse + validate a merged config document; unknown keys and type
// mismatches raise ConfigError with the offending field path.
ExperimentConfig parse_experiment_config(const nlohmann::json& merged);

// Load from file (or scale defaults when path empty), apply key=value
// overrides (dotted paths, JSON-parsed values), validate.
ExperimentConfig load_experiment_config(const std::string& path, const std::string& scale,
                                        const std::vector<std::string>& overrides);

// ---------------------------------------------------------------------------
// Pipeline commands. Each consumes artifacts by path and names the producing
// command in its error when a prerequisite is missing. All are deterministic
// given config and inputs; rerunning overwrites outputs with identical bytes.

void cmd_make_fixture(const std::string& root, const FixtureSpec& spec, int variant = 0);
DatasetCache cmd_ingest(const ExperimentConfig& cfg);
TrainLog cmd_train_classifier(const ExperimentConfig& cfg, const std::string& variant_override = "");
TrainLog cmd_train_attention(const ExperimentConfig& cfg);
void cmd_attack(const ExperimentConfig& cfg);
std::vector<AttackReport> cmd_evaluate(const ExperimentConfig& cfg);
void cmd_reproduce(const ExperimentConfig& cfg, const std::string& table);

// Runs TAA per (source, target) pair against shared artifacts.
std::vector<AttackReport> generalization_suite(TrainedClassifier& model, const DatasetCache& cache,
                                               const MapArchive& maps,
                                               const std::vector<GeneralizationPair>& pairs,
                                               const ExperimentConfig& cfg);

// Reference operating points used by `reproduce` comparison tables.
struct ReferenceRow {
  std::string method;
  std::string source;
  std::string target;
  double asr;     // fraction
  double p_loss;  // L2
};
const std::vector<ReferenceRow>& reference_table(const std::string& table);

}  // namespace signattack
