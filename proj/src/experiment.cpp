#include "signattack/experiment.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "signattack/errors.hpp"
#include "signattack/serialize.hpp"

namespace fs = std::filesystem;

namespace signattack {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// defaults

nlohmann::json default_config_json(const std::string& scale) {
  if (scale != "desk" && scale != "full")
    throw ConfigError("unknown scale '" + scale + "', expected desk or full");

  json cfg;
  cfg["scale"] = scale;
  cfg["out_dir"] = "out/" + scale;

  json ds;
  if (scale == "desk") {
    ds["format"] = "folder_per_class";
    ds["root"] = "out/desk/fixture";
    ds["synthesize"] = {{"classes", 5}, {"per_class", 110}, {"seed", 1}, {"variant", 0}};
  } else {
    ds["format"] = "lisa_csv";
    ds["root"] = "data/lisa/allAnnotations.csv";
  }
  ds["min_count"] = 40;
  ds["side"] = 32;
  ds["train_fraction"] = 0.8;
  ds["seed"] = 7;
  ds["cache"] = "";
  ds["alias"] = json::object();
  cfg["dataset"] = ds;

  cfg["classifier"] = {{"variant", "cnn"},
                       {"epochs", scale == "desk" ? 12 : 30},
                       {"batch_size", 64},
                       {"learning_rate", 1e-3},
                       {"seed", 11},
                       {"checkpoint", ""},
                       {"log", ""}};

  cfg["attention"] = {{"stage_modules", {1, 2, 3}},
                      {"last_stage_channels", 1},
                      {"epochs", scale == "desk" ? 12 : 30},
                      {"batch_size", 64},
                      {"learning_rate", 1e-3},
                      {"seed", 13},
                      {"use_mask_branch", false},
                      {"export_maps", false},
                      {"checkpoint", ""},
                      {"maps", ""},
                      {"log", ""}};

  json atk = {{"method", "taa"},
              {"source_class", scale == "desk" ? "stop" : "stop"},
              {"target_class", "speedLimit45"},
              {"lambda", 0.02},
              {"p_norm", 2},
              {"epochs", scale == "desk" ? 120 : 300},
              {"seed", 17},
              {"step_size", 0.01},
              {"beta1", 0.9},
              {"beta2", 0.999},
              {"epsilon", 1e-8},
              {"channel_mode", "grayscale_broadcast"},
              {"rp2", {{"keep_fraction", 0.3}, {"stage1_lambda", -1.0}, {"stage1_epochs", -1}}},
              {"fgsm_eps_max", 0.5},
              {"fgsm_grid", 50},
              {"max_train_images", scale == "desk" ? 160 : 0},
              {"baseline_max_images", scale == "desk" ? 24 : 0},
              {"archive", ""}};
  cfg["attack"] = atk;

  json tds;
  if (scale == "desk") {
    tds = {{"format", "folder_per_class"},
           {"root", "out/desk/fixture_shifted"},
           {"alias", json::object()},
           {"synthesize", {{"classes", 5}, {"per_class", 30}, {"seed", 2}, {"variant", 1}}}};
  } else {
    tds = {{"format", "gtsrb_dir"},
           {"root", "data/gtsrb"},
           {"alias", {{"14", "stop"}, {"27", "pedestrianCrossing"}}}};
  }
  cfg["evaluation"] = {{"out_dir", ""},
                       {"transfer_models", {"cnn2", "cnn3", "cnn4"}},
                       {"transfer_dataset", tds}};

  json pairs;
  if (scale == "desk") {
    pairs["ii"] = {{"source", "stop"}, {"target", "speedLimit45"}};
    pairs["iii"] = {{"source", "pedestrianCrossing"}, {"target", "keepRight"}};
    pairs["generalization"] = json::array({{{"source", "keepRight"}, {"target", "yield"}},
                                           {{"source", "speedLimit45"}, {"target", "pedestrianCrossing"}},
                                           {{"source", "yield"}, {"target", "stop"}}});
  } else {
    pairs["ii"] = {{"source", "stop"}, {"target", "speedLimit45"}};
    pairs["iii"] = {{"source", "pedestrianCrossing"}, {"target", "speedLimit65"}};
    pairs["generalization"] =
        json::array({{{"source", "stop"}, {"target", "turnRight"}},
                     {{"source", "pedestrianCrossing"}, {"target", "merge"}},
                     {{"source", "signalAhead"}, {"target", "turnRight"}},
                     {{"source", "speedLimit35"}, {"target", "school"}},
                     {{"source", "speedLimit25"}, {"target", "noLeftTurn"}},
                     {{"source", "keepRight"}, {"target", "yield"}},
                     {{"source", "addedLane"}, {"target", "speedLimit40"}},
                     {{"source", "merge"}, {"target", "noLeftTurn"}},
                     {{"source", "yield"}, {"target", "roundabout"}},
                     {{"source", "laneEnds"}, {"target", "rightLaneMustTurn"}},
                     {{"source", "stopAhead"}, {"target", "schoolSpeedLimit25"}}});
  }
  cfg["pairs"] = pairs;
  return cfg;
}

// ---------------------------------------------------------------------------
// config parsing

namespace {

json deep_merge(json base, const json& over) {
  if (!base.is_object() || !over.is_object()) return over;
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()))
      base[it.key()] = deep_merge(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
  return base;
}

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ConfigError("config field '" + path + "': " + what);
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) known = true;
    if (!known) field_error(path.empty() ? it.key() : path + "." + it.key(), "unknown key");
  }
}

const json& member(const json& obj, const std::string& path, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) field_error(path + "." + key, "missing");
  return *it;
}

int get_int(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_number_integer()) field_error(path + "." + key, "expected integer");
  return v.get<int>();
}

std::uint64_t get_u64(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_number_unsigned() && !v.is_number_integer()) field_error(path + "." + key, "expected integer");
  return v.get<std::uint64_t>();
}

double get_double(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_number()) field_error(path + "." + key, "expected number");
  return v.get<double>();
}

std::string get_string(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_string()) field_error(path + "." + key, "expected string");
  return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& path, const char* key) {
  const json& v = member(obj, path, key);
  if (!v.is_boolean()) field_error(path + "." + key, "expected boolean");
  return v.get<bool>();
}

FixtureSpec parse_fixture(const json& j, const std::string& path, int side) {
  check_keys(j, path, {"classes", "per_class", "seed", "variant"});
  FixtureSpec spec;
  spec.classes = get_int(j, path, "classes");
  spec.per_class = get_int(j, path, "per_class");
  spec.seed = get_u64(j, path, "seed");
  if (j.contains("variant")) spec.variant = get_int(j, path, "variant");
  spec.side = side;
  return spec;
}

std::map<std::string, std::string> parse_alias(const json& j, const std::string& path) {
  if (!j.is_object()) field_error(path, "expected object of name aliases");
  std::map<std::string, std::string> alias;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_string()) field_error(path + "." + it.key(), "expected string");
    alias[it.key()] = it.value().get<std::string>();
  }
  return alias;
}

GeneralizationPair parse_pair(const json& j, const std::string& path) {
  check_keys(j, path, {"source", "target"});
  return {get_string(j, path, "source"), get_string(j, path, "target")};
}

std::string block_hash(const ExperimentConfig& cfg, std::initializer_list<const char*> blocks) {
  std::string bytes;
  for (const char* b : blocks) {
    auto it = cfg.block_dumps.find(b);
    if (it != cfg.block_dumps.end()) bytes += it->second;
  }
  return hash_hex(fnv1a64(bytes));
}

void write_provenance(const std::string& artifact_path, const std::string& hash,
                      const std::string& config_hash) {
  std::ofstream f(artifact_path + ".prov");
  if (!f) throw IoError("cannot write provenance for '" + artifact_path + "'");
  json j{{"block_hash", hash}, {"config_hash", config_hash}};
  f << j.dump() << "\n";
}

bool provenance_matches(const std::string& artifact_path, const std::string& hash) {
  std::ifstream f(artifact_path + ".prov");
  if (!f || !fs::exists(artifact_path)) return false;
  try {
    json j = json::parse(f);
    return j.value("block_hash", "") == hash;
  } catch (const json::exception&) {
    return false;
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const nlohmann::json& merged) {
  check_keys(merged, "",
             {"scale", "out_dir", "dataset", "classifier", "attention", "attack", "evaluation",
              "pairs"});

  ExperimentConfig cfg;
  cfg.scale = get_string(merged, "", "scale");
  cfg.out_dir = get_string(merged, "", "out_dir");

  {
    const json& j = member(merged, "", "dataset");
    check_keys(j, "dataset",
               {"format", "root", "min_count", "side", "train_fraction", "seed", "cache", "alias",
                "synthesize"});
    DatasetBlock& d = cfg.dataset;
    d.format = get_string(j, "dataset", "format");
    parse_dataset_format(d.format);  // validates
    d.root = get_string(j, "dataset", "root");
    d.min_count = get_int(j, "dataset", "min_count");
    d.side = get_int(j, "dataset", "side");
    d.train_fraction = get_double(j, "dataset", "train_fraction");
    d.seed = get_u64(j, "dataset", "seed");
    d.cache = get_string(j, "dataset", "cache");
    d.alias = parse_alias(member(j, "dataset", "alias"), "dataset.alias");
    if (j.contains("synthesize"))
      d.synthesize = parse_fixture(j["synthesize"], "dataset.synthesize", d.side);
    if (d.min_count < 1) field_error("dataset.min_count", "must be >= 1");
    if (d.side < 8) field_error("dataset.side", "must be >= 8");
    if (!(d.train_fraction > 0.0 && d.train_fraction < 1.0))
      field_error("dataset.train_fraction", "must lie in (0,1)");
    if (d.cache.empty()) d.cache = cfg.out_dir + "/dataset.bin";
  }

  {
    const json& j = member(merged, "", "classifier");
    check_keys(j, "classifier",
               {"variant", "epochs", "batch_size", "learning_rate", "seed", "checkpoint", "log"});
    ClassifierBlock& c = cfg.classifier;
    c.variant = get_string(j, "classifier", "variant");
    parse_classifier_variant(c.variant);
    c.train.epochs = get_int(j, "classifier", "epochs");
    c.train.batch_size = get_int(j, "classifier", "batch_size");
    c.train.learning_rate = get_double(j, "classifier", "learning_rate");
    c.train.seed = get_u64(j, "classifier", "seed");
    c.checkpoint = get_string(j, "classifier", "checkpoint");
    c.log = get_string(j, "classifier", "log");
    if (c.train.epochs < 1 || c.train.batch_size < 1 || c.train.learning_rate <= 0)
      field_error("classifier", "epochs, batch_size and learning_rate must be positive");
    if (c.checkpoint.empty()) c.checkpoint = cfg.out_dir + "/classifier.bin";
    if (c.log.empty()) c.log = cfg.out_dir + "/classifier_log.csv";
  }

  {
    const json& j = member(merged, "", "attention");
    check_keys(j, "attention",
               {"stage_modules", "last_stage_channels", "epochs", "batch_size", "learning_rate",
                "seed", "use_mask_branch", "export_maps", "checkpoint", "maps", "log"});
    AttentionBlock& a = cfg.attention;
    const json& sm = member(j, "attention", "stage_modules");
    if (!sm.is_array() || sm.empty()) field_error("attention.stage_modules", "expected non-empty array");
    a.stage_modules.clear();
    for (const auto& v : sm) {
      if (!v.is_number_integer() || v.get<int>() < 1)
        field_error("attention.stage_modules", "entries must be integers >= 1");
      a.stage_modules.push_back(v.get<int>());
    }
    a.last_stage_channels = get_int(j, "attention", "last_stage_channels");
    a.train.epochs = get_int(j, "attention", "epochs");
    a.train.batch_size = get_int(j, "attention", "batch_size");
    a.train.learning_rate = get_double(j, "attention", "learning_rate");
    a.train.seed = get_u64(j, "attention", "seed");
    a.use_mask_branch = get_bool(j, "attention", "use_mask_branch");
    a.export_maps = get_bool(j, "attention", "export_maps");
    a.checkpoint = get_string(j, "attention", "checkpoint");
    a.maps = get_string(j, "attention", "maps");
    a.log = get_string(j, "attention", "log");
    if (a.last_stage_channels != 1)
      field_error("attention.last_stage_channels", "must be 1 so module outputs read as maps");
    if (a.checkpoint.empty()) a.checkpoint = cfg.out_dir + "/attention.bin";
    if (a.maps.empty()) a.maps = cfg.out_dir + "/maps.bin";
    if (a.log.empty()) a.log = cfg.out_dir + "/attention_log.csv";
  }

  {
    const json& j = member(merged, "", "attack");
    check_keys(j, "attack",
               {"method", "source_class", "target_class", "lambda", "p_norm", "epochs", "seed",
                "step_size", "beta1", "beta2", "epsilon", "channel_mode", "rp2", "fgsm_eps_max",
                "fgsm_grid", "max_train_images", "baseline_max_images", "archive"});
    AttackBlock& a = cfg.attack;
    a.method = get_string(j, "attack", "method");
    static const std::vector<std::string> kMethods = {"taa",     "rp2",  "fgsm", "salt_pepper",
                                                      "contrast", "blur", "pointwise"};
    if (std::find(kMethods.begin(), kMethods.end(), a.method) == kMethods.end())
      field_error("attack.method", "unknown method '" + a.method + "'");
    a.source_class = get_string(j, "attack", "source_class");
    a.target_class = get_string(j, "attack", "target_class");
    a.objective.lambda = get_double(j, "attack", "lambda");
    a.objective.p_norm = get_int(j, "attack", "p_norm");
    a.objective.epochs = get_int(j, "attack", "epochs");
    a.objective.seed = get_u64(j, "attack", "seed");
    a.optimizer.step_size = get_double(j, "attack", "step_size");
    a.optimizer.beta1 = get_double(j, "attack", "beta1");
    a.optimizer.beta2 = get_double(j, "attack", "beta2");
    a.optimizer.epsilon = get_double(j, "attack", "epsilon");
    a.channel_mode = get_string(j, "attack", "channel_mode");
    parse_channel_mode(a.channel_mode);
    const json& rp2 = member(j, "attack", "rp2");
    check_keys(rp2, "attack.rp2", {"keep_fraction", "stage1_lambda", "stage1_epochs"});
    a.rp2.keep_fraction = get_double(rp2, "attack.rp2", "keep_fraction");
    a.rp2.stage1_lambda = get_double(rp2, "attack.rp2", "stage1_lambda");
    a.rp2.stage1_epochs = get_int(rp2, "attack.rp2", "stage1_epochs");
    a.fgsm_eps_max = get_double(j, "attack", "fgsm_eps_max");
    a.fgsm_grid = get_int(j, "attack", "fgsm_grid");
    a.max_train_images = get_int(j, "attack", "max_train_images");
    a.baseline_max_images = get_int(j, "attack", "baseline_max_images");
    a.archive = get_string(j, "attack", "archive");
    if (a.objective.p_norm != 1 && a.objective.p_norm != 2)
      field_error("attack.p_norm", "must be 1 or 2");
    if (a.objective.epochs < 1) field_error("attack.epochs", "must be >= 1");
    if (a.objective.lambda < 0) field_error("attack.lambda", "must be >= 0");
    if (a.archive.empty()) a.archive = cfg.out_dir + "/perturbations/" + a.method + ".bin";
  }

  {
    const json& j = member(merged, "", "evaluation");
    check_keys(j, "evaluation", {"out_dir", "transfer_models", "transfer_dataset"});
    EvaluationBlock& e = cfg.evaluation;
    e.out_dir = get_string(j, "evaluation", "out_dir");
    if (e.out_dir.empty()) e.out_dir = cfg.out_dir + "/reports";
    e.transfer_models.clear();
    for (const auto& v : member(j, "evaluation", "transfer_models")) {
      if (!v.is_string()) field_error("evaluation.transfer_models", "expected strings");
      parse_classifier_variant(v.get<std::string>());
      e.transfer_models.push_back(v.get<std::string>());
    }
    if (j.contains("transfer_dataset") && !j["transfer_dataset"].is_null()) {
      const json& t = j["transfer_dataset"];
      check_keys(t, "evaluation.transfer_dataset", {"format", "root", "alias", "synthesize"});
      TransferDatasetBlock tb;
      tb.format = get_string(t, "evaluation.transfer_dataset", "format");
      parse_dataset_format(tb.format);
      tb.root = get_string(t, "evaluation.transfer_dataset", "root");
      tb.alias = parse_alias(member(t, "evaluation.transfer_dataset", "alias"),
                             "evaluation.transfer_dataset.alias");
      if (t.contains("synthesize"))
        tb.synthesize =
            parse_fixture(t["synthesize"], "evaluation.transfer_dataset.synthesize", cfg.dataset.side);
      e.transfer_dataset = std::move(tb);
    }
  }

  {
    const json& j = member(merged, "", "pairs");
    check_keys(j, "pairs", {"ii", "iii", "generalization"});
    cfg.pairs.ii = parse_pair(member(j, "pairs", "ii"), "pairs.ii");
    cfg.pairs.iii = parse_pair(member(j, "pairs", "iii"), "pairs.iii");
    for (const auto& p : member(j, "pairs", "generalization"))
      cfg.pairs.generalization.push_back(parse_pair(p, "pairs.generalization"));
  }

  cfg.config_hash = hash_hex(fnv1a64(merged.dump()));
  for (const char* key : {"dataset", "classifier", "attention", "attack", "evaluation", "pairs"})
    cfg.block_dumps[key] = merged.at(key).dump();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path, const std::string& scale,
                                        const std::vector<std::string>& overrides) {
  json merged = default_config_json(scale.empty() ? "desk" : scale);
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    json user;
    try {
      user = json::parse(f, nullptr, true, true);  // allow comments
    } catch (const json::exception& e) {
      throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (user.contains("scale") && scale.empty())
      merged = default_config_json(user["scale"].get<std::string>());
    merged = deep_merge(merged, user);
  }
  for (const std::string& kv : overrides) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + kv + "' is not key=value");
    std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    json parsed;
    try {
      parsed = json::parse(value);
    } catch (const json::exception&) {
      parsed = value;  // bare words are strings
    }
    json* cursor = &merged;
    std::size_t start = 0;
    while (true) {
      auto dot = key.find('.', start);
      std::string part = key.substr(start, dot == std::string::npos ? dot : dot - start);
      if (part.empty()) throw ConfigError("override key '" + key + "' has an empty segment");
      if (dot == std::string::npos) {
        (*cursor)[part] = parsed;
        break;
      }
      cursor = &(*cursor)[part];
      start = dot + 1;
    }
  }
  return parse_experiment_config(merged);
}

// ---------------------------------------------------------------------------
// commands

void cmd_make_fixture(const std::string& root, const FixtureSpec& spec, int variant) {
  FixtureSpec s = spec;
  s.variant = variant == 0 ? spec.variant : variant;
  write_sign_fixture(root, s);
  std::cout << "[make-fixture] wrote " << s.classes << " classes x " << s.per_class
            << " images under " << root << "\n";
}

DatasetCache cmd_ingest(const ExperimentConfig& cfg) {
  const DatasetBlock& d = cfg.dataset;
  if (d.synthesize && !fs::exists(d.root)) cmd_make_fixture(d.root, *d.synthesize);

  LoadResult loaded = load_dataset(d.root, parse_dataset_format(d.format));
  apply_alias(loaded.annotations, d.alias);
  ClassCatalog catalog = build_catalog(loaded.annotations, d.min_count);
  MaterializeResult mat = materialize(loaded.annotations, catalog, d.side);

  DatasetCache cache;
  cache.split = split(mat.images, d.train_fraction, d.seed);
  cache.catalog = catalog;
  cache.side = d.side;
  save_dataset_cache(d.cache, cache);
  write_provenance(d.cache, block_hash(cfg, {"dataset"}), cfg.config_hash);

  std::cout << "[ingest] " << catalog.size() << " classes, " << cache.split.train.size()
            << " train / " << cache.split.test.size() << " test images (skipped "
            << loaded.skipped + mat.skipped << ") -> " << d.cache << "\n";
  return cache;
}

namespace {

std::string variant_checkpoint_path(const ExperimentConfig& cfg, const std::string& variant) {
  if (variant.empty() || variant == cfg.classifier.variant) return cfg.classifier.checkpoint;
  fs::path p(cfg.classifier.checkpoint);
  return (p.parent_path() / (p.stem().string() + "_" + variant + p.extension().string())).string();
}

DatasetCache require_cache(const ExperimentConfig& cfg) {
  if (!fs::exists(cfg.dataset.cache)) throw MissingArtifactError(cfg.dataset.cache, "ingest");
  return load_dataset_cache(cfg.dataset.cache);
}

TrainedClassifier require_classifier(const ExperimentConfig& cfg, const std::string& variant = "") {
  std::string path = variant_checkpoint_path(cfg, variant);
  if (!fs::exists(path)) throw MissingArtifactError(path, "train-classifier");
  return TrainedClassifier::load(path);
}

MapArchive require_maps(const ExperimentConfig& cfg) {
  if (!fs::exists(cfg.attention.maps)) throw MissingArtifactError(cfg.attention.maps, "train-attention");
  return load_map_archive(cfg.attention.maps);
}

int require_class(const ClassCatalog& catalog, const std::string& name, const char* role) {
  int idx = catalog.index_of(name);
  if (idx < 0)
    throw ConfigError(std::string(role) + " class '" + name + "' is not in the class catalog");
  return idx;
}

std::vector<LabeledImage> class_subset(const std::vector<LabeledImage>& images, int label,
                                       int cap) {
  std::vector<LabeledImage> out;
  for (const auto& img : images)
    if (img.label == label) {
      out.push_back(img);
      if (cap > 0 && static_cast<int>(out.size()) >= cap) break;
    }
  return out;
}

json trace_to_json(const EpochTrace& trace) {
  json arr = json::array();
  for (const auto& pt : trace) arr.push_back({pt.epoch, pt.objective, pt.asr, pt.p_loss});
  return arr;
}

EpochTrace trace_from_json(const json& arr) {
  EpochTrace trace;
  for (const auto& row : arr)
    trace.push_back({row[0].get<int>(), row[1].get<double>(), row[2].get<double>(),
                     row[3].get<double>()});
  return trace;
}

}  // namespace

TrainLog cmd_train_classifier(const ExperimentConfig& cfg, const std::string& variant_override) {
  DatasetCache cache = require_cache(cfg);
  std::string variant = variant_override.empty() ? cfg.classifier.variant : variant_override;

  ClassifierSpec spec;
  spec.variant = parse_classifier_variant(variant);
  spec.num_classes = static_cast<int>(cache.catalog.size());
  spec.input_side = cache.side;
  TrainedClassifier model = TrainedClassifier::build(spec, cfg.classifier.train.seed,
                                                     cache.catalog.names);
  TrainLog log = model.train(cache.split, cfg.classifier.train);

  std::string path = variant_checkpoint_path(cfg, variant);
  model.save(path);
  write_provenance(path, block_hash(cfg, {"dataset", "classifier"}) + "_" + variant,
                   cfg.config_hash);
  fs::path logp(cfg.classifier.log);
  std::string log_path = variant == cfg.classifier.variant
                             ? cfg.classifier.log
                             : (logp.parent_path() / (logp.stem().string() + "_" + variant + ".csv"))
                                   .string();
  write_train_log_csv(log, log_path);

  std::cout << "[train-classifier] " << variant << " test accuracy "
            << (log.epochs.empty() ? 0.0 : log.epochs.back().test_accuracy) << " -> " << path
            << "\n";
  return log;
}

TrainLog cmd_train_attention(const ExperimentConfig& cfg) {
  DatasetCache cache = require_cache(cfg);

  AttentionNetworkSpec spec;
  spec.stage_module_counts = cfg.attention.stage_modules;
  spec.last_stage_channels = cfg.attention.last_stage_channels;
  spec.num_classes = static_cast<int>(cache.catalog.size());
  spec.input_side = cache.side;
  AttentionNetwork ran = AttentionNetwork::build(spec, cfg.attention.train.seed,
                                                 cache.catalog.names);
  TrainLog log = ran.train(cache.split, cfg.attention.train);
  ran.save(cfg.attention.checkpoint);
  write_provenance(cfg.attention.checkpoint, block_hash(cfg, {"dataset", "attention"}),
                   cfg.config_hash);
  write_train_log_csv(log, cfg.attention.log);

  // one finalized map per class, from the training images
  auto raw_maps = ran.extract_maps(cache.split.train, cfg.attention.use_mask_branch);
  MapArchive archive;
  archive.class_names = cache.catalog.names;
  archive.network_hash = hash_hex(ran.weights_hash());
  for (int cls = 0; cls < static_cast<int>(cache.catalog.size()); ++cls) {
    std::vector<AttentionMap> cls_maps;
    for (const auto& m : raw_maps)
      if (m.class_index == cls) cls_maps.push_back(m);
    if (cls_maps.empty())
      throw DataError("no training images for class '" + cache.catalog.names[cls] + "'");
    AttentionMap rep = select_representative(cls_maps);
    archive.maps.push_back(finalize_map(rep, cache.side, cache.side));
  }
  save_map_archive(cfg.attention.maps, archive);
  write_provenance(cfg.attention.maps, block_hash(cfg, {"dataset", "attention"}),
                   cfg.config_hash);
  if (cfg.attention.export_maps) export_maps_as_images(archive, cfg.out_dir + "/maps_png");

  std::cout << "[train-attention] test accuracy "
            << (log.epochs.empty() ? 0.0 : log.epochs.back().test_accuracy) << ", "
            << archive.maps.size() << " maps -> " << cfg.attention.maps << "\n";
  return log;
}

namespace {

// shared by cmd_attack and the reproduce/generalization drivers
void run_attack_to_archive(const ExperimentConfig& cfg, const AttackBlock& blk,
                           DatasetCache& cache, TrainedClassifier& model) {
  int source = require_class(cache.catalog, blk.source_class, "source");
  int target = require_class(cache.catalog, blk.target_class, "target");
  auto train_src = class_subset(cache.split.train, source, blk.max_train_images);
  if (train_src.empty())
    throw DataError("no training images of class '" + blk.source_class + "'");

  AttackObjectiveConfig obj = blk.objective;
  obj.target_class = target;
  ChannelMode mode = parse_channel_mode(blk.channel_mode);

  Artifact a("perturbation_archive");
  auto& hdr = a.header();
  hdr["method"] = blk.method;
  hdr["source_class"] = blk.source_class;
  hdr["target_class"] = blk.target_class;
  hdr["source_index"] = source;
  hdr["target_index"] = target;
  hdr["seed"] = obj.seed;
  hdr["lambda"] = obj.lambda;
  hdr["p_norm"] = obj.p_norm;
  hdr["epochs"] = obj.epochs;
  hdr["config_hash"] = cfg.config_hash;
  hdr["n_train_images"] = static_cast<int>(train_src.size());

  if (blk.method == "taa") {
    MapArchive maps = require_maps(cfg);
    if (target >= static_cast<int>(maps.maps.size()))
      throw DataError("map archive lacks class index " + std::to_string(target));
    const AttentionMap& map = maps.maps[target];
    auto result = taa_optimize(model, train_src, map, obj, blk.optimizer, mode);
    hdr["channel_mode"] = channel_mode_name(result.perturbation.mode);
    hdr["map_hash"] = hash_hex(tensor_hash(map.weights));
    hdr["trace"] = trace_to_json(result.trace);
    a.put("delta", result.perturbation.delta);
    a.put("map", map.weights);
  } else if (blk.method == "rp2") {
    ChannelMode rp2_mode = blk.channel_mode == "grayscale_broadcast" ? ChannelMode::full_rgb : mode;
    auto result = rp2_optimize(model, train_src, obj, blk.optimizer, rp2_mode, blk.rp2);
    hdr["channel_mode"] = channel_mode_name(result.perturbation.mode);
    hdr["keep_fraction"] = blk.rp2.keep_fraction;
    hdr["trace"] = trace_to_json(result.trace);
    hdr["stage1_trace"] = trace_to_json(result.stage1_trace);
    a.put("delta", result.perturbation.delta);
    a.put("map", result.mask.weights);
    a.put("stage1_delta", result.stage1_delta);
  } else {
    // single-image baselines, averaged into one perturbation (Adv-all)
    int cap = blk.baseline_max_images;
    std::vector<LabeledImage> subset = train_src;
    if (blk.method != "fgsm" && cap > 0 && static_cast<int>(subset.size()) > cap)
      subset.resize(cap);
    std::vector<Tensor> noises;
    int successes = 0;
    Rng seeds(obj.seed);
    for (std::size_t i = 0; i < subset.size(); ++i) {
      std::uint64_t img_seed = seeds.fork(i).next();
      Tensor adv;
      bool ok = false;
      if (blk.method == "fgsm") {
        auto r = fgsm(model, subset[i], target, blk.fgsm_eps_max, blk.fgsm_grid);
        adv = r.pixels;
        ok = r.success;
      } else if (blk.method == "salt_pepper") {
        auto r = salt_pepper(model, subset[i], img_seed);
        adv = r.pixels;
        ok = r.success;
      } else if (blk.method == "contrast") {
        auto r = contrast_reduction(model, subset[i]);
        adv = r.pixels;
        ok = r.success;
      } else if (blk.method == "blur") {
        auto r = gaussian_blur(model, subset[i]);
        adv = r.pixels;
        ok = r.success;
      } else if (blk.method == "pointwise") {
        auto r = pointwise(model, subset[i], target, img_seed);
        adv = r.pixels;
        ok = r.success;
      }
      successes += ok;
      Tensor noise = adv;
      for (std::size_t k = 0; k < noise.size(); ++k) noise[k] -= subset[i].pixels[k];
      noises.push_back(std::move(noise));
    }
    Perturbation avg = average_perturbation(noises, source, target);
    hdr["channel_mode"] = channel_mode_name(avg.mode);
    hdr["n_attacked_images"] = static_cast<int>(subset.size());
    hdr["n_single_image_successes"] = successes;
    hdr["trace"] = json::array();
    a.put("delta", avg.delta);
  }

  a.save(blk.archive);
  write_provenance(blk.archive,
                   block_hash(cfg, {"dataset", "classifier", "attention"}) + "_" +
                       hash_hex(fnv1a64(blk.method + "|" + blk.source_class + "|" +
                                        blk.target_class + "|" + cfg.block_dumps.at("attack"))),
                   cfg.config_hash);
  std::cout << "[attack] " << blk.method << " " << blk.source_class << " -> " << blk.target_class
            << " on " << train_src.size() << " images -> " << blk.archive << "\n";
}

}  // namespace

void cmd_attack(const ExperimentConfig& cfg) {
  DatasetCache cache = require_cache(cfg);
  TrainedClassifier model = require_classifier(cfg);
  run_attack_to_archive(cfg, cfg.attack, cache, model);
}

namespace {

struct LoadedPerturbation {
  Perturbation pert;
  std::unique_ptr<Tensor> map;  // null for baselines (all-ones semantics)
  std::string method, source_class, target_class;
  int source_index = -1, target_index = -1;
  std::uint64_t seed = 0;
  std::string config_hash;
  EpochTrace trace;
};

LoadedPerturbation load_perturbation_archive(const std::string& path) {
  Artifact a = Artifact::load(path, "perturbation_archive", "attack");
  const auto& hdr = a.header();
  LoadedPerturbation lp;
  lp.method = hdr.at("method").get<std::string>();
  lp.source_class = hdr.at("source_class").get<std::string>();
  lp.target_class = hdr.at("target_class").get<std::string>();
  lp.source_index = hdr.at("source_index").get<int>();
  lp.target_index = hdr.at("target_index").get<int>();
  lp.seed = hdr.at("seed").get<std::uint64_t>();
  lp.config_hash = hdr.at("config_hash").get<std::string>();
  lp.pert.delta = a.get("delta");
  lp.pert.mode = parse_channel_mode(hdr.at("channel_mode").get<std::string>());
  lp.pert.source_class = lp.source_index;
  lp.pert.target_class = lp.target_index;
  if (a.has("map")) lp.map = std::make_unique<Tensor>(a.get("map"));
  if (hdr.contains("trace")) lp.trace = trace_from_json(hdr.at("trace"));
  return lp;
}

}  // namespace

std::vector<AttackReport> cmd_evaluate(const ExperimentConfig& cfg) {
  DatasetCache cache = require_cache(cfg);
  TrainedClassifier model = require_classifier(cfg);

  std::string pert_dir = fs::path(cfg.attack.archive).parent_path().string();
  std::vector<std::string> archives;
  if (fs::is_directory(pert_dir))
    for (const auto& e : fs::directory_iterator(pert_dir))
      if (e.is_regular_file() && e.path().extension() == ".bin") archives.push_back(e.path().string());
  std::sort(archives.begin(), archives.end());
  if (archives.empty()) throw MissingArtifactError(pert_dir + "/*.bin", "attack");

  std::vector<AttackReport> reports;
  std::map<std::string, EpochTrace> traces;
  for (const auto& path : archives) {
    LoadedPerturbation lp = load_perturbation_archive(path);
    auto test_src = class_subset(cache.split.test, lp.source_index, 0);
    AttackReport report = asr_report(model, test_src, lp.pert, lp.map.get(), lp.target_index);
    report.method = lp.method;
    report.source_class = lp.source_class;
    report.target_class = lp.target_class;
    report.seed = lp.seed;
    report.config_hash = lp.config_hash;
    if (!lp.trace.empty()) traces[lp.method] = lp.trace;
    reports.push_back(std::move(report));
  }
  emit_reports(reports, traces, cfg.evaluation.out_dir);
  std::cout << "[evaluate] " << reports.size() << " reports -> " << cfg.evaluation.out_dir << "\n";
  return reports;
}

std::vector<AttackReport> generalization_suite(TrainedClassifier& model, const DatasetCache& cache,
                                               const MapArchive& maps,
                                               const std::vector<GeneralizationPair>& pairs,
                                               const ExperimentConfig& cfg) {
  std::vector<AttackReport> reports;
  for (const auto& pair : pairs) {
    int source = require_class(cache.catalog, pair.source, "source");
    int target = require_class(cache.catalog, pair.target, "target");
    auto train_src = class_subset(cache.split.train, source, cfg.attack.max_train_images);
    auto test_src = class_subset(cache.split.test, source, 0);
    if (train_src.empty() || test_src.empty())
      throw DataError("pair " + pair.source + "->" + pair.target + " lacks images");

    AttackObjectiveConfig obj = cfg.attack.objective;
    obj.target_class = target;
    auto result = taa_optimize(model, train_src, maps.maps[target], obj, cfg.attack.optimizer,
                               parse_channel_mode(cfg.attack.channel_mode));
    AttackReport report = asr_report(model, test_src, result.perturbation,
                                     &maps.maps[target].weights, target);
    report.method = "taa";
    report.source_class = pair.source;
    report.target_class = pair.target;
    report.seed = obj.seed;
    report.config_hash = cfg.config_hash;
    reports.push_back(std::move(report));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// reference tables

const std::vector<ReferenceRow>& reference_table(const std::string& table) {
  static const std::vector<ReferenceRow> kTableII = {
      {"salt_pepper", "stop", "speedLimit45", 0.000, 1.83},
      {"contrast", "stop", "speedLimit45", 0.000, 5.90},
      {"blur", "stop", "speedLimit45", 0.000, 2.93},
      {"fgsm", "stop", "speedLimit45", 0.475, 14.20},
      {"pointwise", "stop", "speedLimit45", 0.203, 2.71},
      {"rp2", "stop", "speedLimit45", 0.918, 10.81},
      {"taa", "stop", "speedLimit45", 1.000, 7.62},
  };
  static const std::vector<ReferenceRow> kTableIII = {
      {"salt_pepper", "pedestrianCrossing", "speedLimit65", 0.005, 1.44},
      {"contrast", "pedestrianCrossing", "speedLimit65", 0.023, 4.56},
      {"blur", "pedestrianCrossing", "speedLimit65", 0.005, 3.15},
      {"fgsm", "pedestrianCrossing", "speedLimit65", 0.318, 13.26},
      {"pointwise", "pedestrianCrossing", "speedLimit65", 0.203, 2.47},
      {"rp2", "pedestrianCrossing", "speedLimit65", 0.889, 10.73},
      {"taa", "pedestrianCrossing", "speedLimit65", 0.991, 7.47},
  };
  static const std::vector<ReferenceRow> kTableIV = {
      {"rp2", "stop", "speedLimit45", 0.538, 10.81},
      {"taa", "stop", "speedLimit45", 0.867, 7.62},
      {"rp2", "pedestrianCrossing", "speedLimit65", 0.183, 10.73},
      {"taa", "pedestrianCrossing", "speedLimit65", 0.367, 7.47},
  };
  static const std::vector<ReferenceRow> kTableV = {
      {"rp2", "cnn2", "stop->speedLimit45", 0.772, 0.0},
      {"taa", "cnn2", "stop->speedLimit45", 0.651, 0.0},
      {"rp2", "cnn2", "pedestrianCrossing->speedLimit65", 0.387, 0.0},
      {"taa", "cnn2", "pedestrianCrossing->speedLimit65", 0.599, 0.0},
      {"rp2", "cnn3", "stop->speedLimit45", 0.739, 0.0},
      {"taa", "cnn3", "stop->speedLimit45", 0.893, 0.0},
      {"rp2", "cnn3", "pedestrianCrossing->speedLimit65", 0.124, 0.0},
      {"taa", "cnn3", "pedestrianCrossing->speedLimit65", 0.410, 0.0},
      {"rp2", "cnn4", "stop->speedLimit45", 0.887, 0.0},
      {"taa", "cnn4", "stop->speedLimit45", 0.959, 0.0},
      {"rp2", "cnn4", "pedestrianCrossing->speedLimit65", 0.382, 0.0},
      {"taa", "cnn4", "pedestrianCrossing->speedLimit65", 0.742, 0.0},
  };
  static const std::vector<ReferenceRow> kTableVI = {
      {"taa", "stop", "turnRight", 0.997, 8.42},
      {"taa", "pedestrianCrossing", "merge", 0.991, 5.02},
      {"taa", "signalAhead", "turnRight", 1.000, 6.61},
      {"taa", "speedLimit35", "school", 1.000, 4.43},
      {"taa", "speedLimit25", "noLeftTurn", 1.000, 4.36},
      {"taa", "keepRight", "yield", 1.000, 5.07},
      {"taa", "addedLane", "speedLimit40", 1.000, 8.11},
      {"taa", "merge", "noLeftTurn", 1.000, 5.61},
      {"taa", "yield", "roundabout", 1.000, 6.10},
      {"taa", "laneEnds", "rightLaneMustTurn", 1.000, 4.73},
      {"taa", "stopAhead", "schoolSpeedLimit25", 1.000, 6.39},
  };
  static const std::vector<ReferenceRow> kEmpty = {};
  if (table == "II") return kTableII;
  if (table == "III") return kTableIII;
  if (table == "IV") return kTableIV;
  if (table == "V") return kTableV;
  if (table == "VI") return kTableVI;
  return kEmpty;
}

// ---------------------------------------------------------------------------
// reproduce

namespace {

void ensure_ingested(const ExperimentConfig& cfg) {
  if (provenance_matches(cfg.dataset.cache, block_hash(cfg, {"dataset"}))) return;
  cmd_ingest(cfg);
}

void ensure_classifier(const ExperimentConfig& cfg, const std::string& variant = "") {
  std::string v = variant.empty() ? cfg.classifier.variant : variant;
  if (provenance_matches(variant_checkpoint_path(cfg, v),
                         block_hash(cfg, {"dataset", "classifier"}) + "_" + v))
    return;
  cmd_train_classifier(cfg, v);
}

void ensure_attention(const ExperimentConfig& cfg) {
  if (provenance_matches(cfg.attention.maps, block_hash(cfg, {"dataset", "attention"})) &&
      provenance_matches(cfg.attention.checkpoint, block_hash(cfg, {"dataset", "attention"})))
    return;
  cmd_train_attention(cfg);
}

AttackBlock attack_block_for(const ExperimentConfig& cfg, const std::string& method,
                             const GeneralizationPair& pair) {
  AttackBlock blk = cfg.attack;
  blk.method = method;
  blk.source_class = pair.source;
  blk.target_class = pair.target;
  blk.archive = cfg.out_dir + "/perturbations/" + method + "_" + pair.source + "_to_" +
                pair.target + ".bin";
  return blk;
}

void ensure_attack(const ExperimentConfig& cfg, const AttackBlock& blk, DatasetCache& cache,
                   TrainedClassifier& model) {
  std::string hash = block_hash(cfg, {"dataset", "classifier", "attention"}) + "_" +
                     hash_hex(fnv1a64(blk.method + "|" + blk.source_class + "|" + blk.target_class +
                                      "|" + cfg.block_dumps.at("attack")));
  if (provenance_matches(blk.archive, hash)) return;
  run_attack_to_archive(cfg, blk, cache, model);
}

void write_comparison_csv(const std::string& path, const std::vector<AttackReport>& reports,
                          const std::vector<ReferenceRow>& refs, bool match_pair) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path + "'");
  f << "method,source,target,asr,p_loss,n_eligible,n_success,reference_asr,reference_p_loss\n";
  for (const auto& r : reports) {
    const ReferenceRow* ref = nullptr;
    for (const auto& row : refs)
      if (row.method == r.method && (!match_pair || (row.source == r.source_class &&
                                                     row.target == r.target_class)))
        ref = &row;
    f << r.method << "," << r.source_class << "," << r.target_class << "," << r.asr << ","
      << r.p_loss << "," << r.n_eligible << "," << r.n_success << ",";
    if (ref)
      f << ref->asr << "," << ref->p_loss;
    else
      f << ",";
    f << "\n";
  }
}

std::vector<LabeledImage> load_transfer_images(const ExperimentConfig& cfg,
                                               const DatasetCache& cache) {
  if (!cfg.evaluation.transfer_dataset)
    throw ConfigError("evaluation.transfer_dataset is required for data-transfer tables");
  const TransferDatasetBlock& t = *cfg.evaluation.transfer_dataset;
  if (t.synthesize && !fs::exists(t.root)) {
    FixtureSpec spec = *t.synthesize;
    spec.side = cache.side;
    write_sign_fixture(t.root, spec);
  }
  LoadResult loaded = load_dataset(t.root, parse_dataset_format(t.format));
  apply_alias(loaded.annotations, t.alias);
  // foreign images are mapped onto the training catalog; unmatched classes drop out
  MaterializeResult mat = materialize(loaded.annotations, cache.catalog, cache.side);
  return mat.images;
}

std::map<std::string, EpochTrace> traces_for(const std::vector<std::string>& archives) {
  std::map<std::string, EpochTrace> traces;
  for (const auto& path : archives) {
    LoadedPerturbation lp = load_perturbation_archive(path);
    if (!lp.trace.empty()) traces[lp.method] = lp.trace;
  }
  return traces;
}

}  // namespace

void cmd_reproduce(const ExperimentConfig& cfg, const std::string& table) {
  static const std::vector<std::string> kTables = {"II", "III", "IV", "V", "VI", "fig3"};
  if (std::find(kTables.begin(), kTables.end(), table) == kTables.end())
    throw ConfigError("unknown reproduce table '" + table + "' (II, III, IV, V, VI, fig3)");

  ensure_ingested(cfg);
  ensure_classifier(cfg);
  ensure_attention(cfg);
  DatasetCache cache = require_cache(cfg);
  TrainedClassifier model = require_classifier(cfg);
  std::string tables_dir = cfg.out_dir + "/tables";

  auto evaluate_archive = [&](const AttackBlock& blk) {
    LoadedPerturbation lp = load_perturbation_archive(blk.archive);
    auto test_src = class_subset(cache.split.test, lp.source_index, 0);
    AttackReport report = asr_report(model, test_src, lp.pert, lp.map.get(), lp.target_index);
    report.method = lp.method;
    report.source_class = lp.source_class;
    report.target_class = lp.target_class;
    report.seed = lp.seed;
    report.config_hash = lp.config_hash;
    return report;
  };

  if (table == "II" || table == "III") {
    GeneralizationPair pair = table == "II" ? cfg.pairs.ii : cfg.pairs.iii;
    static const std::vector<std::string> kMethods = {"salt_pepper", "contrast",  "blur",
                                                      "fgsm",        "pointwise", "rp2", "taa"};
    std::vector<AttackReport> reports;
    std::map<std::string, EpochTrace> traces;
    for (const auto& method : kMethods) {
      AttackBlock blk = attack_block_for(cfg, method, pair);
      ensure_attack(cfg, blk, cache, model);
      reports.push_back(evaluate_archive(blk));
      LoadedPerturbation lp = load_perturbation_archive(blk.archive);
      if (!lp.trace.empty()) traces[method] = lp.trace;
    }
    emit_reports(reports, traces, cfg.evaluation.out_dir + "/table_" + table);
    write_comparison_csv(tables_dir + "/table_" + table + ".csv", reports,
                         reference_table(table), false);
    std::cout << "[reproduce " << table << "] " << reports.size() << " methods on "
              << pair.source << "->" << pair.target << "\n";
    return;
  }

  if (table == "IV") {
    auto foreign = load_transfer_images(cfg, cache);
    std::vector<AttackReport> reports;
    for (const auto& pair : {cfg.pairs.ii, cfg.pairs.iii}) {
      for (const std::string& method : {std::string("rp2"), std::string("taa")}) {
        AttackBlock blk = attack_block_for(cfg, method, pair);
        ensure_attack(cfg, blk, cache, model);
        LoadedPerturbation lp = load_perturbation_archive(blk.archive);
        auto src_images = class_subset(foreign, lp.source_index, 0);
        if (src_images.empty())
          throw DataError("transfer dataset has no images of class '" + pair.source + "'");
        TransferReport tr = transfer_data(model, src_images, lp.pert, lp.map.get(),
                                          lp.target_index, "transfer_dataset", pair.target);
        tr.report.method = method;
        tr.report.source_class = pair.source;
        tr.report.target_class = pair.target;
        tr.report.seed = lp.seed;
        tr.report.config_hash = lp.config_hash;
        reports.push_back(tr.report);
      }
    }
    emit_reports(reports, {}, cfg.evaluation.out_dir + "/table_IV");
    write_comparison_csv(tables_dir + "/table_IV.csv", reports, reference_table("IV"), true);
    std::cout << "[reproduce IV] data transfer on " << foreign.size() << " foreign images\n";
    return;
  }

  if (table == "V") {
    std::vector<AttackReport> reports;
    fs::create_directories(tables_dir);
    std::ofstream acc(tables_dir + "/table_V_accuracy.csv");
    acc << "model,train_accuracy,test_accuracy\n";
    for (const auto& variant : cfg.evaluation.transfer_models) {
      ensure_classifier(cfg, variant);
      TrainedClassifier vm = require_classifier(cfg, variant);
      acc << variant << "," << vm.accuracy(cache.split.train) << ","
          << vm.accuracy(cache.split.test) << "\n";
      for (const auto& pair : {cfg.pairs.ii, cfg.pairs.iii}) {
        for (const std::string& method : {std::string("rp2"), std::string("taa")}) {
          AttackBlock blk = attack_block_for(cfg, method, pair);
          ensure_attack(cfg, blk, cache, model);
          LoadedPerturbation lp = load_perturbation_archive(blk.archive);
          auto test_src = class_subset(cache.split.test, lp.source_index, 0);
          TransferReport tr = transfer_model(vm, test_src, lp.pert, lp.map.get(),
                                             lp.target_index, variant,
                                             pair.source + "->" + pair.target);
          tr.report.method = method;
          tr.report.source_class = variant;
          tr.report.target_class = pair.source + "->" + pair.target;
          tr.report.seed = lp.seed;
          tr.report.config_hash = lp.config_hash;
          reports.push_back(tr.report);
        }
      }
    }
    emit_reports(reports, {}, cfg.evaluation.out_dir + "/table_V");
    write_comparison_csv(tables_dir + "/table_V.csv", reports, reference_table("V"), true);
    std::cout << "[reproduce V] model transfer over " << cfg.evaluation.transfer_models.size()
              << " variants\n";
    return;
  }

  if (table == "VI") {
    MapArchive maps = require_maps(cfg);
    auto reports = generalization_suite(model, cache, maps, cfg.pairs.generalization, cfg);
    emit_reports(reports, {}, cfg.evaluation.out_dir + "/table_VI");
    write_comparison_csv(tables_dir + "/table_VI.csv", reports, reference_table("VI"), true);
    std::cout << "[reproduce VI] " << reports.size() << " generalization pairs\n";
    return;
  }

  // fig3: epoch traces of taa vs rp2 on the headline pair
  AttackBlock taa_blk = attack_block_for(cfg, "taa", cfg.pairs.ii);
  AttackBlock rp2_blk = attack_block_for(cfg, "rp2", cfg.pairs.ii);
  ensure_attack(cfg, taa_blk, cache, model);
  ensure_attack(cfg, rp2_blk, cache, model);
  auto traces = traces_for({taa_blk.archive, rp2_blk.archive});
  emit_reports({}, traces, cfg.evaluation.out_dir + "/fig3");
  fs::create_directories(tables_dir);
  std::ofstream f(tables_dir + "/fig3.csv");
  f << "method,plateau_epoch,final_asr\n";
  for (const auto& [method, trace] : traces)
    f << method << "," << plateau_epoch(trace) << "," << (trace.empty() ? 0.0 : trace.back().asr)
      << "\n";
  std::cout << "[reproduce fig3] traces -> " << cfg.evaluation.out_dir << "/fig3\n";
}

}  // namespace signattack
