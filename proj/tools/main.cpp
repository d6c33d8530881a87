#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <iostream>
#include <string>
#include <vector>

#include "signattack/errors.hpp"
#include "signattack/experiment.hpp"

using namespace signattack;

namespace {

struct CommonOpts {
  std::string config;
  std::string scale;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("-c,--config", opts.config, "experiment config file (JSON)");
  cmd->add_option("--scale", opts.scale, "preset scale when no config is given")
      ->check(CLI::IsMember({"desk", "full"}));
  cmd->add_option("--set", opts.sets, "override a config field, e.g. --set attack.epochs=50");
}

ExperimentConfig resolve(const CommonOpts& opts) {
  return load_experiment_config(opts.config, opts.scale, opts.sets);
}

int fail(const Error& e) {
  nlohmann::json record{{"error", {{"kind", e.kind()}, {"message", e.what()}}}};
  if (const auto* missing = dynamic_cast<const MissingArtifactError*>(&e))
    record["error"]["producer"] = missing->producer();
  std::cerr << record.dump() << "\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"universal attention-guided adversarial perturbations for sign classifiers"};
  app.require_subcommand(1);

  CommonOpts ingest_o, cls_o, att_o, atk_o, eval_o, repro_o;
  std::string repro_table;
  std::string cls_variant;

  std::string fixture_root = "out/fixture";
  FixtureSpec fixture_spec;
  int fixture_variant = 0;

  auto* fix = app.add_subcommand("make-fixture", "write a synthetic folder_per_class sign tree");
  fix->add_option("--out", fixture_root, "output directory")->required();
  fix->add_option("--classes", fixture_spec.classes, "number of classes (max 5)");
  fix->add_option("--per-class", fixture_spec.per_class, "images per class");
  fix->add_option("--side", fixture_spec.side, "image side in pixels");
  fix->add_option("--seed", fixture_spec.seed, "generator seed");
  fix->add_option("--variant", fixture_variant, "0 = default domain, 1 = shifted domain");

  auto* ingest = app.add_subcommand("ingest", "load, filter, resize and split the dataset");
  add_common(ingest, ingest_o);

  auto* traincls = app.add_subcommand("train-classifier", "train the victim classifier");
  add_common(traincls, cls_o);
  traincls->add_option("--variant", cls_variant, "override the architecture variant")
      ->check(CLI::IsMember({"cnn", "cnn2", "cnn3", "cnn4"}));

  auto* trainatt =
      app.add_subcommand("train-attention", "train the attention network and export class maps");
  add_common(trainatt, att_o);

  auto* attack = app.add_subcommand("attack", "optimize a perturbation for the configured pair");
  add_common(attack, atk_o);

  auto* evaluate = app.add_subcommand("evaluate", "score archived perturbations on the test split");
  add_common(evaluate, eval_o);

  auto* repro = app.add_subcommand("reproduce", "chain every stage for one results table");
  add_common(repro, repro_o);
  repro->add_option("--table", repro_table, "II, III, IV, V, VI or fig3")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fix->parsed()) {
      cmd_make_fixture(fixture_root, fixture_spec, fixture_variant);
    } else if (ingest->parsed()) {
      cmd_ingest(resolve(ingest_o));
    } else if (traincls->parsed()) {
      cmd_train_classifier(resolve(cls_o), cls_variant);
    } else if (trainatt->parsed()) {
      cmd_train_attention(resolve(att_o));
    } else if (attack->parsed()) {
      cmd_attack(resolve(atk_o));
    } else if (evaluate->parsed()) {
      cmd_evaluate(resolve(eval_o));
    } else if (repro->parsed()) {
      cmd_reproduce(resolve(repro_o), repro_table);
    }
  } catch (const Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "internal"}, {"message", e.what()}}}}.dump()
              << "\n";
    return 1;
  }
  return 0;
}
