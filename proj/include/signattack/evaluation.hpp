#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "signattack/attack.hpp"
#include "signattack/classifier.hpp"
#include "signattack/data.hpp"

namespace signattack {

struct PerImageOutcome {
  std::string id;
  int clean_label;
  int adversarial_label;
};

struct AttackReport {
  std::string method;
  std::string source_class;
  std::string target_class;
  double asr = 0.0;
  double p_loss = 0.0;      // L2 of the effective (actually added) noise
  double p_loss_raw = 0.0;  // L2 of the unmasked delta
  int n_eligible = 0;       // images the clean model classifies correctly
  int n_success = 0;
  std::vector<PerImageOutcome> per_image;
  std::string config_hash;
  std::uint64_t seed = 0;
};

// Success counting over one source class: denominator = clean prediction
// equals the true label, numerator = those also driven to `target` after
// the perturbation is applied.
AttackReport asr_report(TrainedClassifier& model, const std::vector<LabeledImage>& test_images,
                        const Perturbation& pert, const Tensor* map_weights, int target);

// Euclidean norm of the effective added noise.
double perturbation_loss(const Perturbation& pert, const Tensor* map_weights);

struct TransferReport {
  std::string source_descriptor;
  std::string target_descriptor;
  std::string perturbation_hash;
  AttackReport report;
};

// Same perturbation, foreign test images (e.g. another dataset mapped onto
// the training vocabulary).
TransferReport transfer_data(TrainedClassifier& model,
                             const std::vector<LabeledImage>& foreign_images,
                             const Perturbation& pert, const Tensor* map_weights, int target,
                             const std::string& source_descriptor,
                             const std::string& target_descriptor);

// Same perturbation, a different victim architecture.
TransferReport transfer_model(TrainedClassifier& variant_model,
                              const std::vector<LabeledImage>& test_images,
                              const Perturbation& pert, const Tensor* map_weights, int target,
                              const std::string& source_descriptor,
                              const std::string& target_descriptor);

nlohmann::json report_to_json(const AttackReport& report);
AttackReport report_from_json(const nlohmann::json& j);

// Writes reports.json, reports.csv and, when traces are given, Fig-3-style
// ASR / P_loss epoch plots plus a method comparison chart.
void emit_reports(const std::vector<AttackReport>& reports,
                  const std::map<std::string, EpochTrace>& traces, const std::string& out_dir);

// First epoch whose ASR comes within `tolerance` of the final ASR.
int plateau_epoch(const EpochTrace& trace, double tolerance = 0.02);

}  // namespace signattack
