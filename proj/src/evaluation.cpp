#include "signattack/evaluation.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

#include "signattack/errors.hpp"
#include "signattack/plot.hpp"
#include "signattack/serialize.hpp"

namespace signattack {

using json = nlohmann::json;

double perturbation_loss(const Perturbation& pert, const Tensor* map_weights) {
  return effective_noise(pert, map_weights).l2_norm();
}

AttackReport asr_report(TrainedClassifier& model, const std::vector<LabeledImage>& test_images,
                        const Perturbation& pert, const Tensor* map_weights, int target) {
  if (test_images.empty()) throw DataError("asr needs a non-empty test list");
  for (const auto& img : test_images)
    if (img.label != test_images[0].label)
      throw DataError("asr test images must share one source class");

  AttackReport report;
  report.p_loss = perturbation_loss(pert, map_weights);
  report.p_loss_raw = pert.delta.l2_norm();

  for (const auto& img : test_images) {
    int clean = model.predict(img.pixels).label;
    Tensor adv = apply_perturbation(img.pixels, pert, map_weights);
    int after = model.predict(adv).label;
    report.per_image.push_back({img.id, clean, after});
    if (clean == img.label) {
      ++report.n_eligible;
      if (after == target) ++report.n_success;
    }
  }
  if (report.n_eligible == 0)
    throw DataError("no eligible images: the clean classifier mislabels every test image");
  report.asr = static_cast<double>(report.n_success) / report.n_eligible;
  return report;
}

namespace {

TransferReport transfer_common(TrainedClassifier& model, const std::vector<LabeledImage>& images,
                               const Perturbation& pert, const Tensor* map_weights, int target,
                               const std::string& source_descriptor,
                               const std::string& target_descriptor) {
  TransferReport tr;
  tr.source_descriptor = source_descriptor;
  tr.target_descriptor = target_descriptor;
  tr.perturbation_hash = hash_hex(tensor_hash(pert.delta));
  tr.report = asr_report(model, images, pert, map_weights, target);
  // evaluation must not touch the perturbation
  if (hash_hex(tensor_hash(pert.delta)) != tr.perturbation_hash)
    throw NumericError("perturbation mutated during transfer evaluation");
  return tr;
}

}  // namespace

TransferReport transfer_data(TrainedClassifier& model,
                             const std::vector<LabeledImage>& foreign_images,
                             const Perturbation& pert, const Tensor* map_weights, int target,
                             const std::string& source_descriptor,
                             const std::string& target_descriptor) {
  return transfer_common(model, foreign_images, pert, map_weights, target, source_descriptor,
                         target_descriptor);
}

TransferReport transfer_model(TrainedClassifier& variant_model,
                              const std::vector<LabeledImage>& test_images,
                              const Perturbation& pert, const Tensor* map_weights, int target,
                              const std::string& source_descriptor,
                              const std::string& target_descriptor) {
  return transfer_common(variant_model, test_images, pert, map_weights, target, source_descriptor,
                         target_descriptor);
}

json report_to_json(const AttackReport& report) {
  json per_image = json::array();
  for (const auto& p : report.per_image)
    per_image.push_back({{"id", p.id}, {"clean", p.clean_label}, {"adversarial", p.adversarial_label}});
  return json{{"method", report.method},
              {"source_class", report.source_class},
              {"target_class", report.target_class},
              {"asr", report.asr},
              {"p_loss", report.p_loss},
              {"p_loss_raw", report.p_loss_raw},
              {"n_eligible", report.n_eligible},
              {"n_success", report.n_success},
              {"per_image", per_image},
              {"config_hash", report.config_hash},
              {"seed", report.seed}};
}

AttackReport report_from_json(const json& j) {
  AttackReport report;
  report.method = j.at("method").get<std::string>();
  report.source_class = j.at("source_class").get<std::string>();
  report.target_class = j.at("target_class").get<std::string>();
  report.asr = j.at("asr").get<double>();
  report.p_loss = j.at("p_loss").get<double>();
  report.p_loss_raw = j.at("p_loss_raw").get<double>();
  report.n_eligible = j.at("n_eligible").get<int>();
  report.n_success = j.at("n_success").get<int>();
  for (const auto& p : j.at("per_image"))
    report.per_image.push_back({p.at("id").get<std::string>(), p.at("clean").get<int>(),
                                p.at("adversarial").get<int>()});
  report.config_hash = j.at("config_hash").get<std::string>();
  report.seed = j.at("seed").get<std::uint64_t>();
  return report;
}

int plateau_epoch(const EpochTrace& trace, double tolerance) {
  if (trace.empty()) return 0;
  double final_asr = trace.back().asr;
  for (const auto& pt : trace)
    if (pt.asr >= final_asr - tolerance) return pt.epoch;
  return trace.back().epoch;
}

void emit_reports(const std::vector<AttackReport>& reports,
                  const std::map<std::string, EpochTrace>& traces, const std::string& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir))
    throw IoError("cannot create report directory '" + out_dir + "'");

  json bundle;
  bundle["schema_version"] = 1;
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(report_to_json(r));
  bundle["reports"] = arr;
  {
    std::ofstream f(out_dir + "/reports.json");
    if (!f) throw IoError("cannot write reports.json under '" + out_dir + "'");
    f << bundle.dump(2) << "\n";
  }
  {
    std::ofstream f(out_dir + "/reports.csv");
    if (!f) throw IoError("cannot write reports.csv under '" + out_dir + "'");
    f << "method,source,target,asr,p_loss,n_eligible,n_success,seed,config_hash\n";
    for (const auto& r : reports)
      f << r.method << "," << r.source_class << "," << r.target_class << "," << r.asr << ","
        << r.p_loss << "," << r.n_eligible << "," << r.n_success << "," << r.seed << ","
        << r.config_hash << "\n";
  }

  if (!traces.empty()) {
    std::vector<PlotSeries> asr_series, loss_series, objective_series;
    for (const auto& [method, trace] : traces) {
      PlotSeries sa{method, {}, {}}, sl{method, {}, {}}, so{method, {}, {}};
      for (const auto& pt : trace) {
        sa.x.push_back(pt.epoch);
        sa.y.push_back(pt.asr);
        sl.x.push_back(pt.epoch);
        sl.y.push_back(pt.p_loss);
        so.x.push_back(pt.epoch);
        so.y.push_back(pt.objective);
      }
      asr_series.push_back(std::move(sa));
      loss_series.push_back(std::move(sl));
      objective_series.push_back(std::move(so));
    }
    line_chart(out_dir + "/epochs_asr.png", "Training-set ASR vs epochs", "epoch", "ASR",
               asr_series);
    line_chart(out_dir + "/epochs_ploss.png", "Perturbation loss vs epochs", "epoch", "P_loss",
               loss_series);
    line_chart(out_dir + "/epochs_objective.png", "Objective vs epochs", "epoch", "objective",
               objective_series);
  }

  if (!reports.empty()) {
    std::vector<std::string> groups;
    std::vector<std::vector<double>> asr_vals, loss_vals;
    for (const auto& r : reports) {
      groups.push_back(r.method);
      asr_vals.push_back({r.asr});
      loss_vals.push_back({r.p_loss});
    }
    bar_chart(out_dir + "/compare_asr.png", "ASR by method", groups, {"ASR"}, asr_vals);
    bar_chart(out_dir + "/compare_ploss.png", "P_loss by method", groups, {"P_loss"}, loss_vals);
  }
}

}  // namespace signattack
