#include "ecgreid/evaluate.hpp"

#include <algorithm>
#include <map>
#include <memory>

#include <json.hpp>

#include "ecgreid/error.hpp"
#include "ecgreid/text.hpp"

namespace ecgreid {

using nlohmann::json;

ReferenceValues reference_values(Task task) {
  switch (task) {
    case Task::Gender: return {0.755, 0.766, 0.760};
    case Task::AgeGroup: return {0.671, 0.623, 0.633};
    case Task::ParticipantId: return {0.819, 0.817, 0.810};
  }
  return {};
}

EvalReport evaluate_predictions(Task task, ModelKind kind, std::vector<std::string> class_labels,
                                std::span<const int> truth, std::span<const int> predicted,
                                const std::vector<std::vector<double>>& proba) {
  if (truth.empty()) throw SchemaError("empty test set");
  if (proba.size() != truth.size()) throw SchemaError("probability rows do not match the test set");
  const std::size_t k = class_labels.size();

  EvalReport r;
  r.task = task;
  r.kind = kind;
  r.class_labels = std::move(class_labels);
  r.confusion = confusion_matrix(truth, predicted, k);
  r.n_test = static_cast<long long>(truth.size());
  r.per_class = per_class_metrics(r.confusion);
  const auto macro = macro_metrics(r.confusion);
  r.accuracy = macro.accuracy;
  r.precision_macro = macro.precision;
  r.recall_macro = macro.recall;
  r.f1_macro = macro.f1;
  for (std::size_t c = 0; c < k; ++c)
    if (r.per_class[c].support == 0)
      r.warnings.push_back("class " + r.class_labels[c] +
                           " absent from the test set; excluded from macro averages");

  auto auc_for = [&](std::size_t c) {
    std::vector<double> score(truth.size());
    auto positive = std::make_unique<bool[]>(truth.size());  // vector<bool> has no span
    for (std::size_t i = 0; i < truth.size(); ++i) {
      score[i] = proba[i].at(c);
      positive[i] = truth[i] == static_cast<int>(c);
    }
    return roc_auc(score, std::span<const bool>(positive.get(), truth.size()));
  };

  if (k == 2) {
    r.auc_method = "binary, positive class " + r.class_labels[1];
    r.roc_auc = auc_for(1);
    if (!r.roc_auc) r.warnings.push_back("ROC AUC undefined: test set holds a single class");
  } else {
    r.auc_method = "one-vs-rest macro";
    double sum = 0.0;
    int used = 0;
    for (std::size_t c = 0; c < k; ++c)
      if (const auto a = auc_for(c)) {
        sum += *a;
        ++used;
      }
    if (used > 0)
      r.roc_auc = sum / used;
    else
      r.warnings.push_back("ROC AUC undefined: no class has both positives and negatives");
  }
  return r;
}

EvalReport evaluate(const TrainedModel& model, const FeatureTable& table, const SplitPlan& plan) {
  check_features(model, table.names);
  if (plan.test.empty()) throw SchemaError("split plan has an empty test side");

  std::map<std::string, int> index;
  for (std::size_t c = 0; c < model.class_labels.size(); ++c)
    index[model.class_labels[c]] = static_cast<int>(c);

  std::vector<int> truth, pred;
  std::vector<std::vector<double>> proba;
  for (const auto r : plan.test) {
    const auto& row = table.rows.at(r);
    const auto label = task_label(row, plan.task);
    const auto it = index.find(label);
    if (it == index.end())
      throw SchemaError("test label \"" + label + "\" is not among the model's classes");
    truth.push_back(it->second);
    auto p = predict_proba(model, row.values);
    pred.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    proba.push_back(std::move(p));
  }
  auto report = evaluate_predictions(plan.task, model.kind, model.class_labels, truth, pred, proba);
  report.warnings.insert(report.warnings.begin(), plan.warnings.begin(), plan.warnings.end());
  return report;
}

void reference_compare(EvalReport& report) {
  ReferenceComparison c;
  c.reference = reference_values(report.task);
  c.delta_accuracy = report.accuracy - c.reference.accuracy;
  c.delta_precision = report.precision_macro - c.reference.precision;
  c.delta_f1 = report.f1_macro - c.reference.f1;
  report.reference = c;
}

std::string format_report_json(const EvalReport& r) {
  json per_class = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c)
    per_class.push_back({{"class", r.class_labels[c]},
                         {"precision", r.per_class[c].precision},
                         {"recall", r.per_class[c].recall},
                         {"f1", r.per_class[c].f1},
                         {"support", r.per_class[c].support}});
  json j = {{"task", std::string(to_string(r.task))},
            {"model", std::string(to_string(r.kind))},
            {"class_labels", r.class_labels},
            {"n_test", r.n_test},
            {"accuracy", r.accuracy},
            {"precision_macro", r.precision_macro},
            {"recall_macro", r.recall_macro},
            {"f1_macro", r.f1_macro},
            {"roc_auc", r.roc_auc ? json(*r.roc_auc) : json(nullptr)},
            {"auc_method", r.auc_method},
            {"confusion_matrix", r.confusion},
            {"per_class", per_class},
            {"warnings", r.warnings}};
  if (r.reference) {
    j["reference"] = {{"accuracy", r.reference->reference.accuracy},
                      {"precision", r.reference->reference.precision},
                      {"f1", r.reference->reference.f1},
                      {"delta_accuracy", r.reference->delta_accuracy},
                      {"delta_precision", r.reference->delta_precision},
                      {"delta_f1", r.reference->delta_f1}};
  }
  return j.dump(2) + "\n";
}

EvalReport parse_report_json(std::string_view json_text, const std::string& source) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(source, 1, e.what());
  }
  try {
    EvalReport r;
    r.task = parse_task(j.at("task").get<std::string>());
    r.kind = parse_model_kind(j.at("model").get<std::string>());
    r.class_labels = j.at("class_labels").get<std::vector<std::string>>();
    r.n_test = j.at("n_test").get<long long>();
    r.accuracy = j.at("accuracy").get<double>();
    r.precision_macro = j.at("precision_macro").get<double>();
    r.recall_macro = j.at("recall_macro").get<double>();
    r.f1_macro = j.at("f1_macro").get<double>();
    if (!j.at("roc_auc").is_null()) r.roc_auc = j["roc_auc"].get<double>();
    r.auc_method = j.at("auc_method").get<std::string>();
    r.confusion = j.at("confusion_matrix").get<ConfusionMatrix>();
    for (const auto& pc : j.at("per_class"))
      r.per_class.push_back({pc.at("precision").get<double>(), pc.at("recall").get<double>(),
                             pc.at("f1").get<double>(), pc.at("support").get<long long>()});
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    if (j.contains("reference")) {
      const auto& ref = j["reference"];
      ReferenceComparison c;
      c.reference = {ref.at("accuracy").get<double>(), ref.at("precision").get<double>(),
                     ref.at("f1").get<double>()};
      c.delta_accuracy = ref.at("delta_accuracy").get<double>();
      c.delta_precision = ref.at("delta_precision").get<double>();
      c.delta_f1 = ref.at("delta_f1").get<double>();
      r.reference = c;
    }
    if (r.per_class.size() != r.class_labels.size() || r.confusion.size() != r.class_labels.size())
      throw SchemaError(source + ": class count mismatch");
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(source + ": " + e.what());
  }
}

std::string report_csv_header() {
  return "task,model,n_test,accuracy,precision_macro,recall_macro,f1_macro,roc_auc,"
         "ref_accuracy,ref_precision,ref_f1,delta_accuracy,delta_precision,delta_f1\n";
}

std::string format_report_csv_row(const EvalReport& r) {
  using text::format_double;
  std::string s = std::string(to_string(r.task)) + "," + std::string(to_string(r.kind)) + "," +
                  std::to_string(r.n_test) + "," + format_double(r.accuracy) + "," +
                  format_double(r.precision_macro) + "," + format_double(r.recall_macro) + "," +
                  format_double(r.f1_macro) + "," + (r.roc_auc ? format_double(*r.roc_auc) : "");
  if (r.reference) {
    const auto& c = *r.reference;
    for (const double v : {c.reference.accuracy, c.reference.precision, c.reference.f1,
                           c.delta_accuracy, c.delta_precision, c.delta_f1})
      s += "," + format_double(v);
  } else {
    s += ",,,,,,";
  }
  return s + "\n";
}

}  // namespace ecgreid
