#include "txscam/eval.hpp"

namespace txscam::eval {

ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truth) {
  if (preds.size() != truth.size())
    throw LengthMismatch("predictions (" + std::to_string(preds.size()) + ") and labels (" +
                         std::to_string(truth.size()) + ") differ in length");
  if (preds.empty()) throw Empty("no predictions to evaluate");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] != 0 && preds[i] != 1) || (truth[i] != 0 && truth[i] != 1))
      throw InputError("labels must be 0 or 1");
    if (truth[i] == 1)
      (preds[i] == 1 ? cm.tp : cm.fn)++;
    else
      (preds[i] == 1 ? cm.fp : cm.tn)++;
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den, const char* flag, const char* cls, std::vector<std::string>& flags) {
  if (den == 0) {
    flags.push_back(std::string(cls) + flag);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

ClassMetrics per_class(std::uint64_t hit, std::uint64_t false_pos, std::uint64_t miss, const char* cls,
                       std::vector<std::string>& flags) {
  ClassMetrics c;
  c.precision = ratio(hit, hit + false_pos, "precision_undefined", cls, flags);
  c.recall = ratio(hit, hit + miss, "recall_undefined", cls, flags);
  if (c.precision + c.recall == 0.0)
    flags.push_back(std::string(cls) + "f1_undefined");
  else
    c.f1 = 2.0 * c.precision * c.recall / (c.precision + c.recall);
  c.support = hit + miss;
  return c;
}

}  // namespace

Metrics metrics(const ConfusionMatrix& cm) {
  const auto n = cm.total();
  if (n == 0) throw Empty("empty confusion matrix");
  Metrics m;
  m.malicious = per_class(cm.tp, cm.fp, cm.fn, "", m.flags);
  std::vector<std::string> neg_flags;
  m.normal = per_class(cm.tn, cm.fn, cm.fp, "normal_", neg_flags);
  m.flags.insert(m.flags.end(), neg_flags.begin(), neg_flags.end());
  m.precision = m.malicious.precision;
  m.recall = m.malicious.recall;
  m.f1 = m.malicious.f1;
  m.accuracy = static_cast<double>(cm.tp + cm.tn) / static_cast<double>(n);
  const double N = static_cast<double>(n);
  m.weighted_f1 = static_cast<double>(m.malicious.support) / N * m.malicious.f1 +
                  static_cast<double>(m.normal.support) / N * m.normal.f1;
  m.macro_f1 = 0.5 * (m.malicious.f1 + m.normal.f1);
  return m;
}

double weighted_f1(std::span<const int> preds, std::span<const int> truth) {
  return metrics(confusion(preds, truth)).weighted_f1;
}

nlohmann::ordered_json report_json(const ConfusionMatrix& cm, const Metrics& m) {
  auto cls = [](const ClassMetrics& c) {
    nlohmann::ordered_json j;
    j["precision"] = c.precision;
    j["recall"] = c.recall;
    j["f1"] = c.f1;
    j["support"] = c.support;
    return j;
  };
  nlohmann::ordered_json j;
  j["counts"] = {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
  nlohmann::ordered_json mm;
  mm["accuracy"] = m.accuracy;
  mm["precision"] = m.precision;
  mm["recall"] = m.recall;
  mm["f1"] = m.f1;
  mm["weighted_f1"] = m.weighted_f1;
  mm["macro_f1"] = m.macro_f1;
  j["metrics"] = mm;
  j["per_class"] = {{"malicious", cls(m.malicious)}, {"normal", cls(m.normal)}};
  j["flags"] = m.flags;
  return j;
}

}  // namespace txscam::eval
