#include "dggx/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "dggx/errors.hpp"

namespace dggx {

std::size_t ConfusionMatrix::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) t = std::accumulate(row.begin(), row.end(), t);
  return t;
}

std::size_t ConfusionMatrix::row_sum(std::size_t i) const {
  return std::accumulate(counts.at(i).begin(), counts.at(i).end(), std::size_t{0});
}

std::size_t ConfusionMatrix::column_sum(std::size_t j) const {
  std::size_t t = 0;
  for (const auto& row : counts) t += row.at(j);
  return t;
}

ConfusionMatrix confusion_matrix(std::span<const std::size_t> true_labels,
                                 std::span<const std::size_t> predicted, std::size_t classes) {
  if (true_labels.size() != predicted.size()) {
    throw ValidationError("label and prediction lists differ in length");
  }
  if (classes < 1) throw ValidationError("confusion matrix needs at least one class");
  ConfusionMatrix cm{std::vector<std::vector<std::size_t>>(classes, std::vector<std::size_t>(classes, 0))};
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (true_labels[i] >= classes || predicted[i] >= classes) {
      throw ValidationError("label out of range at position " + std::to_string(i));
    }
    ++cm.counts[true_labels[i]][predicted[i]];
  }
  return cm;
}

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

void check_scores(std::span<const std::size_t> labels, std::span<const double> scores,
                  std::size_t classes, std::size_t k) {
  if (classes < 1 || k >= classes) throw ValidationError("class index out of range");
  if (scores.size() != labels.size() * classes) {
    throw ValidationError("score rows must have one entry per class");
  }
}

}  // namespace

ClassificationReport classification_report(const ConfusionMatrix& cm) {
  const std::size_t c = cm.num_classes();
  const std::size_t total = cm.total();
  if (c == 0 || total == 0) throw ValidationError("classification report of an empty matrix");
  ClassificationReport rep;
  rep.per_class.resize(c);
  std::size_t trace = 0;
  for (std::size_t k = 0; k < c; ++k) {
    const std::size_t tp = cm.counts[k][k];
    trace += tp;
    auto& m = rep.per_class[k];
    m.precision = ratio(tp, cm.column_sum(k));
    m.recall = ratio(tp, cm.row_sum(k));
    m.f1 = harmonic(m.precision, m.recall);
    m.support = cm.row_sum(k);
    rep.macro.precision += m.precision;
    rep.macro.recall += m.recall;
    rep.macro.f1 += m.f1;
  }
  const auto n = static_cast<double>(c);
  rep.macro.precision /= n;
  rep.macro.recall /= n;
  rep.macro.f1 /= n;
  rep.macro.support = total;
  rep.accuracy = ratio(trace, total);
  return rep;
}

std::vector<RocPoint> roc_curve_ovr(std::span<const std::size_t> true_labels,
                                    std::span<const double> scores, std::size_t classes,
                                    std::size_t k) {
  check_scores(true_labels, scores, classes, k);
  const std::size_t n = true_labels.size();
  std::size_t positives = 0;
  for (auto l : true_labels) positives += (l == k);
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw ValidationError("ROC for class " + std::to_string(k) + " needs both positives and negatives");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a * classes + k] > scores[b * classes + k];
  });

  std::vector<RocPoint> points{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < n;) {
    const double threshold = scores[order[i] * classes + k];
    while (i < n && scores[order[i] * classes + k] == threshold) {
      if (true_labels[order[i]] == k) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    points.push_back({threshold, ratio(fp, negatives), ratio(tp, positives)});
  }
  return points;
}

double auc(std::span<const RocPoint> points) {
  double area = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    area += (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr) * 0.5;
  }
  return area;
}

double auc_pairs(std::span<const std::size_t> true_labels, std::span<const double> scores,
                 std::size_t classes, std::size_t k) {
  check_scores(true_labels, scores, classes, k);
  std::vector<double> pos, neg;
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    (true_labels[i] == k ? pos : neg).push_back(scores[i * classes + k]);
  }
  if (pos.empty() || neg.empty()) {
    throw ValidationError("AUC for class " + std::to_string(k) + " needs both positives and negatives");
  }
  double concordant = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q) {
        concordant += 1.0;
      } else if (p == q) {
        concordant += 0.5;
      }
    }
  }
  return concordant / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

std::string format_report(const ClassificationReport& report,
                          const std::vector<std::string>& class_names) {
  std::size_t width = 9;
  for (const auto& n : class_names) width = std::max(width, n.size());
  std::ostringstream out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-*s  %9s  %9s  %9s  %7s\n", static_cast<int>(width), "Class",
                "Precision", "Recall", "F1-score", "Support");
  out << buf;
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    std::snprintf(buf, sizeof buf, "%-*s  %9.4f  %9.4f  %9.4f  %7zu\n", static_cast<int>(width),
                  name.c_str(), m.precision, m.recall, m.f1, m.support);
    out << buf;
  };
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    row(k < class_names.size() ? class_names[k] : "class" + std::to_string(k), report.per_class[k]);
  }
  row("Macro Avg", report.macro);
  std::snprintf(buf, sizeof buf, "%-*s  %9.2f%%\n", static_cast<int>(width), "Accuracy",
                100.0 * report.accuracy);
  out << buf;
  return out.str();
}

std::string format_confusion_matrix(const ConfusionMatrix& cm,
                                    const std::vector<std::string>& class_names) {
  std::size_t width = 10;
  for (const auto& n : class_names) width = std::max(width, n.size());
  std::ostringstream out;
  out << std::string(width, ' ');
  for (std::size_t j = 0; j < cm.num_classes(); ++j) {
    const std::string& n = class_names.at(j);
    out << "  " << std::string(width - n.size(), ' ') << n;
  }
  out << "\n";
  for (std::size_t i = 0; i < cm.num_classes(); ++i) {
    const std::string& n = class_names.at(i);
    out << n << std::string(width - n.size(), ' ');
    for (auto v : cm.counts[i]) {
      const std::string s = std::to_string(v);
      out << "  " << std::string(width - s.size(), ' ') << s;
    }
    out << "\n";
  }
  return out.str();
}

std::string format_roc_csv(std::span<const RocPoint> points) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  char buf[96];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", p.threshold, p.fpr, p.tpr);
    out << buf;
  }
  return out.str();
}

namespace {

nlohmann::json metrics_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

ClassMetrics metrics_from(const nlohmann::json& j) {
  return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>(),
          j.at("support").get<std::size_t>()};
}

}  // namespace

std::string to_json(const EvaluationRecord& record) {
  nlohmann::ordered_json j;
  j["split"] = record.split;
  j["class_names"] = record.class_names;
  j["confusion_matrix"] = record.confusion.counts;
  nlohmann::ordered_json classes = nlohmann::ordered_json::object();
  for (std::size_t k = 0; k < record.report.per_class.size(); ++k) {
    auto entry = metrics_json(record.report.per_class[k]);
    if (k < record.auc.size()) entry["auc"] = record.auc[k];
    classes[record.class_names.at(k)] = entry;
  }
  j["per_class"] = classes;
  j["macro"] = metrics_json(record.report.macro);
  j["accuracy"] = record.report.accuracy;
  return j.dump(2) + "\n";
}

EvaluationRecord parse_evaluation_record(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EvaluationRecord r;
    r.split = j.at("split").get<std::string>();
    r.class_names = j.at("class_names").get<std::vector<std::string>>();
    r.confusion.counts = j.at("confusion_matrix").get<std::vector<std::vector<std::size_t>>>();
    for (const auto& name : r.class_names) {
      const auto& entry = j.at("per_class").at(name);
      r.report.per_class.push_back(metrics_from(entry));
      if (entry.contains("auc")) {
        // An undefined AUC (no positives or no negatives) is stored as null.
        const auto& a = entry.at("auc");
        r.auc.push_back(a.is_null() ? std::numeric_limits<double>::quiet_NaN() : a.get<double>());
      }
    }
    r.report.macro = metrics_from(j.at("macro"));
    r.report.accuracy = j.at("accuracy").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("evaluation record: ") + e.what());
  }
}

}  // namespace dggx
