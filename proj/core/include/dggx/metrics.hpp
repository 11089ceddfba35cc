#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dggx {

/// counts[i][j]: samples of true class i predicted as class j.
struct ConfusionMatrix {
  std::vector<std::vector<std::size_t>> counts;

  std::size_t num_classes() const { return counts.size(); }
  std::size_t total() const;
  std::size_t row_sum(std::size_t i) const;
  std::size_t column_sum(std::size_t j) const;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  ClassMetrics macro;  // unweighted class means; support is the total
  double accuracy = 0.0;
};

ConfusionMatrix confusion_matrix(std::span<const std::size_t> true_labels,
                                 std::span<const std::size_t> predicted, std::size_t classes);

/// One-vs-rest precision / recall / F1 per class (0/0 taken as 0), macro
/// averages and accuracy = trace / total.
ClassificationReport classification_report(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold;  // +inf for the initial (0,0) point
  double fpr;
  double tpr;
};

/// One-vs-rest ROC for class k. `scores` is row-major [N, C]. Thresholds
/// are the distinct class-k scores in descending order; tied scores move
/// the curve in a single step.
std::vector<RocPoint> roc_curve_ovr(std::span<const std::size_t> true_labels,
                                    std::span<const double> scores, std::size_t classes,
                                    std::size_t k);

/// Trapezoidal area under ROC points.
double auc(std::span<const RocPoint> points);

/// (#concordant + 0.5 #tied) / (#pos * #neg) over all positive/negative
/// pairs for class k.
double auc_pairs(std::span<const std::size_t> true_labels, std::span<const double> scores,
                 std::size_t classes, std::size_t k);

/// Plain-text table: one row per class, then macro average and accuracy.
std::string format_report(const ClassificationReport& report,
                          const std::vector<std::string>& class_names);

std::string format_confusion_matrix(const ConfusionMatrix& cm,
                                    const std::vector<std::string>& class_names);

/// `threshold,fpr,tpr` rows.
std::string format_roc_csv(std::span<const RocPoint> points);

/// Everything an evaluation run reports, serialized as one JSON object.
struct EvaluationRecord {
  std::string split;
  std::vector<std::string> class_names;
  ConfusionMatrix confusion;
  ClassificationReport report;
  std::vector<double> auc;  // per class, one-vs-rest
};

std::string to_json(const EvaluationRecord& record);
EvaluationRecord parse_evaluation_record(const std::string& json);

}  // namespace dggx
