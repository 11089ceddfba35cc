#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dggx/checkpoint.hpp"
#include "dggx/dataset.hpp"
#include "dggx/metrics.hpp"
#include "dggx/run_config.hpp"

namespace dggx::cli {

struct GenDataOptions {
  std::filesystem::path out;
  std::size_t per_class = 500;
  std::size_t size = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  std::filesystem::path data;
  std::optional<std::filesystem::path> config;
  std::filesystem::path out;  // checkpoint
  std::filesystem::path log;  // CSV
  std::optional<std::filesystem::path> summary;   // default: <out stem>.summary.json
  std::optional<std::filesystem::path> manifest;  // default: <out stem>.manifest.csv
  std::optional<std::filesystem::path> resume;
  bool quiet = false;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  Split split = Split::Test;
  std::filesystem::path report;  // directory
};

enum class ExplainMethod { GradCam, IntegratedGradients, Both };

struct ExplainOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path image;
  std::optional<std::size_t> target;  // empty means the predicted class
  ExplainMethod method = ExplainMethod::Both;
  std::string branch = "b";  // a, b or both; `--method both` always writes both
  std::size_t ig_steps = 50;
  double alpha = 0.5;
  std::filesystem::path out;
};

void gen_data(const GenDataOptions& options, std::ostream& out);
void train(const TrainOptions& options, std::ostream& out);
EvaluationRecord eval(const EvalOptions& options, std::ostream& out);
void explain(const ExplainOptions& options, std::ostream& out);

/// Balanced and split dataset exactly as `train` builds it.
Dataset prepare_dataset(const std::filesystem::path& root, std::size_t image_size, std::size_t channels,
                        std::uint64_t data_seed, const SplitFractions& fractions);

/// Confusion matrix, report and one-vs-rest AUCs of `model` on one split.
/// AUC is NaN for a class with no positives or no negatives in the split.
EvaluationRecord evaluate_split(const FusionModel& model, const Dataset& data, Split split,
                                std::size_t batch_size = 64);

/// Confusion matrix, classification report and AUC lines.
std::string format_evaluation(const EvaluationRecord& record);

/// Parses argv-style arguments (without the program name) and runs one
/// command. Returns 0 on success, 2 on any error, after printing the
/// message to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dggx::cli
