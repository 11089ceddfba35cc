#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dggx/dataset.hpp"
#include "dggx/fusion_model.hpp"

namespace dggx {

struct AdamHyperparameters {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment accumulators, one pair per model parameter.
struct AdamState {
  AdamHyperparameters hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  AdamState() = default;
  /// Zero moments shaped like each of `parameter_sizes`.
  AdamState(AdamHyperparameters hyper, const std::vector<std::size_t>& parameter_sizes);
  static AdamState for_model(const FusionModel& model, AdamHyperparameters hyper = {});
};

/// One bias-corrected Adam update. Increments `state.step`, then for every
/// parameter with trainable set: m <- b1 m + (1-b1) g, v <- b2 v + (1-b2) g^2,
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps). Frozen parameters are
/// left untouched, moments included.
void adam_step(AdamState& state, std::span<Parameter* const> params);

/// Variant taking explicit gradients (one per parameter), as used by tests.
void adam_step(AdamState& state, std::span<Parameter* const> params,
               std::span<const std::vector<double>> grads);

struct TrainConfig {
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamHyperparameters adam;
  std::size_t patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;  // 1-based; 0 when nothing has been logged

  /// `epoch,train_loss,train_acc,val_loss,val_acc` with one row per epoch.
  std::string to_csv() const;
};

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Mean cross-entropy and accuracy with dropout disabled.
EvalResult evaluate(const FusionModel& model, const Dataset& data,
                    std::span<const std::size_t> indices, std::size_t batch_size);

/// Runs one epoch (1-based `epoch`) of shuffled minibatch training. The
/// shuffle and dropout draws come from a generator seeded by (seed, epoch)
/// alone, so an epoch's result depends only on the model and optimizer state
/// it starts from.
EvalResult train_epoch(FusionModel& model, AdamState& state, const Dataset& data,
                       const TrainConfig& config, std::size_t epoch);

/// Tracks the best validation loss (strict decrease) and the epochs since.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  /// Returns true when `loss` is a new best.
  bool observe(std::size_t epoch, double loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_loss_;
  std::size_t since_best_ = 0;
};

struct FitHooks {
  /// Replaces the validation pass when set (the scripted-loss tests use it).
  std::function<EvalResult(const FusionModel&, std::size_t epoch)> validate;
  /// Called after each epoch is logged.
  std::function<void(const FusionModel&, std::size_t epoch, const EpochRecord&)> on_epoch;
};

/// Adam training with early stopping on validation loss. Stops once the loss
/// has not strictly improved for `patience` consecutive epochs or the epoch
/// budget is spent, then restores the best epoch's weights. Training resumes
/// from `log` when it already holds epochs.
TrainLog fit_with_early_stopping(FusionModel& model, AdamState& state, const Dataset& data,
                                 const TrainConfig& config, TrainLog log = {},
                                 const FitHooks& hooks = {});

}  // namespace dggx
