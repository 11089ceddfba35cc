#include "dggx/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "dggx/errors.hpp"
#include "dggx/ops.hpp"

namespace dggx {

AdamState::AdamState(AdamHyperparameters h, const std::vector<std::size_t>& parameter_sizes)
    : hyper(h) {
  for (auto n : parameter_sizes) {
    m.emplace_back(n, 0.0);
    v.emplace_back(n, 0.0);
  }
}

AdamState AdamState::for_model(const FusionModel& model, AdamHyperparameters hyper) {
  std::vector<std::size_t> sizes;
  for (const auto* p : model.parameters()) sizes.push_back(p->value.numel());
  return AdamState(hyper, sizes);
}

namespace {

void check_state(const AdamState& state, std::span<Parameter* const> params) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw StateError("optimizer state holds " + std::to_string(state.m.size()) +
                     " moment arrays for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto n = params[i]->value.numel();
    if (state.m[i].size() != n || state.v[i].size() != n) {
      throw StateError("optimizer state shape mismatch for " + params[i]->name);
    }
  }
}

}  // namespace

void adam_step(AdamState& state, std::span<Parameter* const> params,
               std::span<const std::vector<double>> grads) {
  check_state(state, params);
  if (grads.size() != params.size()) throw StateError("one gradient per parameter required");
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->trainable) continue;
    const auto& g = grads[i];
    if (g.size() != params[i]->value.numel()) {
      throw StateError("gradient shape mismatch for " + params[i]->name);
    }
    auto theta = params[i]->value.mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      theta[j] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

void adam_step(AdamState& state, std::span<Parameter* const> params) {
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (auto* p : params) grads.push_back(p->value.grad());
  adam_step(state, params, grads);
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

std::string TrainLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[160];
  for (std::size_t e = 0; e < epochs.size(); ++e) {
    const auto& r = epochs[e];
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g\n", e + 1, r.train_loss,
                  r.train_accuracy, r.val_loss, r.val_accuracy);
    out << buf;
  }
  return out.str();
}

namespace {

std::size_t count_correct(const Tensor& probs, const Dataset& data,
                          std::span<const std::size_t> indices) {
  const std::size_t c = probs.dim(1);
  const auto p = probs.data();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (argmax_first(p.subspan(r * c, c)) == data.samples[indices[r]].label) ++correct;
  }
  return correct;
}

}  // namespace

EvalResult evaluate(const FusionModel& model, const Dataset& data,
                    std::span<const std::size_t> indices, std::size_t batch_size) {
  if (indices.empty()) throw ValidationError("cannot evaluate an empty split");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  NoGradGuard no_grad;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
    const auto batch = indices.subspan(begin, std::min(batch_size, indices.size() - begin));
    const auto out = forward_fused(model, stack_images(data, batch), false);
    const double loss = softmax_cce_loss(out.logits, one_hot_labels(data, batch)).item();
    loss_sum += loss * static_cast<double>(batch.size());
    correct += count_correct(out.probs, data, batch);
  }
  const auto n = static_cast<double>(indices.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

EvalResult train_epoch(FusionModel& model, AdamState& state, const Dataset& data,
                       const TrainConfig& config, std::size_t epoch) {
  if (data.splits.train.empty()) throw ValidationError("training split is empty");
  Rng rng = make_rng(config.seed, (std::uint64_t{1} << 40) | epoch);
  std::vector<std::size_t> order = data.splits.train;
  shuffle(std::span<std::size_t>(order), rng);

  auto params = model.parameters();
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
    const auto batch =
        std::span<const std::size_t>(order).subspan(begin, std::min(config.batch_size, order.size() - begin));
    model.zero_grad();
    const auto out = forward_fused(model, stack_images(data, batch), true, &rng);
    const Tensor loss = softmax_cce_loss(out.logits, one_hot_labels(data, batch));
    backward(loss);
    adam_step(state, params);
    loss_sum += loss.item() * static_cast<double>(batch.size());
    correct += count_correct(out.probs, data, batch);
  }
  model.zero_grad();
  const auto n = static_cast<double>(order.size());
  return {loss_sum / n, static_cast<double>(correct) / n};
}

EarlyStopping::EarlyStopping(std::size_t patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ParameterError("patience must be >= 1");
}

bool EarlyStopping::observe(std::size_t epoch, double loss) {
  if (loss < best_loss_ || best_epoch_ == 0) {
    best_loss_ = loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

TrainLog fit_with_early_stopping(FusionModel& model, AdamState& state, const Dataset& data,
                                 const TrainConfig& config, TrainLog log, const FitHooks& hooks) {
  config.validate();
  if (data.splits.train.empty()) throw ValidationError("dataset has no training split");
  if (data.splits.validation.empty() && !hooks.validate) {
    throw ValidationError("dataset has no validation split");
  }

  // Replay the logged history so a resumed run keeps its patience count.
  // The weights in memory stand in for the best snapshot of a resumed run.
  EarlyStopping stopper(config.patience);
  for (std::size_t e = 0; e < log.epochs.size(); ++e) stopper.observe(e + 1, log.epochs[e].val_loss);
  std::vector<std::vector<double>> best = snapshot_parameters(model);
  if (!log.epochs.empty() && stopper.should_stop()) return log;

  for (std::size_t epoch = log.epochs.size() + 1; epoch <= config.epochs; ++epoch) {
    const EvalResult train = train_epoch(model, state, data, config, epoch);
    const EvalResult val = hooks.validate
                               ? hooks.validate(model, epoch)
                               : evaluate(model, data, data.splits.validation, config.batch_size);
    const EpochRecord record{train.loss, train.accuracy, val.loss, val.accuracy};
    log.epochs.push_back(record);
    if (stopper.observe(epoch, val.loss)) best = snapshot_parameters(model);
    log.best_epoch = stopper.best_epoch();
    if (hooks.on_epoch) hooks.on_epoch(model, epoch, record);
    if (stopper.should_stop()) break;
  }
  restore_parameters(model, best);
  return log;
}

}  // namespace dggx
