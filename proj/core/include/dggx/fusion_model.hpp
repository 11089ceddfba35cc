#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "dggx/backbones.hpp"
#include "dggx/random.hpp"
#include "dggx/tensor.hpp"

namespace dggx {

/// Everything needed to rebuild a FusionModel's structure (not its weights).
struct ModelSpec {
  BackboneConfig backbone_a = BackboneConfig::vgg_like(1);
  BackboneConfig backbone_b = BackboneConfig::dense_like(2);
  std::size_t hidden = 64;
  std::vector<std::string> class_names;
  double dropout_rate = 0.3;
  std::uint64_t seed = 0;
};

/// Tensors produced by one fused forward pass.
struct FusedOutput {
  BackboneOutput branch_a;
  BackboneOutput branch_b;
  Tensor features;  // concat(GAP(a(x)), GAP(b(x))), [N, d_a + d_b]
  Tensor logits;    // pre-softmax class scores, [N, C]
  Tensor probs;     // softmax(logits)
};

struct Prediction {
  std::size_t class_index = 0;
  std::vector<double> probabilities;
};

enum class Branch { A, B };

/// Two backbones whose pooled features are concatenated and classified by
/// linear -> ReLU -> dropout -> linear -> softmax.
class FusionModel {
 public:
  FusionModel(ModelSpec spec, Backbone a, Backbone b, std::vector<Parameter> head);

  const ModelSpec& spec() const { return spec_; }
  const Backbone& backbone(Branch branch) const { return branch == Branch::A ? a_ : b_; }
  const std::vector<std::string>& class_names() const { return spec_.class_names; }
  std::size_t num_classes() const { return spec_.class_names.size(); }
  std::size_t fused_width() const { return a_.feature_width() + b_.feature_width(); }
  const std::vector<Parameter>& head() const { return head_; }

  /// Every parameter in a fixed order: branch a, branch b, head.
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(std::string_view name);

  void zero_grad();

 private:
  ModelSpec spec_;
  Backbone a_;
  Backbone b_;
  std::vector<Parameter> head_;  // fc1.weight, fc1.bias, fc2.weight, fc2.bias
};

FusionModel build_dggxnet(const ModelSpec& spec);

FusionModel build_dggxnet(const BackboneConfig& cfg_a, const BackboneConfig& cfg_b,
                          std::size_t hidden, std::vector<std::string> classes,
                          double dropout_rate, std::uint64_t seed);

/// x: [N, C, H, W] matching both backbones. `rng` drives dropout and is only
/// required when `training` is set.
FusedOutput forward_fused(const FusionModel& model, const Tensor& x, bool training,
                          Rng* rng = nullptr);

/// Index of the largest value; the first one on exact ties.
std::size_t argmax_first(std::span<const double> values);

/// Evaluation-mode prediction for one image, [C,H,W] or [1,C,H,W].
Prediction predict(const FusionModel& model, const Tensor& x);

/// Evaluation-mode predictions for a batch [N,C,H,W].
std::vector<Prediction> predict_batch(const FusionModel& model, const Tensor& x);

/// Sets `trainable` on every parameter whose name matches. Returns the
/// number of parameters matched; zero matches logs a warning.
std::size_t set_trainable_mask(FusionModel& model,
                               const std::function<bool(std::string_view)>& pattern,
                               bool trainable);

/// Convenience predicate: names starting with `prefix` ("" matches all).
std::function<bool(std::string_view)> name_prefix(std::string prefix);

/// Flat copy of every parameter's values, in parameters() order.
std::vector<std::vector<double>> snapshot_parameters(const FusionModel& model);
void restore_parameters(FusionModel& model, const std::vector<std::vector<double>>& snapshot);

}  // namespace dggx
