#include "dggx/fusion_model.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "dggx/errors.hpp"
#include "dggx/ops.hpp"

namespace dggx {

FusionModel::FusionModel(ModelSpec spec, Backbone a, Backbone b, std::vector<Parameter> head)
    : spec_(std::move(spec)), a_(std::move(a)), b_(std::move(b)), head_(std::move(head)) {}

std::vector<Parameter*> FusionModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : a_.parameters()) out.push_back(&p);
  for (auto& p : b_.parameters()) out.push_back(&p);
  for (auto& p : head_) out.push_back(&p);
  return out;
}

std::vector<const Parameter*> FusionModel::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : a_.parameters()) out.push_back(&p);
  for (const auto& p : b_.parameters()) out.push_back(&p);
  for (const auto& p : head_) out.push_back(&p);
  return out;
}

Parameter* FusionModel::find_parameter(std::string_view name) {
  for (auto* p : parameters()) {
    if (p->name == name) return p;
  }
  return nullptr;
}

void FusionModel::zero_grad() {
  for (auto* p : parameters()) p->value.zero_grad();
}

namespace {

Tensor he_linear(std::size_t out, std::size_t in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(in));
  std::vector<double> w(out * in);
  for (auto& v : w) v = stddev * standard_normal(rng);
  return Tensor({out, in}, std::move(w));
}

void prepare(Tensor& t) { t.set_requires_grad(true); }

}  // namespace

FusionModel build_dggxnet(const ModelSpec& spec) {
  const auto& ca = spec.backbone_a;
  const auto& cb = spec.backbone_b;
  if (ca.input_channels != cb.input_channels || ca.input_size != cb.input_size) {
    throw ConfigError("both backbones must share input channels and size");
  }
  if (spec.class_names.size() < 2) throw ConfigError("at least two classes are required");
  if (spec.hidden < 1) throw ConfigError("hidden width must be >= 1");
  if (!(spec.dropout_rate >= 0.0 && spec.dropout_rate < 1.0)) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }

  Backbone a = build_backbone(ca, "a.");
  Backbone b = build_backbone(cb, "b.");
  const std::size_t d = a.feature_width() + b.feature_width();
  const std::size_t classes = spec.class_names.size();

  Rng rng = make_rng(spec.seed, 0x4845414455ULL);
  std::vector<Parameter> head;
  head.emplace_back("head.fc1.weight", he_linear(spec.hidden, d, rng));
  head.emplace_back("head.fc1.bias", Tensor::zeros({spec.hidden}));
  head.emplace_back("head.fc2.weight", he_linear(classes, spec.hidden, rng));
  head.emplace_back("head.fc2.bias", Tensor::zeros({classes}));

  FusionModel model(spec, std::move(a), std::move(b), std::move(head));
  for (auto* p : model.parameters()) prepare(p->value);
  return model;
}

FusionModel build_dggxnet(const BackboneConfig& cfg_a, const BackboneConfig& cfg_b,
                          std::size_t hidden, std::vector<std::string> classes,
                          double dropout_rate, std::uint64_t seed) {
  ModelSpec spec;
  spec.backbone_a = cfg_a;
  spec.backbone_b = cfg_b;
  spec.hidden = hidden;
  spec.class_names = std::move(classes);
  spec.dropout_rate = dropout_rate;
  spec.seed = seed;
  return build_dggxnet(spec);
}

FusedOutput forward_fused(const FusionModel& model, const Tensor& x, bool training, Rng* rng) {
  if (training && model.spec().dropout_rate > 0.0 && rng == nullptr) {
    throw StateError("training-mode forward needs a random generator for dropout");
  }
  FusedOutput out;
  out.branch_a = forward_backbone(model.backbone(Branch::A), x);
  out.branch_b = forward_backbone(model.backbone(Branch::B), x);
  out.features = concat_channels(out.branch_a.gap_vector, out.branch_b.gap_vector);

  const auto& head = model.head();
  Tensor hidden = relu(linear(out.features, head[0].value, head[1].value));
  Rng unused;
  hidden = dropout(hidden, model.spec().dropout_rate, training, rng ? *rng : unused);
  out.logits = linear(hidden, head[2].value, head[3].value);
  out.probs = softmax(out.logits);
  return out;
}

std::size_t argmax_first(std::span<const double> values) {
  if (values.empty()) throw ValidationError("argmax of an empty row");
  return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<Prediction> predict_batch(const FusionModel& model, const Tensor& x) {
  NoGradGuard no_grad;
  const auto out = forward_fused(model, x, false);
  const std::size_t n = out.probs.dim(0), c = out.probs.dim(1);
  const auto p = out.probs.data();
  std::vector<Prediction> preds(n);
  for (std::size_t r = 0; r < n; ++r) {
    preds[r].probabilities.assign(p.begin() + r * c, p.begin() + (r + 1) * c);
    preds[r].class_index = argmax_first(preds[r].probabilities);
  }
  return preds;
}

Prediction predict(const FusionModel& model, const Tensor& x) {
  if (x.rank() == 3) {
    const auto& s = x.shape();
    return predict_batch(model, reshape(x.detach(), {1, s[0], s[1], s[2]})).front();
  }
  if (x.rank() != 4 || x.dim(0) != 1) throw ShapeError("predict expects a single image");
  return predict_batch(model, x).front();
}

std::size_t set_trainable_mask(FusionModel& model,
                               const std::function<bool(std::string_view)>& pattern,
                               bool trainable) {
  std::size_t matched = 0;
  for (auto* p : model.parameters()) {
    if (pattern(p->name)) {
      p->trainable = trainable;
      ++matched;
    }
  }
  if (matched == 0) std::cerr << "warning: trainable-mask pattern matched no parameters\n";
  return matched;
}

std::function<bool(std::string_view)> name_prefix(std::string prefix) {
  return [prefix = std::move(prefix)](std::string_view name) { return name.starts_with(prefix); };
}

std::vector<std::vector<double>> snapshot_parameters(const FusionModel& model) {
  std::vector<std::vector<double>> out;
  for (const auto* p : model.parameters()) {
    const auto d = p->value.data();
    out.emplace_back(d.begin(), d.end());
  }
  return out;
}

void restore_parameters(FusionModel& model, const std::vector<std::vector<double>>& snapshot) {
  auto params = model.parameters();
  if (params.size() != snapshot.size()) throw StateError("snapshot does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i]->value.mutable_data();
    if (dst.size() != snapshot[i].size()) throw StateError("snapshot does not match model");
    std::copy(snapshot[i].begin(), snapshot[i].end(), dst.begin());
  }
}

}  // namespace dggx
