#include "dggx/backbones.hpp"

#include <cmath>

#include "dggx/errors.hpp"
#include "dggx/ops.hpp"

namespace dggx {

Parameter::Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

Parameter::Parameter(const Parameter& other)
    : name(other.name), value(other.value.clone()), trainable(other.trainable) {}

Parameter& Parameter::operator=(const Parameter& other) {
  if (this != &other) {
    name = other.name;
    value = other.value.clone();
    trainable = other.trainable;
  }
  return *this;
}

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::VggLike ? "vgg-like" : "dense-like";
}

BackboneConfig BackboneConfig::vgg_like(std::uint64_t seed) {
  BackboneConfig c;
  c.kind = BackboneKind::VggLike;
  c.seed = seed;
  return c;
}

BackboneConfig BackboneConfig::dense_like(std::uint64_t seed) {
  BackboneConfig c;
  c.kind = BackboneKind::DenseLike;
  c.seed = seed;
  return c;
}

std::size_t BackboneConfig::downsampling_stages() const {
  if (kind == BackboneKind::VggLike) return stage_widths.size();
  return block_lengths.empty() ? 0 : block_lengths.size() - 1;
}

void BackboneConfig::validate() const {
  if (input_channels < 1) throw ConfigError("backbone: input_channels must be >= 1");
  if (input_size < 1) throw ConfigError("backbone: input_size must be >= 1");
  if (kind == BackboneKind::VggLike) {
    if (stage_widths.empty()) throw ConfigError("vgg-like backbone needs at least one stage");
    for (auto w : stage_widths) {
      if (w < 1) throw ConfigError("vgg-like stage widths must be >= 1");
    }
  } else {
    if (block_lengths.empty()) throw ConfigError("dense-like backbone needs at least one block");
    for (auto l : block_lengths) {
      if (l < 1) throw ConfigError("dense block lengths must be >= 1");
    }
    if (growth_rate < 1) throw ConfigError("growth_rate must be >= 1");
    if (stem_channels < 1) throw ConfigError("stem_channels must be >= 1");
    if (!(compression > 0.0 && compression <= 1.0)) {
      throw ConfigError("compression must lie in (0, 1]");
    }
  }
  const std::size_t stages = downsampling_stages();
  if (stages >= 63 || input_size % (std::size_t{1} << stages) != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) + " is not divisible by 2^" +
                      std::to_string(stages));
  }
}

Backbone::Backbone(BackboneConfig config, std::string name_prefix, std::vector<Layer> layers,
                   std::vector<Parameter> parameters, std::size_t feature_width,
                   std::size_t map_size, std::string final_conv_layer)
    : config_(std::move(config)),
      prefix_(std::move(name_prefix)),
      layers_(std::move(layers)),
      parameters_(std::move(parameters)),
      feature_width_(feature_width),
      map_size_(map_size),
      final_conv_layer_(std::move(final_conv_layer)) {}

ConvWeights he_conv(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng) {
  const std::size_t fan_in = in_channels * kernel * kernel;
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> w(out_channels * fan_in);
  for (auto& v : w) v = stddev * standard_normal(rng);
  return {Tensor({out_channels, in_channels, kernel, kernel}, std::move(w)),
          Tensor::zeros({out_channels})};
}

std::vector<ConvWeights> init_dense_block(std::size_t in_channels, std::size_t layers,
                                          std::size_t growth, Rng& rng) {
  if (layers < 1) throw ParameterError("dense_block: at least one layer required");
  if (growth < 1) throw ParameterError("dense_block: growth must be >= 1");
  std::vector<ConvWeights> out;
  out.reserve(layers);
  for (std::size_t l = 0; l < layers; ++l) out.push_back(he_conv(growth, in_channels + l * growth, 3, rng));
  return out;
}

Tensor dense_block(const Tensor& input, std::span<const ConvWeights> layers) {
  if (layers.empty()) throw ParameterError("dense_block: at least one layer required");
  Tensor features = input;
  for (const auto& layer : layers) {
    if (layer.weight.dim(0) < 1) throw ParameterError("dense_block: growth must be >= 1");
    Tensor grown = conv2d(relu(features), layer.weight, layer.bias, 1, 1);
    features = concat(features, grown, 1);
  }
  return features;
}

namespace {

class LayerBuilder {
 public:
  LayerBuilder(std::string prefix, Rng& rng) : prefix_(std::move(prefix)), rng_(rng) {}

  ConvLayer conv(const std::string& name, std::size_t out, std::size_t in, std::size_t kernel,
                 std::size_t padding) {
    auto w = he_conv(out, in, kernel, rng_);
    ConvLayer layer{params_.size(), params_.size() + 1, 1, padding};
    params_.emplace_back(prefix_ + name + ".weight", std::move(w.weight));
    params_.emplace_back(prefix_ + name + ".bias", std::move(w.bias));
    last_conv_ = prefix_ + name;
    return layer;
  }

  std::vector<Parameter> take() { return std::move(params_); }
  const std::string& last_conv() const { return last_conv_; }

 private:
  std::string prefix_;
  Rng& rng_;
  std::vector<Parameter> params_;
  std::string last_conv_;
};

}  // namespace

Backbone build_mini_vgg(const BackboneConfig& config, std::string name_prefix) {
  if (config.kind != BackboneKind::VggLike) throw ConfigError("build_mini_vgg needs a vgg-like config");
  config.validate();
  Rng rng = make_rng(config.seed);
  LayerBuilder builder(name_prefix, rng);
  std::vector<Layer> layers;
  std::size_t channels = config.input_channels;
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    const std::size_t width = config.stage_widths[s];
    layers.emplace_back(builder.conv(stage + ".conv1", width, channels, 3, 1));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(builder.conv(stage + ".conv2", width, width, 3, 1));
    layers.emplace_back(ReluLayer{});
    layers.emplace_back(MaxPoolLayer{2});
    channels = width;
  }
  const std::size_t map_size = config.input_size >> config.stage_widths.size();
  std::string last = builder.last_conv();
  return Backbone(config, std::move(name_prefix), std::move(layers), builder.take(), channels,
                  map_size, std::move(last));
}

Backbone build_mini_densenet(const BackboneConfig& config, std::string name_prefix) {
  if (config.kind != BackboneKind::DenseLike) {
    throw ConfigError("build_mini_densenet needs a dense-like config");
  }
  config.validate();
  Rng rng = make_rng(config.seed);
  LayerBuilder builder(name_prefix, rng);
  std::vector<Layer> layers;
  layers.emplace_back(builder.conv("stem", config.stem_channels, config.input_channels, 3, 1));
  std::size_t channels = config.stem_channels;
  for (std::size_t b = 0; b < config.block_lengths.size(); ++b) {
    const std::string block = "block" + std::to_string(b + 1);
    DenseBlockLayer dense;
    for (std::size_t l = 0; l < config.block_lengths[b]; ++l) {
      dense.convs.push_back(builder.conv(block + ".layer" + std::to_string(l + 1),
                                         config.growth_rate, channels, 3, 1));
      channels += config.growth_rate;
    }
    layers.emplace_back(std::move(dense));
    if (b + 1 < config.block_lengths.size()) {
      const auto compressed = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::floor(config.compression * static_cast<double>(channels))));
      layers.emplace_back(builder.conv("transition" + std::to_string(b + 1), compressed, channels, 1, 0));
      layers.emplace_back(AvgPoolLayer{2});
      channels = compressed;
    }
  }
  // Final activation before pooling, as after DenseNet's last block.
  layers.emplace_back(ReluLayer{});
  const std::size_t map_size = config.input_size >> config.downsampling_stages();
  std::string last = builder.last_conv();
  return Backbone(config, std::move(name_prefix), std::move(layers), builder.take(), channels,
                  map_size, std::move(last));
}

Backbone build_backbone(const BackboneConfig& config, std::string name_prefix) {
  return config.kind == BackboneKind::VggLike ? build_mini_vgg(config, std::move(name_prefix))
                                              : build_mini_densenet(config, std::move(name_prefix));
}

BackboneOutput forward_backbone(const Backbone& backbone, const Tensor& x) {
  const auto& cfg = backbone.config();
  if (x.rank() != 4 || x.dim(1) != cfg.input_channels || x.dim(2) != cfg.input_size ||
      x.dim(3) != cfg.input_size) {
    throw ShapeError("backbone expects [N," + std::to_string(cfg.input_channels) + "," +
                     std::to_string(cfg.input_size) + "," + std::to_string(cfg.input_size) +
                     "], got " + to_string(x.shape()));
  }
  const auto& params = backbone.parameters();
  auto run_conv = [&](const Tensor& in, const ConvLayer& c) {
    return conv2d(in, params[c.weight].value, params[c.bias].value, c.stride, c.padding);
  };
  Tensor h = x;
  for (const auto& layer : backbone.layers()) {
    std::visit(
        [&](const auto& l) {
          using L = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<L, ConvLayer>) {
            h = run_conv(h, l);
          } else if constexpr (std::is_same_v<L, ReluLayer>) {
            h = relu(h);
          } else if constexpr (std::is_same_v<L, MaxPoolLayer>) {
            h = max_pool2d(h, l.k, l.k);
          } else if constexpr (std::is_same_v<L, AvgPoolLayer>) {
            h = avg_pool2d(h, l.k, l.k);
          } else {
            std::vector<ConvWeights> weights;
            weights.reserve(l.convs.size());
            for (const auto& c : l.convs) weights.push_back({params[c.weight].value, params[c.bias].value});
            h = dense_block(h, weights);
          }
        },
        layer);
  }
  return {h, global_avg_pool(h)};
}

}  // namespace dggx
