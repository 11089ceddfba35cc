#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dggx/random.hpp"
#include "dggx/tensor.hpp"

namespace dggx {

/// A named, trainable model tensor. Copying a Parameter deep-copies its
/// values, so copying a model yields an independent replica.
struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;

  Parameter(std::string name, Tensor value);
  Parameter(const Parameter& other);
  Parameter& operator=(const Parameter& other);
  Parameter(Parameter&&) noexcept = default;
  Parameter& operator=(Parameter&&) noexcept = default;
  ~Parameter() = default;
};

enum class BackboneKind { VggLike, DenseLike };

std::string_view to_string(BackboneKind kind);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::VggLike;
  std::size_t input_channels = 1;
  std::size_t input_size = 32;
  // vgg-like: output channels of each [conv-relu]x2 + max-pool stage.
  std::vector<std::size_t> stage_widths{8, 16, 32};
  // dense-like
  std::size_t stem_channels = 8;
  std::size_t growth_rate = 6;
  std::vector<std::size_t> block_lengths{2, 2};
  double compression = 0.5;
  std::uint64_t seed = 0;

  static BackboneConfig vgg_like(std::uint64_t seed = 0);
  static BackboneConfig dense_like(std::uint64_t seed = 0);

  /// Number of 2x downsampling steps the architecture applies.
  std::size_t downsampling_stages() const;
  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

struct ConvLayer {
  std::size_t weight = 0;  // indices into Backbone::parameters()
  std::size_t bias = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
};
struct ReluLayer {};
struct MaxPoolLayer {
  std::size_t k = 2;
};
struct AvgPoolLayer {
  std::size_t k = 2;
};
struct DenseBlockLayer {
  std::vector<ConvLayer> convs;
};

using Layer = std::variant<ConvLayer, ReluLayer, MaxPoolLayer, AvgPoolLayer, DenseBlockLayer>;

struct BackboneOutput {
  Tensor final_maps;  // last conv activation, the Grad-CAM target
  Tensor gap_vector;  // global_avg_pool(final_maps)
};

class Backbone {
 public:
  Backbone(BackboneConfig config, std::string name_prefix, std::vector<Layer> layers,
           std::vector<Parameter> parameters, std::size_t feature_width, std::size_t map_size,
           std::string final_conv_layer);

  const BackboneConfig& config() const { return config_; }
  const std::string& name_prefix() const { return prefix_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Parameter>& parameters() { return parameters_; }
  const std::vector<Parameter>& parameters() const { return parameters_; }

  /// Channel count of the final maps, which is also the GAP width d.
  std::size_t feature_width() const { return feature_width_; }
  /// Spatial extent of the (square) final maps.
  std::size_t final_map_size() const { return map_size_; }
  const std::string& final_conv_layer() const { return final_conv_layer_; }

 private:
  BackboneConfig config_;
  std::string prefix_;
  std::vector<Layer> layers_;
  std::vector<Parameter> parameters_;
  std::size_t feature_width_;
  std::size_t map_size_;
  std::string final_conv_layer_;
};

/// He-initialized [K,C,k,k] weight and zero [K] bias.
struct ConvWeights {
  Tensor weight;
  Tensor bias;
};
ConvWeights he_conv(std::size_t out_channels, std::size_t in_channels, std::size_t kernel, Rng& rng);

/// Weights for a dense block of `layers` layers with the given growth rate.
std::vector<ConvWeights> init_dense_block(std::size_t in_channels, std::size_t layers,
                                          std::size_t growth, Rng& rng);

/// Concatenative block: each layer applies ReLU then a padded 3x3 conv to the
/// concatenation of the block input and all earlier layer outputs, and its
/// output is appended. Output channels: C0 + L * growth.
Tensor dense_block(const Tensor& input, std::span<const ConvWeights> layers);

Backbone build_mini_vgg(const BackboneConfig& config, std::string name_prefix = "");
Backbone build_mini_densenet(const BackboneConfig& config, std::string name_prefix = "");
/// Dispatches on config.kind.
Backbone build_backbone(const BackboneConfig& config, std::string name_prefix = "");

/// x: [N, input_channels, input_size, input_size].
BackboneOutput forward_backbone(const Backbone& backbone, const Tensor& x);

}  // namespace dggx
