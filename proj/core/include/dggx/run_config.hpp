#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "dggx/dataset.hpp"
#include "dggx/fusion_model.hpp"
#include "dggx/trainer.hpp"

namespace dggx {

/// Every knob of a run, read from a flat `key = value` document. Lines
/// starting with `#` are comments; unknown keys are rejected.
struct RunConfig {
  std::uint64_t model_seed = 1;
  std::uint64_t data_seed = 2;
  std::uint64_t train_seed = 3;

  std::size_t image_size = 32;
  std::size_t channels = 1;
  SplitFractions fractions;

  std::vector<std::size_t> vgg_stages{8, 16, 32};
  std::size_t dense_stem = 8;
  std::size_t dense_growth = 6;
  std::vector<std::size_t> dense_blocks{2, 2};
  double dense_compression = 0.5;
  std::size_t hidden = 64;
  double dropout = 0.3;
  bool freeze_backbones = false;

  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  AdamHyperparameters adam;
  std::size_t patience = 5;

  std::size_t ig_steps = 50;
  std::size_t threads = 1;

  ModelSpec model_spec(std::vector<std::string> class_names) const;
  TrainConfig train_config() const;
};

/// Throws ConfigError naming the offending key or line.
RunConfig parse_run_config(std::string_view text);
RunConfig read_run_config(const std::string& path);

/// Every key, one per line, in a fixed order; parse_run_config inverts it.
std::string serialize_run_config(const RunConfig& config);

/// Names of all accepted keys, in serialization order.
std::vector<std::string> run_config_keys();

}  // namespace dggx
