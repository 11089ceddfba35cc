#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dggx/image_io.hpp"
#include "dggx/random.hpp"
#include "dggx/tensor.hpp"

namespace dggx {

struct Sample {
  Tensor image;  // [C,H,W], values in [0,1]
  std::size_t label = 0;
  std::string source_id;
};

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split);
/// Accepts "train", "validation"/"val", "test"; throws ParameterError otherwise.
Split parse_split(std::string_view name);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& get(Split split) const;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  SplitIndices splits;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return class_names.size(); }
};

struct SplitFractions {
  double train = 0.7;
  double validation = 0.2;
  double test = 0.1;
};

/// Sample indices per class label, in sample order.
using ClassGroups = std::map<std::size_t, std::vector<std::size_t>>;

ClassGroups group_by_class(const Dataset& dataset);

/// Reduces every class to the minority-class size by uniform sampling
/// without replacement. Retained indices keep their original order, and a
/// class already at the minority size is returned untouched.
ClassGroups balance_downsample(const ClassGroups& groups, Rng& rng);

/// Copy holding only the given samples (in the given order), without splits.
Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

/// group_by_class -> balance_downsample -> subset, with indices sorted.
Dataset balance_dataset(const Dataset& dataset, Rng& rng);

/// Per class: shuffle, give floor(f * n) samples to validation and test and
/// the rest to train. Each split's index list is returned sorted.
Dataset stratified_split(Dataset dataset, const SplitFractions& fractions, Rng& rng);

struct SyntheticConfig {
  std::size_t per_class = 500;
  std::size_t size = 32;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t channels = 1;
};

/// Class names of the synthetic generator, in label order.
const std::vector<std::string>& synthetic_class_names();

/// One synthetic brain-like slice for `label` in [0,3), values in [0,1].
GrayImage render_synthetic_slice(std::size_t label, std::size_t size, double noise, Rng& rng);

/// per_class samples of each of three motifs: "alzheimer" (enlarged dark
/// cavities and a widened outer gap), "normal" (plain ring with small
/// cavities) and "tumour" (bright central mass).
Dataset generate_synthetic_dataset(const SyntheticConfig& config);

struct LoadOptions {
  std::size_t size = 32;
  std::size_t channels = 1;
};

/// One subdirectory per class (sorted names) holding .pgm / .ppm files.
/// Other files are skipped with a warning; undecodable images raise a
/// LoadError listing every failing path.
Dataset load_dataset_dir(const std::filesystem::path& root, const LoadOptions& options);

/// Stacks samples into an [N,C,H,W] batch.
Tensor stack_images(const Dataset& dataset, std::span<const std::size_t> indices);
/// One-hot [N, classes] matrix for the given samples.
Tensor one_hot_labels(const Dataset& dataset, std::span<const std::size_t> indices);

struct ManifestRow {
  std::string path;
  std::string class_name;
  std::string split;
};

/// CSV with header `path,class,split`.
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);

}  // namespace dggx
