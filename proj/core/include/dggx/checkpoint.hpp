#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dggx/fusion_model.hpp"
#include "dggx/trainer.hpp"

namespace dggx {

/// Named array record, the unit of the checkpoint file.
struct TensorRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Byte layout (all integers little-endian):
///   "DGGX" | u8 version=1 | u32 count | count records | u32 count | log records
/// where a record is u32 name length, UTF-8 name, u32 rank, rank x u32
/// extents, then prod(extents) float64 values.
inline constexpr std::uint8_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_records(std::span<const TensorRecord> model_records,
                                         std::span<const TensorRecord> log_records);
/// Throws FormatError on bad magic, unknown version or truncation.
std::pair<std::vector<TensorRecord>, std::vector<TensorRecord>> decode_records(
    std::span<const std::uint8_t> bytes);

struct Checkpoint {
  FusionModel model;
  AdamState optimizer;
  TrainLog log;
  /// Free-form numeric metadata (data seed, split fractions...).
  std::map<std::string, std::vector<double>> extras;
};

std::vector<std::uint8_t> encode_checkpoint(const FusionModel& model, const AdamState& optimizer,
                                            const TrainLog& log,
                                            const std::map<std::string, std::vector<double>>& extras = {});
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const FusionModel& model,
                     const AdamState& optimizer, const TrainLog& log,
                     const std::map<std::string, std::vector<double>>& extras = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dggx
