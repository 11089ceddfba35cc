#include "dggx/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dggx/errors.hpp"
#include "dggx/preprocess.hpp"

namespace dggx {

namespace fs = std::filesystem;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train:
      return "train";
    case Split::Validation:
      return "validation";
    case Split::Test:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation" || name == "val") return Split::Validation;
  if (name == "test") return Split::Test;
  throw ParameterError("unknown split '" + std::string(name) + "'");
}

const std::vector<std::size_t>& SplitIndices::get(Split split) const {
  switch (split) {
    case Split::Train:
      return train;
    case Split::Validation:
      return validation;
    case Split::Test:
      return test;
  }
  return train;
}

ClassGroups group_by_class(const Dataset& dataset) {
  ClassGroups groups;
  for (std::size_t c = 0; c < dataset.class_names.size(); ++c) groups[c];
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) groups[dataset.samples[i].label].push_back(i);
  return groups;
}

ClassGroups balance_downsample(const ClassGroups& groups, Rng& rng) {
  if (groups.empty()) throw ValidationError("balance: no classes");
  std::size_t minority = groups.begin()->second.size();
  for (const auto& [label, members] : groups) {
    if (members.empty()) throw ValidationError("balance: class " + std::to_string(label) + " is empty");
    minority = std::min(minority, members.size());
  }
  ClassGroups out;
  for (const auto& [label, members] : groups) {
    if (members.size() == minority) {
      out[label] = members;
      continue;
    }
    // Partial Fisher-Yates over positions picks `minority` distinct members.
    std::vector<std::size_t> positions(members.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    for (std::size_t i = 0; i < minority; ++i) {
      const auto j = i + static_cast<std::size_t>(uniform_index(rng, positions.size() - i));
      std::swap(positions[i], positions[j]);
    }
    positions.resize(minority);
    std::sort(positions.begin(), positions.end());
    auto& kept = out[label];
    for (auto p : positions) kept.push_back(members[p]);
  }
  return out;
}

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices) {
  Dataset out;
  out.class_names = dataset.class_names;
  out.seed = dataset.seed;
  out.samples.reserve(indices.size());
  for (auto i : indices) {
    if (i >= dataset.samples.size()) throw ParameterError("subset index out of range");
    out.samples.push_back(dataset.samples[i]);
  }
  return out;
}

Dataset balance_dataset(const Dataset& dataset, Rng& rng) {
  std::vector<std::size_t> kept;
  for (const auto& [label, members] : balance_downsample(group_by_class(dataset), rng)) {
    kept.insert(kept.end(), members.begin(), members.end());
  }
  std::sort(kept.begin(), kept.end());
  return subset(dataset, kept);
}

Dataset stratified_split(Dataset dataset, const SplitFractions& fractions, Rng& rng) {
  for (double f : {fractions.train, fractions.validation, fractions.test}) {
    if (!(f >= 0.0 && f <= 1.0)) throw ParameterError("split fractions must lie in [0, 1]");
  }
  if (std::abs(fractions.train + fractions.validation + fractions.test - 1.0) > 1e-9) {
    throw ParameterError("split fractions must sum to 1");
  }
  // The small slack keeps products such as 0.29 * 100 = 28.999... at 29.
  auto share = [](double f, std::size_t n) {
    return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
  };
  SplitIndices splits;
  for (auto& [label, members] : group_by_class(dataset)) {
    shuffle(std::span<std::size_t>(members), rng);
    const std::size_t n = members.size();
    const std::size_t n_val = share(fractions.validation, n);
    const std::size_t n_test = std::min(share(fractions.test, n), n - n_val);
    const std::size_t n_train = n - n_val - n_test;
    splits.train.insert(splits.train.end(), members.begin(), members.begin() + n_train);
    splits.validation.insert(splits.validation.end(), members.begin() + n_train,
                             members.begin() + n_train + n_val);
    splits.test.insert(splits.test.end(), members.begin() + n_train + n_val, members.end());
  }
  std::sort(splits.train.begin(), splits.train.end());
  std::sort(splits.validation.begin(), splits.validation.end());
  std::sort(splits.test.begin(), splits.test.end());
  dataset.splits = std::move(splits);
  return dataset;
}

const std::vector<std::string>& synthetic_class_names() {
  static const std::vector<std::string> names{"alzheimer", "normal", "tumour"};
  return names;
}

GrayImage render_synthetic_slice(std::size_t label, std::size_t size, double noise, Rng& rng) {
  if (label >= 3) throw ParameterError("synthetic label must be 0, 1 or 2");
  if (size < 8) throw ParameterError("synthetic image size must be >= 8");
  const double s = static_cast<double>(size);
  const double jitter = s / 16.0;
  const double cx = s / 2.0 + (2.0 * uniform01(rng) - 1.0) * jitter;
  const double cy = s / 2.0 + (2.0 * uniform01(rng) - 1.0) * jitter;
  const double r = 0.40 * s * (0.95 + 0.10 * uniform01(rng));

  struct Disc {
    double x, y, radius, value;
  };
  std::vector<Disc> discs;
  double gap_inner = 0.85 * r;  // skull ring starts here; tissue fills the inside
  switch (label) {
    case 0:  // atrophy-like: large cavities and a widened dark gap under the ring
      discs.push_back({cx - 0.30 * r, cy, 0.25 * r, 0.05});
      discs.push_back({cx + 0.30 * r, cy, 0.25 * r, 0.05});
      gap_inner = 0.65 * r;
      break;
    case 1:  // normal: small cavities only
      discs.push_back({cx - 0.20 * r, cy, 0.08 * r, 0.10});
      discs.push_back({cx + 0.20 * r, cy, 0.08 * r, 0.10});
      break;
    default: {  // tumour-like: bright mass near the centre
      discs.push_back({cx - 0.20 * r, cy, 0.08 * r, 0.10});
      discs.push_back({cx + 0.20 * r, cy, 0.08 * r, 0.10});
      const double mx = cx + (2.0 * uniform01(rng) - 1.0) * 0.1 * r;
      const double my = cy + (2.0 * uniform01(rng) - 1.0) * 0.1 * r;
      discs.push_back({mx, my, 0.32 * r, 1.0});
      break;
    }
  }

  GrayImage img{size, size, std::vector<double>(size * size, 0.0)};
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      const double d = std::hypot(px - cx, py - cy);
      double v = 0.0;
      if (d < r) {
        if (d >= 0.85 * r) {
          v = 0.9;
        } else if (d >= gap_inner) {
          v = 0.1;
        } else {
          v = 0.45;
          for (const auto& disc : discs) {
            if (std::hypot(px - disc.x, py - disc.y) < disc.radius) v = disc.value;
          }
        }
      }
      img.at(y, x) = v;
    }
  }
  if (noise > 0.0) {
    for (auto& v : img.values) v += noise * standard_normal(rng);
  }
  for (auto& v : img.values) v = std::clamp(v, 0.0, 1.0);
  return img;
}

Dataset generate_synthetic_dataset(const SyntheticConfig& config) {
  if (config.per_class < 1) throw ParameterError("per_class must be positive");
  if (config.noise < 0.0) throw ParameterError("noise must be non-negative");
  Dataset d;
  d.class_names = synthetic_class_names();
  d.seed = config.seed;
  for (std::size_t label = 0; label < d.class_names.size(); ++label) {
    for (std::size_t i = 0; i < config.per_class; ++i) {
      Rng rng = make_rng(config.seed, (static_cast<std::uint64_t>(label) << 32) | i);
      GrayImage img = render_synthetic_slice(label, config.size, config.noise, rng);
      char id[32];
      std::snprintf(id, sizeof id, "%04zu", i);
      d.samples.push_back({to_model_channels(img, config.channels), label,
                           d.class_names[label] + "/" + id});
    }
  }
  return d;
}

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".pgm" || ext == ".ppm";
}

}  // namespace

Dataset load_dataset_dir(const fs::path& root, const LoadOptions& options) {
  std::error_code ec;
  if (!fs::is_directory(root, ec)) throw PathError("dataset root not found: " + root.string());

  std::vector<fs::path> class_dirs;
  for (const auto& entry : fs::directory_iterator(root)) {
    if (entry.is_directory()) class_dirs.push_back(entry.path());
  }
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw ValidationError("no class subdirectories under " + root.string());

  Dataset d;
  std::vector<std::string> failures;
  for (std::size_t label = 0; label < class_dirs.size(); ++label) {
    const std::string name = class_dirs[label].filename().string();
    d.class_names.push_back(name);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(class_dirs[label])) {
      if (!entry.is_regular_file()) continue;
      if (is_image_file(entry.path())) {
        files.push_back(entry.path());
      } else {
        std::cerr << "warning: skipping non-image file " << entry.path().string() << "\n";
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw ValidationError("class directory has no images: " + class_dirs[label].string());
    for (const auto& file : files) {
      try {
        const Image8 raw = read_pnm(file);
        d.samples.push_back({preprocess_image(to_gray(raw), options.size, options.channels), label,
                             name + "/" + file.filename().string()});
      } catch (const Error& e) {
        failures.push_back(file.string() + ": " + e.what());
      }
    }
  }
  if (!failures.empty()) {
    std::string msg = "failed to load " + std::to_string(failures.size()) + " image(s):";
    for (const auto& f : failures) msg += "\n  " + f;
    throw LoadError(msg);
  }
  return d;
}

Tensor stack_images(const Dataset& dataset, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ValidationError("cannot stack an empty batch");
  const Shape& s = dataset.samples.at(indices[0]).image.shape();
  std::vector<double> out;
  out.reserve(indices.size() * numel(s));
  for (auto i : indices) {
    const auto& img = dataset.samples.at(i).image;
    if (img.shape() != s) throw ShapeError("samples have differing image shapes");
    out.insert(out.end(), img.data().begin(), img.data().end());
  }
  Shape batch{indices.size()};
  batch.insert(batch.end(), s.begin(), s.end());
  return Tensor(std::move(batch), std::move(out));
}

Tensor one_hot_labels(const Dataset& dataset, std::span<const std::size_t> indices) {
  const std::size_t c = dataset.num_classes();
  Tensor y = Tensor::zeros({indices.size(), c});
  auto v = y.mutable_data();
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto label = dataset.samples.at(indices[r]).label;
    if (label >= c) throw ValidationError("label out of range");
    v[r * c + label] = 1.0;
  }
  return y;
}

void write_manifest(const fs::path& path, const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << "path,class,split\n";
  for (const auto& r : rows) {
    for (const auto* field : {&r.path, &r.class_name, &r.split}) {
      if (field->find_first_of(",\n\r") != std::string::npos) {
        throw FormatError("manifest field contains a separator: " + *field);
      }
    }
    out << r.path << ',' << r.class_name << ',' << r.split << '\n';
  }
  const std::string text = out.str();
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<ManifestRow> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PathError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "path,class,split") {
    throw FormatError("manifest header must be 'path,class,split'");
  }
  std::vector<ManifestRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = a == std::string::npos ? a : line.find(',', a + 1);
    if (b == std::string::npos || line.find(',', b + 1) != std::string::npos) {
      throw FormatError("malformed manifest row: " + line);
    }
    rows.push_back({line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1)});
  }
  return rows;
}

}  // namespace dggx
