#include "dggx/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <set>
#include <sstream>

#include "dggx/errors.hpp"
#include "dggx/image_io.hpp"

namespace dggx {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError("invalid value for '" + std::string(key) + "': '" + std::string(text) + "'");
  }
  return value;
}

template <typename T>
std::string format_number(T value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::vector<std::size_t> parse_list(std::string_view key, std::string_view text) {
  std::vector<std::size_t> out;
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_number<std::size_t>(key, trim(text.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

std::string format_list(const std::vector<std::size_t>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_number(values[i]);
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError("invalid value for '" + std::string(key) + "': expected true or false");
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(std::string name, T RunConfig::*member) {
  return {name,
          [name, member](RunConfig& c, std::string_view v) { c.*member = parse_number<T>(name, v); },
          [member](const RunConfig& c) { return format_number(c.*member); }};
}

template <typename T>
Field nested_field(std::string name, std::function<T&(RunConfig&)> ref) {
  return {name, [name, ref](RunConfig& c, std::string_view v) { ref(c) = parse_number<T>(name, v); },
          [ref](const RunConfig& c) { return format_number(ref(const_cast<RunConfig&>(c))); }};
}

Field list_field(std::string name, std::vector<std::size_t> RunConfig::*member) {
  return {name, [name, member](RunConfig& c, std::string_view v) { c.*member = parse_list(name, v); },
          [member](const RunConfig& c) { return format_list(c.*member); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(number_field("model_seed", &RunConfig::model_seed));
    f.push_back(number_field("data_seed", &RunConfig::data_seed));
    f.push_back(number_field("train_seed", &RunConfig::train_seed));
    f.push_back(number_field("image_size", &RunConfig::image_size));
    f.push_back(number_field("channels", &RunConfig::channels));
    f.push_back(nested_field<double>("train_fraction", [](RunConfig& c) -> double& { return c.fractions.train; }));
    f.push_back(nested_field<double>("validation_fraction",
                                     [](RunConfig& c) -> double& { return c.fractions.validation; }));
    f.push_back(nested_field<double>("test_fraction", [](RunConfig& c) -> double& { return c.fractions.test; }));
    f.push_back(list_field("vgg_stages", &RunConfig::vgg_stages));
    f.push_back(number_field("dense_stem", &RunConfig::dense_stem));
    f.push_back(number_field("dense_growth", &RunConfig::dense_growth));
    f.push_back(list_field("dense_blocks", &RunConfig::dense_blocks));
    f.push_back(number_field("dense_compression", &RunConfig::dense_compression));
    f.push_back(number_field("hidden", &RunConfig::hidden));
    f.push_back(number_field("dropout", &RunConfig::dropout));
    f.push_back({"freeze_backbones",
                 [](RunConfig& c, std::string_view v) { c.freeze_backbones = parse_bool("freeze_backbones", v); },
                 [](const RunConfig& c) { return std::string(c.freeze_backbones ? "true" : "false"); }});
    f.push_back(number_field("epochs", &RunConfig::epochs));
    f.push_back(number_field("batch_size", &RunConfig::batch_size));
    f.push_back(nested_field<double>("learning_rate",
                                     [](RunConfig& c) -> double& { return c.adam.learning_rate; }));
    f.push_back(nested_field<double>("beta1", [](RunConfig& c) -> double& { return c.adam.beta1; }));
    f.push_back(nested_field<double>("beta2", [](RunConfig& c) -> double& { return c.adam.beta2; }));
    f.push_back(nested_field<double>("epsilon", [](RunConfig& c) -> double& { return c.adam.epsilon; }));
    f.push_back(number_field("patience", &RunConfig::patience));
    f.push_back(number_field("ig_steps", &RunConfig::ig_steps));
    f.push_back(number_field("threads", &RunConfig::threads));
    return f;
  }();
  return table;
}

}  // namespace

ModelSpec RunConfig::model_spec(std::vector<std::string> class_names) const {
  ModelSpec spec;
  spec.backbone_a = BackboneConfig::vgg_like(model_seed * 2 + 1);
  spec.backbone_a.input_channels = channels;
  spec.backbone_a.input_size = image_size;
  spec.backbone_a.stage_widths = vgg_stages;
  spec.backbone_b = BackboneConfig::dense_like(model_seed * 2 + 2);
  spec.backbone_b.input_channels = channels;
  spec.backbone_b.input_size = image_size;
  spec.backbone_b.stem_channels = dense_stem;
  spec.backbone_b.growth_rate = dense_growth;
  spec.backbone_b.block_lengths = dense_blocks;
  spec.backbone_b.compression = dense_compression;
  spec.hidden = hidden;
  spec.class_names = std::move(class_names);
  spec.dropout_rate = dropout;
  spec.seed = model_seed;
  return spec;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.adam = adam;
  t.patience = patience;
  t.seed = train_seed;
  return t;
}

RunConfig parse_run_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto& table = fields();
    const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.name == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + std::string(key) + "'");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError("duplicate config key '" + std::string(key) + "'");
    }
    it->set(config, value);
  }
  return config;
}

RunConfig read_run_config(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_run_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string serialize_run_config(const RunConfig& config) {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.name << " = " << f.get(config) << '\n';
  return out.str();
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.name);
  return keys;
}

}  // namespace dggx
