#include "dggx/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <unordered_map>

#include "dggx/errors.hpp"
#include "dggx/image_io.hpp"

namespace dggx {

namespace {

constexpr char kMagic[4] = {'D', 'G', 'G', 'X'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    const auto v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}

  const std::uint8_t* take(std::size_t n) {
    if (b_.size() - pos_ < n) throw FormatError("checkpoint is truncated");
    const auto* p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint8_t u8() { return *take(1); }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
  }
  double f64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

void write_record(Writer& w, const TensorRecord& r) {
  if (numel(r.shape) != r.values.size()) throw FormatError("record " + r.name + ": shape/value mismatch");
  w.u32(static_cast<std::uint32_t>(r.name.size()));
  w.bytes(r.name.data(), r.name.size());
  w.u32(static_cast<std::uint32_t>(r.shape.size()));
  for (auto e : r.shape) w.u32(static_cast<std::uint32_t>(e));
  for (double v : r.values) w.f64(v);
}

TensorRecord read_record(Reader& r) {
  TensorRecord rec;
  const std::uint32_t name_len = r.u32();
  const auto* name = r.take(name_len);
  rec.name.assign(reinterpret_cast<const char*>(name), name_len);
  const std::uint32_t rank = r.u32();
  if (rank > 8) throw FormatError("record " + rec.name + ": implausible rank");
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    rec.shape.push_back(r.u32());
    count *= rec.shape.back();
  }
  if (count > r.remaining() / 8) throw FormatError("checkpoint is truncated");
  rec.values.resize(count);
  for (auto& v : rec.values) v = r.f64();
  return rec;
}

// 64-bit integers travel as two exactly representable 32-bit halves.
void push_u64(std::vector<double>& out, std::uint64_t v) {
  out.push_back(static_cast<double>(v & 0xffffffffULL));
  out.push_back(static_cast<double>(v >> 32));
}

class ValueCursor {
 public:
  ValueCursor(const std::vector<double>& v, std::string what) : v_(v), what_(std::move(what)) {}
  double next() {
    if (i_ >= v_.size()) throw FormatError("checkpoint: " + what_ + " record too short");
    return v_[i_++];
  }
  std::size_t size() {
    const double d = next();
    if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
      throw FormatError("checkpoint: " + what_ + " has a non-integral count");
    }
    return static_cast<std::size_t>(d);
  }
  std::uint64_t u64() {
    const auto lo = static_cast<std::uint64_t>(size());
    const auto hi = static_cast<std::uint64_t>(size());
    return lo | (hi << 32);
  }

 private:
  const std::vector<double>& v_;
  std::string what_;
  std::size_t i_ = 0;
};

std::vector<double> encode_backbone(const BackboneConfig& c) {
  std::vector<double> v{c.kind == BackboneKind::VggLike ? 0.0 : 1.0,
                        static_cast<double>(c.input_channels), static_cast<double>(c.input_size)};
  push_u64(v, c.seed);
  v.push_back(static_cast<double>(c.stem_channels));
  v.push_back(static_cast<double>(c.growth_rate));
  v.push_back(c.compression);
  v.push_back(static_cast<double>(c.stage_widths.size()));
  for (auto s : c.stage_widths) v.push_back(static_cast<double>(s));
  v.push_back(static_cast<double>(c.block_lengths.size()));
  for (auto b : c.block_lengths) v.push_back(static_cast<double>(b));
  return v;
}

BackboneConfig decode_backbone(const std::vector<double>& v, const std::string& what) {
  ValueCursor cur(v, what);
  BackboneConfig c;
  c.kind = cur.size() == 0 ? BackboneKind::VggLike : BackboneKind::DenseLike;
  c.input_channels = cur.size();
  c.input_size = cur.size();
  c.seed = cur.u64();
  c.stem_channels = cur.size();
  c.growth_rate = cur.size();
  c.compression = cur.next();
  c.stage_widths.resize(cur.size());
  for (auto& s : c.stage_widths) s = cur.size();
  c.block_lengths.resize(cur.size());
  for (auto& b : c.block_lengths) b = cur.size();
  return c;
}

TensorRecord scalar_record(std::string name, std::vector<double> values) {
  const std::size_t n = values.size();
  return {std::move(name), Shape{n}, std::move(values)};
}

}  // namespace

std::vector<std::uint8_t> encode_records(std::span<const TensorRecord> model_records,
                                         std::span<const TensorRecord> log_records) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u8(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(model_records.size()));
  for (const auto& r : model_records) write_record(w, r);
  w.u32(static_cast<std::uint32_t>(log_records.size()));
  for (const auto& r : log_records) write_record(w, r);
  return w.take();
}

std::pair<std::vector<TensorRecord>, std::vector<TensorRecord>> decode_records(
    std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(r.take(4), kMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic)");
  }
  const auto version = r.u8();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::pair<std::vector<TensorRecord>, std::vector<TensorRecord>> out;
  for (auto* section : {&out.first, &out.second}) {
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) section->push_back(read_record(r));
  }
  if (r.remaining() != 0) throw FormatError("checkpoint has trailing bytes");
  return out;
}

std::vector<std::uint8_t> encode_checkpoint(const FusionModel& model, const AdamState& optimizer,
                                            const TrainLog& log,
                                            const std::map<std::string, std::vector<double>>& extras) {
  const auto params = model.parameters();
  if (optimizer.m.size() != params.size() || optimizer.v.size() != params.size()) {
    throw StateError("optimizer state does not match the model");
  }
  const auto& spec = model.spec();
  std::vector<TensorRecord> records;
  records.push_back(scalar_record("meta.backbone_a", encode_backbone(spec.backbone_a)));
  records.push_back(scalar_record("meta.backbone_b", encode_backbone(spec.backbone_b)));
  std::vector<double> head{static_cast<double>(spec.hidden), spec.dropout_rate};
  push_u64(head, spec.seed);
  records.push_back(scalar_record("meta.head", head));
  for (std::size_t i = 0; i < spec.class_names.size(); ++i) {
    records.push_back(scalar_record("meta.class:" + spec.class_names[i], {static_cast<double>(i)}));
  }
  for (const auto* p : params) {
    const auto d = p->value.data();
    records.push_back({p->name, p->value.shape(), {d.begin(), d.end()}});
    records.push_back(scalar_record("trainable:" + p->name, {p->trainable ? 1.0 : 0.0}));
  }
  const auto& h = optimizer.hyper;
  records.push_back(scalar_record("adam.hyper", {h.learning_rate, h.beta1, h.beta2, h.epsilon}));
  std::vector<double> step;
  push_u64(step, optimizer.step);
  records.push_back(scalar_record("adam.step", step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    records.push_back({"adam.m:" + params[i]->name, params[i]->value.shape(), optimizer.m[i]});
    records.push_back({"adam.v:" + params[i]->name, params[i]->value.shape(), optimizer.v[i]});
  }
  for (const auto& [key, values] : extras) records.push_back(scalar_record("extra:" + key, values));

  std::vector<TensorRecord> log_records;
  auto column = [&](const char* name, double EpochRecord::*field) {
    std::vector<double> v;
    for (const auto& e : log.epochs) v.push_back(e.*field);
    log_records.push_back(scalar_record(name, std::move(v)));
  };
  column("log.train_loss", &EpochRecord::train_loss);
  column("log.train_acc", &EpochRecord::train_accuracy);
  column("log.val_loss", &EpochRecord::val_loss);
  column("log.val_acc", &EpochRecord::val_accuracy);
  log_records.push_back(scalar_record("log.best_epoch", {static_cast<double>(log.best_epoch)}));
  return encode_records(records, log_records);
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  auto [records, log_records] = decode_records(bytes);
  std::unordered_map<std::string, const TensorRecord*> by_name;
  std::vector<std::pair<double, std::string>> classes;
  std::map<std::string, std::vector<double>> extras;
  for (const auto& r : records) {
    if (!by_name.emplace(r.name, &r).second) throw FormatError("duplicate record " + r.name);
    if (r.name.starts_with("meta.class:")) {
      if (r.values.size() != 1) throw FormatError("malformed class record");
      classes.emplace_back(r.values[0], r.name.substr(11));
    } else if (r.name.starts_with("extra:")) {
      extras[r.name.substr(6)] = r.values;
    }
  }
  auto need = [&](const std::string& name) -> const TensorRecord& {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw FormatError("checkpoint lacks record " + name);
    return *it->second;
  };

  ModelSpec spec;
  spec.backbone_a = decode_backbone(need("meta.backbone_a").values, "meta.backbone_a");
  spec.backbone_b = decode_backbone(need("meta.backbone_b").values, "meta.backbone_b");
  {
    ValueCursor cur(need("meta.head").values, "meta.head");
    spec.hidden = cur.size();
    spec.dropout_rate = cur.next();
    spec.seed = cur.u64();
  }
  std::sort(classes.begin(), classes.end());
  for (auto& [idx, name] : classes) spec.class_names.push_back(name);

  FusionModel model = [&] {
    try {
      return build_dggxnet(spec);
    } catch (const ConfigError& e) {
      throw FormatError(std::string("checkpoint holds an invalid model spec: ") + e.what());
    }
  }();

  const auto& hyper = need("adam.hyper").values;
  if (hyper.size() != 4) throw FormatError("malformed adam.hyper record");
  AdamState optimizer;
  optimizer.hyper = {hyper[0], hyper[1], hyper[2], hyper[3]};
  optimizer.step = ValueCursor(need("adam.step").values, "adam.step").u64();

  for (auto* p : model.parameters()) {
    const auto& rec = need(p->name);
    if (rec.shape != p->value.shape()) throw FormatError("shape mismatch for " + p->name);
    auto dst = p->value.mutable_data();
    std::copy(rec.values.begin(), rec.values.end(), dst.begin());
    p->trainable = need("trainable:" + p->name).values.at(0) != 0.0;
    const auto& m = need("adam.m:" + p->name);
    const auto& v = need("adam.v:" + p->name);
    if (m.values.size() != dst.size() || v.values.size() != dst.size()) {
      throw FormatError("moment shape mismatch for " + p->name);
    }
    optimizer.m.push_back(m.values);
    optimizer.v.push_back(v.values);
  }

  TrainLog log;
  std::unordered_map<std::string, const TensorRecord*> log_by_name;
  for (const auto& r : log_records) log_by_name[r.name] = &r;
  auto log_column = [&](const std::string& name) -> const std::vector<double>& {
    auto it = log_by_name.find(name);
    if (it == log_by_name.end()) throw FormatError("checkpoint lacks log record " + name);
    return it->second->values;
  };
  const auto& tl = log_column("log.train_loss");
  const auto& ta = log_column("log.train_acc");
  const auto& vl = log_column("log.val_loss");
  const auto& va = log_column("log.val_acc");
  if (ta.size() != tl.size() || vl.size() != tl.size() || va.size() != tl.size()) {
    throw FormatError("log columns differ in length");
  }
  for (std::size_t e = 0; e < tl.size(); ++e) log.epochs.push_back({tl[e], ta[e], vl[e], va[e]});
  log.best_epoch = ValueCursor(log_column("log.best_epoch"), "log.best_epoch").size();

  return Checkpoint{std::move(model), std::move(optimizer), std::move(log), std::move(extras)};
}

void save_checkpoint(const std::filesystem::path& path, const FusionModel& model,
                     const AdamState& optimizer, const TrainLog& log,
                     const std::map<std::string, std::vector<double>>& extras) {
  write_file(path, encode_checkpoint(model, optimizer, log, extras));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace dggx
