#include "cli.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dggx/errors.hpp"
#include "dggx/image_io.hpp"
#include "dggx/parallel.hpp"
#include "dggx/preprocess.hpp"
#include "dggx/xai.hpp"

namespace dggx::cli {

namespace fs = std::filesystem;

namespace {

// 64-bit seeds travel through float64 checkpoint records as two exact halves.
std::vector<double> split_u64(std::uint64_t v) {
  return {static_cast<double>(v & 0xffffffffu), static_cast<double>(v >> 32)};
}

std::uint64_t join_u64(const std::vector<double>& v) {
  if (v.size() != 2) throw FormatError("malformed 64-bit checkpoint field");
  return static_cast<std::uint64_t>(v[0]) | (static_cast<std::uint64_t>(v[1]) << 32);
}

const std::vector<double>& extra(const Checkpoint& ckpt, const std::string& key) {
  const auto it = ckpt.extras.find(key);
  if (it == ckpt.extras.end()) throw FormatError("checkpoint lacks '" + key + "' metadata");
  return it->second;
}

struct DataProvenance {
  std::uint64_t data_seed = 0;
  SplitFractions fractions;
};

DataProvenance provenance(const Checkpoint& ckpt) {
  DataProvenance p;
  p.data_seed = join_u64(extra(ckpt, "data_seed"));
  const auto& f = extra(ckpt, "fractions");
  if (f.size() != 3) throw FormatError("malformed split fractions in checkpoint");
  p.fractions = {f[0], f[1], f[2]};
  return p;
}

std::map<std::string, std::vector<double>> provenance_extras(std::uint64_t data_seed,
                                                             const SplitFractions& f) {
  return {{"data_seed", split_u64(data_seed)}, {"fractions", {f.train, f.validation, f.test}}};
}

fs::path sibling(const fs::path& path, const std::string& suffix) {
  fs::path p = path;
  p.replace_extension(suffix);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path, std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()),
                                                 text.size()));
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw PathError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

void check_classes(const FusionModel& model, const Dataset& data) {
  if (model.class_names() != data.class_names) {
    throw ValidationError("dataset classes do not match the checkpoint's classes");
  }
}

std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

GrayImage first_channel(const Tensor& image) {
  const std::size_t h = image.dim(1), w = image.dim(2);
  const auto d = image.data();
  return GrayImage{h, w, std::vector<double>(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(h * w))};
}

}  // namespace

Dataset prepare_dataset(const fs::path& root, std::size_t image_size, std::size_t channels,
                        std::uint64_t data_seed, const SplitFractions& fractions) {
  Dataset raw = load_dataset_dir(root, {image_size, channels});
  Rng balance_rng = make_rng(data_seed, 1);
  Rng split_rng = make_rng(data_seed, 2);
  Dataset balanced = balance_dataset(raw, balance_rng);
  balanced.seed = data_seed;
  return stratified_split(std::move(balanced), fractions, split_rng);
}

EvaluationRecord evaluate_split(const FusionModel& model, const Dataset& data, Split split,
                                std::size_t batch_size) {
  const auto& indices = data.splits.get(split);
  if (indices.empty()) throw ValidationError("split '" + std::string(to_string(split)) + "' is empty");
  const std::size_t c = model.num_classes();
  std::vector<std::size_t> labels, preds;
  std::vector<double> scores;
  {
    NoGradGuard no_grad;
    for (std::size_t begin = 0; begin < indices.size(); begin += batch_size) {
      const auto batch = std::span<const std::size_t>(indices).subspan(
          begin, std::min(batch_size, indices.size() - begin));
      const auto probs = forward_fused(model, stack_images(data, batch), false).probs;
      const auto p = probs.data();
      for (std::size_t r = 0; r < batch.size(); ++r) {
        labels.push_back(data.samples[batch[r]].label);
        preds.push_back(argmax_first(p.subspan(r * c, c)));
      }
      scores.insert(scores.end(), p.begin(), p.end());
    }
  }
  EvaluationRecord record;
  record.split = std::string(to_string(split));
  record.class_names = model.class_names();
  record.confusion = confusion_matrix(labels, preds, c);
  record.report = classification_report(record.confusion);
  for (std::size_t k = 0; k < c; ++k) {
    try {
      record.auc.push_back(auc(roc_curve_ovr(labels, scores, c, k)));
    } catch (const ValidationError&) {
      record.auc.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return record;
}

std::string format_evaluation(const EvaluationRecord& record) {
  std::ostringstream out;
  out << "Split: " << record.split << " (" << record.confusion.total() << " samples)\n\n";
  out << "Confusion matrix (rows: true, columns: predicted)\n"
      << format_confusion_matrix(record.confusion, record.class_names) << "\n";
  out << format_report(record.report, record.class_names) << "\n";
  out << "One-vs-rest AUC\n";
  for (std::size_t k = 0; k < record.class_names.size(); ++k) {
    const double a = k < record.auc.size() ? record.auc[k] : std::numeric_limits<double>::quiet_NaN();
    out << "  " << record.class_names[k] << ": " << (std::isnan(a) ? "undefined" : format_fixed(a, 4))
        << "\n";
  }
  return out.str();
}

void gen_data(const GenDataOptions& options, std::ostream& out) {
  if (options.per_class < 1) throw ParameterError("per-class must be positive");
  if (options.size < 1) throw ParameterError("size must be positive");
  ensure_directory(options.out);
  SyntheticConfig config;
  config.per_class = options.per_class;
  config.size = options.size;
  config.noise = options.noise;
  config.seed = options.seed;
  const Dataset d = generate_synthetic_dataset(config);
  for (const auto& name : d.class_names) ensure_directory(options.out / name);

  std::vector<ManifestRow> rows;
  for (const auto& s : d.samples) {
    // source ids are "<class>/<index>"
    const std::string rel = s.source_id + ".pgm";
    write_pnm(options.out / rel, to_image8(first_channel(s.image)));
    rows.push_back({rel, d.class_names[s.label], "all"});
  }
  write_manifest(options.out / "manifest.csv", rows);
  out << "wrote " << rows.size() << " images to " << options.out.string() << "\n";
}

void train(const TrainOptions& options, std::ostream& out) {
  const RunConfig rc = options.config ? read_run_config(options.config->string()) : RunConfig{};

  std::optional<Checkpoint> resumed;
  if (options.resume) resumed = load_checkpoint(*options.resume);

  const std::uint64_t data_seed = resumed ? provenance(*resumed).data_seed : rc.data_seed;
  const SplitFractions fractions = resumed ? provenance(*resumed).fractions : rc.fractions;
  const std::size_t size = resumed ? resumed->model.spec().backbone_a.input_size : rc.image_size;
  const std::size_t channels = resumed ? resumed->model.spec().backbone_a.input_channels : rc.channels;
  const Dataset data = prepare_dataset(options.data, size, channels, data_seed, fractions);

  FusionModel model = resumed ? resumed->model : build_dggxnet(rc.model_spec(data.class_names));
  check_classes(model, data);
  AdamState state = resumed ? resumed->optimizer : AdamState::for_model(model, rc.adam);
  TrainLog log = resumed ? resumed->log : TrainLog{};
  if (!resumed && rc.freeze_backbones) {
    set_trainable_mask(model, name_prefix("a."), false);
    set_trainable_mask(model, name_prefix("b."), false);
  }

  TrainConfig tc = rc.train_config();
  tc.adam = state.hyper;
  FitHooks hooks;
  if (!options.quiet) {
    hooks.on_epoch = [&](const FusionModel&, std::size_t epoch, const EpochRecord& r) {
      out << "epoch " << epoch << "/" << tc.epochs << "  train_loss " << format_fixed(r.train_loss, 4)
          << "  train_acc " << format_fixed(r.train_accuracy, 4) << "  val_loss "
          << format_fixed(r.val_loss, 4) << "  val_acc " << format_fixed(r.val_accuracy, 4) << "\n"
          << std::flush;
    };
  }
  log = fit_with_early_stopping(model, state, data, tc, std::move(log), hooks);

  save_checkpoint(options.out, model, state, log, provenance_extras(data_seed, fractions));
  write_text(options.log, log.to_csv());

  std::vector<ManifestRow> rows;
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    for (auto i : data.splits.get(s)) {
      rows.push_back({data.samples[i].source_id, data.class_names[data.samples[i].label],
                      std::string(to_string(s))});
    }
  }
  write_manifest(options.manifest.value_or(sibling(options.out, ".manifest.csv")), rows);

  nlohmann::ordered_json summary;
  summary["best_epoch"] = log.best_epoch;
  summary["epochs_run"] = log.epochs.size();
  nlohmann::ordered_json metrics;
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    if (data.splits.get(s).empty()) continue;
    const EvalResult loss = evaluate(model, data, data.splits.get(s), tc.batch_size);
    const EvaluationRecord record = evaluate_split(model, data, s);
    metrics[std::string(to_string(s))] = {{"loss", loss.loss},
                                          {"accuracy", record.report.accuracy},
                                          {"macro_f1", record.report.macro.f1},
                                          {"samples", data.splits.get(s).size()}};
  }
  summary["metrics"] = metrics;
  summary["seeds"] = {{"model_seed", model.spec().seed}, {"data_seed", data_seed},
                      {"train_seed", tc.seed}};
  summary["class_names"] = data.class_names;
  nlohmann::ordered_json echo;
  {
    std::istringstream lines(serialize_run_config(rc));
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find(" = ");
      echo[line.substr(0, eq)] = line.substr(eq + 3);
    }
  }
  summary["config"] = echo;
  write_text(options.summary.value_or(sibling(options.out, ".summary.json")), summary.dump(2) + "\n");

  out << "best epoch " << log.best_epoch << " of " << log.epochs.size() << "; checkpoint written to "
      << options.out.string() << "\n";
  if (metrics.contains("test")) {
    out << "test accuracy " << format_fixed(metrics["test"]["accuracy"].get<double>() * 100.0, 2) << "%\n";
  }
}

EvaluationRecord eval(const EvalOptions& options, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(options.checkpoint);
  const DataProvenance prov = provenance(ckpt);
  const auto& a = ckpt.model.spec().backbone_a;
  const Dataset data = prepare_dataset(options.data, a.input_size, a.input_channels, prov.data_seed,
                                       prov.fractions);
  check_classes(ckpt.model, data);
  const EvaluationRecord record = evaluate_split(ckpt.model, data, options.split);

  ensure_directory(options.report);
  const std::string text = format_evaluation(record);
  write_text(options.report / "report.txt", text);
  write_text(options.report / "report.json", to_json(record));
  const auto& indices = data.splits.get(options.split);
  std::vector<std::size_t> labels;
  for (auto i : indices) labels.push_back(data.samples[i].label);
  std::vector<double> scores;
  {
    NoGradGuard no_grad;
    for (const auto& p : predict_batch(ckpt.model, stack_images(data, indices))) {
      scores.insert(scores.end(), p.probabilities.begin(), p.probabilities.end());
    }
  }
  for (std::size_t k = 0; k < record.class_names.size(); ++k) {
    if (std::isnan(record.auc[k])) {
      std::cerr << "warning: ROC undefined for class " << record.class_names[k] << " on this split\n";
      continue;
    }
    const auto points = roc_curve_ovr(labels, scores, record.class_names.size(), k);
    write_text(options.report / ("roc_" + record.class_names[k] + ".csv"), format_roc_csv(points));
  }
  out << text;
  return record;
}

void explain(const ExplainOptions& options, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(options.checkpoint);
  const FusionModel& model = ckpt.model;
  if (options.target && *options.target >= model.num_classes()) {
    throw ParameterError("class index " + std::to_string(*options.target) + " out of range [0, " +
                         std::to_string(model.num_classes()) + ")");
  }
  if (options.branch != "a" && options.branch != "b" && options.branch != "both") {
    throw ParameterError("branch must be a, b or both");
  }
  const auto& a = model.spec().backbone_a;
  const Tensor x = preprocess_image(to_gray(read_pnm(options.image)), a.input_size, a.input_channels);
  const Prediction pred = predict(model, x);
  const std::size_t target = options.target.value_or(pred.class_index);

  out << "predicted: " << model.class_names()[pred.class_index] << " (" << pred.class_index << ")\n";
  for (std::size_t k = 0; k < model.num_classes(); ++k) {
    out << "  " << model.class_names()[k] << ": " << format_fixed(pred.probabilities[k], 6) << "\n";
  }
  out << "target: " << model.class_names()[target] << " (" << target << ")\n";

  ensure_directory(options.out);
  const GrayImage base = first_channel(x);
  auto emit = [&](const AttributionMap& raw, const GrayImage& display, const std::string& stem) {
    const AttributionMap shown = upsample_heatmap({display, raw.method, raw.target_class, raw.branch},
                                                  base.height, base.width);
    write_pnm(options.out / (stem + ".ppm"), render_overlay(base, shown.values, options.alpha));
    write_volume(options.out / (stem + ".vol"), to_volume(raw.values));
    out << "wrote " << (options.out / (stem + ".ppm")).string() << "\n";
  };

  const bool want_cam = options.method != ExplainMethod::IntegratedGradients;
  const bool want_ig = options.method != ExplainMethod::GradCam;
  const bool all = options.method == ExplainMethod::Both;
  if (want_cam) {
    for (Branch b : {Branch::A, Branch::B}) {
      const std::string tag = b == Branch::A ? "a" : "b";
      if (!all && options.branch != "both" && options.branch != tag) continue;
      const AttributionMap cam = grad_cam(model, x, target, b);
      emit(cam, cam.values, "gradcam_" + tag);
    }
  }
  if (want_ig) {
    IGConfig ig;
    ig.steps = options.ig_steps;
    const AttributionMap map = integrated_gradients(model, x, target, ig);
    // Overlays show attribution magnitude; the raw file keeps the sign.
    GrayImage magnitude = map.values;
    for (auto& v : magnitude.values) v = std::abs(v);
    emit(map, magnitude, "ig");
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-backbone fused CNN classifier: data generation, training, evaluation, attribution",
               "dggx"};
  app.require_subcommand(1);
  std::size_t threads = 1;
  auto* threads_opt = app.add_option("--threads", threads, "Worker threads for batch math (default 1)")
                          ->check(CLI::PositiveNumber);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic three-class image dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--per-class", gen.per_class, "Images per class")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "Image side length in pixels")->capture_default_str();
  gen_cmd->add_option("--noise", gen.noise, "Gaussian noise standard deviation")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();

  TrainOptions tr;
  std::string summary, manifest, config, resume;
  auto* train_cmd = app.add_subcommand("train", "Balance, split and train a model on an image directory");
  train_cmd->add_option("--data", tr.data, "Dataset root (one subdirectory per class)")->required();
  train_cmd->add_option("--config", config, "Run configuration file (key = value)");
  train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
  train_cmd->add_option("--log", tr.log, "Training log CSV path")->required();
  train_cmd->add_option("--summary", summary, "Run summary JSON (default: <out>.summary.json)");
  train_cmd->add_option("--manifest", manifest, "Split manifest CSV (default: <out>.manifest.csv)");
  train_cmd->add_option("--resume", resume, "Continue training from this checkpoint");
  train_cmd->add_flag("--quiet", tr.quiet, "Do not print per-epoch progress");

  EvalOptions ev;
  std::string split_name = "test";
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on one split of a dataset");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  eval_cmd->add_option("--data", ev.data, "Dataset root used for training")->required();
  eval_cmd->add_option("--split", split_name, "train, validation or test")->capture_default_str();
  eval_cmd->add_option("--report", ev.report, "Report output directory")->required();

  ExplainOptions ex;
  std::string class_arg = "auto", method_arg = "both";
  auto* explain_cmd = app.add_subcommand("explain", "Grad-CAM and Integrated Gradients for one image");
  explain_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint path")->required();
  explain_cmd->add_option("--image", ex.image, "PGM or PPM image")->required();
  explain_cmd->add_option("--class", class_arg, "auto or a class index")->capture_default_str();
  explain_cmd->add_option("--method", method_arg, "gradcam, ig or both")
      ->check(CLI::IsMember({"gradcam", "ig", "both"}))
      ->capture_default_str();
  explain_cmd->add_option("--branch", ex.branch, "Grad-CAM branch for --method gradcam: a, b or both")
      ->check(CLI::IsMember({"a", "b", "both"}))
      ->capture_default_str();
  explain_cmd->add_option("--steps", ex.ig_steps, "Integrated Gradients path steps")->capture_default_str();
  explain_cmd->add_option("--alpha", ex.alpha, "Overlay blend weight in [0,1]")->capture_default_str();
  explain_cmd->add_option("--out", ex.out, "Output directory")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 2;
  }

  try {
    if (threads_opt->count() > 0) set_thread_count(threads);
    if (*gen_cmd) {
      gen_data(gen, out);
    } else if (*train_cmd) {
      if (!config.empty()) tr.config = config;
      if (!summary.empty()) tr.summary = summary;
      if (!manifest.empty()) tr.manifest = manifest;
      if (!resume.empty()) tr.resume = resume;
      if (threads_opt->count() == 0) {
        set_thread_count(tr.config ? read_run_config(tr.config->string()).threads : 1);
      }
      train(tr, out);
    } else if (*eval_cmd) {
      ev.split = parse_split(split_name);
      eval(ev, out);
    } else if (*explain_cmd) {
      if (class_arg != "auto") {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
          v = std::stoull(class_arg, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != class_arg.size() || class_arg.empty() || class_arg[0] == '-') {
          throw ParameterError("--class must be 'auto' or a non-negative index");
        }
        ex.target = static_cast<std::size_t>(v);
      }
      ex.method = method_arg == "gradcam" ? ExplainMethod::GradCam
                  : method_arg == "ig"    ? ExplainMethod::IntegratedGradients
                                          : ExplainMethod::Both;
      explain(ex, out);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace dggx::cli
