#include "jcapa/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "config_json.hpp"
#include "jcapa/error.hpp"
#include "jcapa/io.hpp"
#include "jcapa/ops.hpp"
#include "jcapa/optimizer.hpp"

namespace jcapa {
namespace {

using detail::Json;

template <typename T>
void read_field(const Json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string format_double(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

// Stacks 1×H×W images into B×1×H×W and H×W labels into B×H×W.
void collate(const std::vector<LabeledSlice>& batch, Tensor& images, LabelMap& labels) {
  const auto& first = batch.front();
  const auto h = first.image.dim(1);
  const auto w = first.image.dim(2);
  std::vector<float> x;
  std::vector<std::uint8_t> y;
  x.reserve(batch.size() * static_cast<std::size_t>(h * w));
  y.reserve(batch.size() * static_cast<std::size_t>(h * w));
  for (const auto& s : batch) {
    x.insert(x.end(), s.image.data().begin(), s.image.data().end());
    y.insert(y.end(), s.label.data.begin(), s.label.data.end());
  }
  const auto b = static_cast<std::int64_t>(batch.size());
  images = Tensor({b, 1, h, w}, std::move(x));
  labels = LabelMap({b, h, w}, std::move(y));
}

void check_slices(const std::vector<LabeledSlice>& slices, const NetworkConfig& model,
                  const std::string& what) {
  for (std::size_t i = 0; i < slices.size(); ++i) {
    const auto& s = slices[i];
    if (s.image.dims() != Shape{model.in_channels, model.image_size, model.image_size}) {
      throw ValidationError(what + " slice " + std::to_string(i) + " has image shape " +
                            shape_str(s.image.dims()) + ", model expects " +
                            shape_str({model.in_channels, model.image_size, model.image_size}));
    }
    for (auto v : s.label.data) {
      if (v >= model.num_classes) {
        throw ValidationError(what + " slice " + std::to_string(i) + " has label " +
                              std::to_string(v) + " >= num_classes " +
                              std::to_string(model.num_classes));
      }
    }
  }
}

std::vector<LabeledSlice> flatten(const std::vector<PhantomScan>& scans) {
  std::vector<LabeledSlice> out;
  for (const auto& scan : scans) out.insert(out.end(), scan.slices.begin(), scan.slices.end());
  return out;
}

std::vector<PhantomScan> read_scans(const std::filesystem::path& dir,
                                    const std::vector<std::int64_t>& ids) {
  std::vector<PhantomScan> scans;
  for (auto id : ids) scans.push_back(read_scan(dir, id));
  return scans;
}

}  // namespace

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(base_lr > 0.0) || !std::isfinite(base_lr)) throw ConfigError("base_lr must be positive");
  if (model.in_channels != 1) throw ConfigError("model.in_channels must be 1 for slice data");
  model.validate();
  aug.validate();
}

std::string RunConfig::to_json() const {
  Json j;
  j["data_dir"] = data_dir.string();
  j["out_dir"] = out_dir.string();
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["base_lr"] = base_lr;
  j["model"] = detail::to_json(model);
  j["aug"] = detail::to_json(aug);
  j["variant"] = std::string(variant_name(variant));
  return j.dump(2) + "\n";
}

RunConfig RunConfig::from_json(const std::string& text, const std::string& source) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(source + ": " + e.what());
  }
  detail::reject_unknown_keys(j,
                              {"data_dir", "out_dir", "seed", "epochs", "batch_size", "base_lr",
                               "model", "aug", "variant"},
                              source);
  RunConfig c;
  std::string data_dir = c.data_dir.string();
  std::string out_dir = c.out_dir.string();
  std::string variant(variant_name(c.variant));
  read_field(j, "data_dir", data_dir, source);
  read_field(j, "out_dir", out_dir, source);
  read_field(j, "seed", c.seed, source);
  read_field(j, "epochs", c.epochs, source);
  read_field(j, "batch_size", c.batch_size, source);
  read_field(j, "base_lr", c.base_lr, source);
  read_field(j, "variant", variant, source);
  c.data_dir = data_dir;
  c.out_dir = out_dir;
  c.variant = parse_variant(variant);
  if (auto it = j.find("model"); it != j.end()) c.model = detail::network_config_from_json(*it);
  if (auto it = j.find("aug"); it != j.end()) c.aug = detail::aug_config_from_json(*it);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  return from_json(std::string(bytes.begin(), bytes.end()), path.string());
}

ModelState train_model(const std::vector<LabeledSlice>& train, const std::vector<LabeledSlice>& val,
                       const RunConfig& cfg, const TrainHooks& hooks, TrainSummary* summary) {
  cfg.validate();
  if (train.empty()) throw ValidationError("no training slices");
  check_slices(train, cfg.model, "training");
  check_slices(val, cfg.model, "validation");

  ModelState model = ModelState::create(cfg.model, cfg.variant, cfg.seed);
  Sgd optimizer(model.parameter_list());

  std::seed_seq order_seq{cfg.seed, std::uint64_t{1}};
  std::mt19937_64 order_rng(order_seq);
  std::seed_seq aug_seq{cfg.seed, cfg.aug.rng_seed, std::uint64_t{2}};
  std::mt19937_64 aug_rng(aug_seq);

  const auto n = static_cast<std::int64_t>(train.size());
  const auto batch = std::min(cfg.batch_size, n);
  const auto per_epoch = (n + batch - 1) / batch;
  const auto total = per_epoch * cfg.epochs;
  const bool cutmix = variant_uses_cutmix(cfg.variant);

  std::vector<std::size_t> order(train.size());
  std::int64_t iter = 0;
  TrainSummary local;
  for (std::int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::int64_t start = 0; start < n; start += batch) {
      const auto end = std::min(start + batch, n);
      std::vector<LabeledSlice> members;
      for (auto i = start; i < end; ++i) members.push_back(train[order[static_cast<std::size_t>(i)]]);
      const CutMixResult aug = augment_batch(members, cfg.aug, cutmix, aug_rng);

      Tensor images;
      LabelMap labels;
      collate(aug.batch, images, labels);
      const double lr = poly_lr(cfg.base_lr, iter, total);
      optimizer.zero_grad();
      Tensor loss = segmentation_loss(forward(images, model), labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        Tape::current().clear();
        std::string indices;
        for (auto i = start; i < end; ++i) {
          indices += (indices.empty() ? "" : ",") + std::to_string(order[static_cast<std::size_t>(i)]);
        }
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", iteration " +
                           std::to_string(iter) + "; batch slice indices [" + indices + "]");
      }
      backward(loss);
      optimizer.step(lr);
      if (iter == 0) local.first_loss = value;
      local.last_loss = value;
      ++iter;
      if (hooks.on_iteration) hooks.on_iteration(epoch, iter, value, lr);
    }
    if (hooks.on_epoch) {
      const double val_dice =
          val.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_dice_on(model, val);
      hooks.on_epoch(epoch, model, val_dice);
    }
  }
  local.iterations = iter;
  if (summary) *summary = local;
  return model;
}

LabelMap predict_slice(const ModelState& model, const Tensor& image) {
  if (image.rank() != 3) throw ShapeError("predict_slice expects 1×H×W, got " + shape_str(image.dims()));
  NoGradGuard guard;
  Tensor x = ops::reshape(image, {1, image.dim(0), image.dim(1), image.dim(2)});
  LabelMap batch = argmax_labels(forward(x, model));
  return LabelMap({batch.dims[1], batch.dims[2]}, std::move(batch.data));
}

double mean_dice_on(const ModelState& model, const std::vector<LabeledSlice>& slices) {
  std::vector<LabelMap> pred;
  std::vector<LabelMap> gt;
  for (const auto& s : slices) {
    pred.push_back(predict_slice(model, s.image));
    gt.push_back(s.label);
  }
  const LabelMap p = stack_labels(pred);
  const LabelMap g = stack_labels(gt);
  const int k = static_cast<int>(model.config().num_classes);
  double total = 0.0;
  for (int c = 1; c < k; ++c) total += dice(p, g, c);
  return total / static_cast<double>(k - 1);
}

MetricReport evaluate_model(const ModelState& model, const std::vector<PhantomScan>& scans) {
  std::vector<ScanLabels> labels;
  for (const auto& scan : scans) {
    check_slices(scan.slices, model.config(), "scan " + std::to_string(scan.scan_id));
    ScanLabels s;
    for (const auto& slice : scan.slices) {
      s.pred.push_back(predict_slice(model, slice.image));
      s.gt.push_back(slice.label);
    }
    labels.push_back(std::move(s));
  }
  return evaluate_scans(labels, static_cast<int>(model.config().num_classes));
}

DatasetSplit run_generate_data(const std::filesystem::path& out, const GenerateDataOptions& opts) {
  opts.phantoms.validate();
  if (opts.phantoms.scans < 2) {
    throw ConfigError("--scans must be >= 2 so the data can be split, got " +
                      std::to_string(opts.phantoms.scans));
  }
  namespace fs = std::filesystem;
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw IoError(out.string() + " exists and is not a directory");
    if (!fs::is_empty(out)) {
      if (!opts.force) {
        throw ValidationError(out.string() + " is not empty; pass --force to overwrite");
      }
      std::error_code ec;
      fs::remove_all(out / "scans", ec);
      if (ec) throw IoError("cannot clear " + (out / "scans").string() + ": " + ec.message());
      fs::remove(out / "split.json", ec);
    }
  }
  const auto scans = generate_phantoms(opts.seed, opts.phantoms);
  std::vector<std::int64_t> ids;
  for (const auto& s : scans) ids.push_back(s.scan_id);
  const DatasetSplit split = split_dataset(ids, opts.seed);
  write_dataset(out, scans, split);
  return split;
}

TrainArtifacts run_train(const RunConfig& cfg) {
  cfg.validate();
  const DatasetSplit split = read_split(cfg.data_dir);
  std::vector<LabeledSlice> all = flatten(read_scans(cfg.data_dir, split.train_ids));

  // Seed-derived 10% hold-out for best-checkpoint selection.
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::seed_seq holdout_seq{cfg.seed, std::uint64_t{3}};
  std::mt19937_64 holdout_rng(holdout_seq);
  std::shuffle(idx.begin(), idx.end(), holdout_rng);
  const std::size_t n_val = all.size() >= 2 ? std::max<std::size_t>(1, all.size() / 10) : 0;
  std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::sort(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::vector<LabeledSlice> val;
  std::vector<LabeledSlice> train;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? val : train).push_back(all[idx[i]]);

  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(cfg.out_dir / "checkpoints", ec);
  if (ec) throw IoError("cannot create " + cfg.out_dir.string() + ": " + ec.message());
  write_text(cfg.out_dir / "config.resolved.json", cfg.to_json());

  TrainArtifacts artifacts;
  artifacts.log_csv = cfg.out_dir / "train_log.csv";
  artifacts.best_checkpoint = cfg.out_dir / "best.jckp";
  artifacts.best_val_dice = -1.0;
  std::string log = "epoch,iter,loss,lr\n";

  TrainHooks hooks;
  hooks.on_iteration = [&log](std::int64_t epoch, std::int64_t iter, double loss, double lr) {
    log += std::to_string(epoch) + "," + std::to_string(iter) + "," +
           format_double("%.9g", loss) + "," + format_double("%.9g", lr) + "\n";
  };
  hooks.on_epoch = [&](std::int64_t epoch, const ModelState& model, double val_dice) {
    write_text(artifacts.log_csv, log);
    const auto path = cfg.out_dir / "checkpoints" / ("epoch_" + std::to_string(epoch) + ".jckp");
    io::save_checkpoint(path, model);
    artifacts.epoch_checkpoints.push_back(path);
    // Without a validation set the latest epoch is kept.
    const double score = std::isnan(val_dice) ? static_cast<double>(epoch) : val_dice;
    if (score > artifacts.best_val_dice) {
      artifacts.best_val_dice = score;
      artifacts.best_epoch = epoch;
      io::save_checkpoint(artifacts.best_checkpoint, model);
    }
  };
  try {
    train_model(train, val, cfg, hooks);
  } catch (const NumericError&) {
    write_text(artifacts.log_csv, log);
    throw;
  }
  if (n_val == 0) artifacts.best_val_dice = std::numeric_limits<double>::quiet_NaN();
  return artifacts;
}

MetricReport run_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint) {
  cfg.validate();
  const ModelState model = io::load_checkpoint(checkpoint, cfg.model, cfg.variant);
  const DatasetSplit split = read_split(cfg.data_dir);
  const MetricReport report = evaluate_model(model, read_scans(cfg.data_dir, split.test_ids));
  write_text(cfg.out_dir / "metrics.csv", report.to_csv());
  return report;
}

void run_predict(const std::filesystem::path& input, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out) {
  const ModelState model = io::load_checkpoint(checkpoint);
  const Tensor image = io::read_tensor(input);
  const auto& d = image.dims();
  LabelMap mask;
  if (d.size() == 2) {
    mask = predict_slice(model, ops::reshape(image, {1, d[0], d[1]}));
  } else if (d.size() == 3 && d[0] == 1) {
    mask = predict_slice(model, image);
  } else if (d.size() == 4 && d[1] == 1) {
    std::vector<LabelMap> slices;
    const auto plane = static_cast<std::size_t>(d[2] * d[3]);
    for (std::int64_t b = 0; b < d[0]; ++b) {
      const auto begin = image.data().begin() + static_cast<std::ptrdiff_t>(b * plane);
      Tensor one({1, d[2], d[3]}, std::vector<float>(begin, begin + static_cast<std::ptrdiff_t>(plane)));
      slices.push_back(predict_slice(model, one));
    }
    mask = stack_labels(slices);
  } else {
    throw ShapeError(input.string() + ": expected H×W, 1×H×W or B×1×H×W, got " + shape_str(d));
  }
  io::write_label_map(out, mask);
}

std::vector<CutMixRecord> run_augment_preview(const std::filesystem::path& out,
                                              const AugmentPreviewOptions& opts) {
  if (opts.count < 1) throw ConfigError("augment-preview needs count >= 1");
  PhantomConfig pc;
  pc.slices_per_scan = 8;
  pc.scans = (opts.count + pc.slices_per_scan - 1) / pc.slices_per_scan;
  std::vector<LabeledSlice> batch = flatten(generate_phantoms(opts.seed, pc));
  batch.resize(static_cast<std::size_t>(opts.count));

  std::seed_seq seq{opts.seed, opts.aug.rng_seed, std::uint64_t{2}};
  std::mt19937_64 rng(seq);
  const CutMixResult result = augment_batch(batch, opts.aug, true, rng);

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto stem = std::to_string(i);
    io::write_tensor(out / ("before_" + stem + ".img.jcpt"), batch[i].image);
    io::write_label_map(out / ("before_" + stem + ".lbl.jcpt"), batch[i].label);
    io::write_tensor(out / ("after_" + stem + ".img.jcpt"), result.batch[i].image);
    io::write_label_map(out / ("after_" + stem + ".lbl.jcpt"), result.batch[i].label);
  }
  std::string csv = "target_index,donor_index,x0,y0,width,height,area_fraction,aspect\n";
  for (const auto& r : result.records) {
    csv += std::to_string(r.target_index) + "," + std::to_string(r.donor_index) + "," +
           std::to_string(r.x0) + "," + std::to_string(r.y0) + "," + std::to_string(r.width) + "," +
           std::to_string(r.height) + "," + format_double("%.6f", r.area_fraction) + "," +
           format_double("%.6f", r.aspect) + "\n";
  }
  write_text(out / "cutmix_records.csv", csv);
  return result.records;
}

std::vector<AblationRow> run_ablate(const RunConfig& cfg) {
  cfg.validate();
  std::vector<AblationRow> rows;
  std::string csv = "variant,mean_dice,mean_hd95\n";
  for (Variant v : kAllVariants) {
    RunConfig sub = cfg;
    sub.variant = v;
    sub.out_dir = cfg.out_dir / std::string(variant_name(v));
    const TrainArtifacts artifacts = run_train(sub);
    const MetricReport report = run_evaluate(sub, artifacts.best_checkpoint);
    rows.push_back({v, report.mean_dice, report.mean_hd95});
    csv += std::string(variant_name(v)) + "," + format_double("%.6f", report.mean_dice) + "," +
           format_double("%.6f", report.mean_hd95) + "\n";
  }
  write_text(cfg.out_dir / "ablation.csv", csv);
  return rows;
}

}  // namespace jcapa
