#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "jcapa/augment.hpp"
#include "jcapa/dataset.hpp"
#include "jcapa/metrics.hpp"
#include "jcapa/network.hpp"

namespace jcapa {

/// Training/evaluation run description, read from JSON. Unknown keys are
/// rejected; to_json() materializes every default.
struct RunConfig {
  std::filesystem::path data_dir = "data";
  std::filesystem::path out_dir = "runs/default";
  std::uint64_t seed = 0;
  std::int64_t epochs = 30;
  std::int64_t batch_size = 8;
  double base_lr = 0.01;
  NetworkConfig model;
  AugConfig aug;
  Variant variant = Variant::kFull;

  void validate() const;
  std::string to_json() const;
  static RunConfig from_json(const std::string& text, const std::string& source = "config");
  static RunConfig load(const std::filesystem::path& path);
};

struct TrainHooks {
  // Called after every optimizer step.
  std::function<void(std::int64_t epoch, std::int64_t iter, double loss, double lr)> on_iteration;
  // Called after every epoch; val_dice is NaN when there is no validation set.
  std::function<void(std::int64_t epoch, const ModelState& model, double val_dice)> on_epoch;
};

struct TrainSummary {
  std::int64_t iterations = 0;
  double first_loss = 0.0;
  double last_loss = 0.0;
};

/// Trains a fresh model for cfg.epochs passes over `train`. Each epoch visits
/// the slices in a seeded shuffled order in batches of cfg.batch_size (the
/// last batch may be short). The learning rate follows the poly schedule
/// over the total iteration count. A non-finite loss throws NumericError
/// naming the epoch, iteration and slice indices of the batch.
ModelState train_model(const std::vector<LabeledSlice>& train, const std::vector<LabeledSlice>& val,
                       const RunConfig& cfg, const TrainHooks& hooks = {},
                       TrainSummary* summary = nullptr);

/// Argmax label map (H×W) for one 1×H×W image.
LabelMap predict_slice(const ModelState& model, const Tensor& image);

/// Foreground mean Dice of slice-wise predictions, pooled over `slices`.
double mean_dice_on(const ModelState& model, const std::vector<LabeledSlice>& slices);

MetricReport evaluate_model(const ModelState& model, const std::vector<PhantomScan>& scans);

// Command implementations. Each writes its artifacts and returns a summary;
// errors surface as jcapa::Error subclasses.

struct GenerateDataOptions {
  std::uint64_t seed = 0;
  PhantomConfig phantoms;
  bool force = false;
};
DatasetSplit run_generate_data(const std::filesystem::path& out, const GenerateDataOptions& opts);

struct TrainArtifacts {
  std::filesystem::path log_csv;
  std::filesystem::path best_checkpoint;
  std::vector<std::filesystem::path> epoch_checkpoints;
  double best_val_dice = 0.0;
  std::int64_t best_epoch = 0;
};
/// Writes config.resolved.json, train_log.csv ("epoch,iter,loss,lr"),
/// checkpoints/epoch_<e>.jckp and best.jckp under cfg.out_dir. 10% of the
/// training slices (at least one when there are two or more) are held out
/// for best-checkpoint selection.
TrainArtifacts run_train(const RunConfig& cfg);

/// Evaluates on the test split and writes out_dir/metrics.csv.
MetricReport run_evaluate(const RunConfig& cfg, const std::filesystem::path& checkpoint);

/// Reads a float32 JCPT image (H×W, 1×H×W or B×1×H×W) and writes the uint8
/// argmax mask (H×W or B×H×W).
void run_predict(const std::filesystem::path& input, const std::filesystem::path& checkpoint,
                 const std::filesystem::path& out);

struct AugmentPreviewOptions {
  std::uint64_t seed = 0;
  std::int64_t count = 8;
  AugConfig aug;
};
/// Draws `count` phantom slices, augments them as one training batch and
/// writes before_<i>/after_<i> image and label files plus cutmix_records.csv.
std::vector<CutMixRecord> run_augment_preview(const std::filesystem::path& out,
                                              const AugmentPreviewOptions& opts);

struct AblationRow {
  Variant variant;
  double mean_dice = 0.0;
  double mean_hd95 = 0.0;
};
/// Trains and evaluates all six variants with cfg's seed, each under
/// out_dir/<variant>/, and writes out_dir/ablation.csv.
std::vector<AblationRow> run_ablate(const RunConfig& cfg);

}  // namespace jcapa
