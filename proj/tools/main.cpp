#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "jcapa/error.hpp"
#include "jcapa/experiment.hpp"
#include "jcapa/gradcheck.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kNumeric = 2, kIo = 3 };

int run_gradcheck(std::uint64_t seed) {
  int failures = 0;
  for (const auto& r : jcapa::run_gradcheck_suite(seed)) {
    std::printf("%-20s %s  probes=%zu relative=%zu kink_skipped=%zu worst_abs=%.3e%s%s\n",
                r.name.c_str(), r.passed ? "ok  " : "FAIL", r.checked, r.relative_checked,
                r.skipped, r.worst_abs_error, r.detail.empty() ? "" : "  ", r.detail.c_str());
    if (!r.passed) ++failures;
  }
  if (failures) {
    std::fprintf(stderr, "gradcheck: %d check(s) failed\n", failures);
    return kNumeric;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint channel + pyramid attention segmentation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate-data", "Write a synthetic phantom dataset");
  std::uint64_t gen_seed = 0;
  jcapa::GenerateDataOptions gen_opts;
  std::string gen_out;
  gen->add_option("--seed", gen_seed, "RNG seed")->required();
  gen->add_option("--scans", gen_opts.phantoms.scans, "Number of scans")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--slices", gen_opts.phantoms.slices_per_scan, "Slices per scan");
  gen->add_option("--size", gen_opts.phantoms.height, "Slice height and width");
  gen->add_option("--classes", gen_opts.phantoms.num_classes, "Classes including background");
  gen->add_flag("--force", gen_opts.force, "Overwrite a non-empty output directory");

  auto* train = app.add_subcommand("train", "Train one variant");
  std::string train_config;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "RunConfig JSON")->required();
  train->add_option("--seed", train_seed, "Override the config seed");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test split");
  std::string eval_config, eval_ckpt;
  eval->add_option("--config", eval_config, "RunConfig JSON")->required();
  eval->add_option("--checkpoint", eval_ckpt, "JCKP checkpoint")->required();

  auto* predict = app.add_subcommand("predict", "Segment one image tensor");
  std::string pred_in, pred_ckpt, pred_out;
  predict->add_option("--input", pred_in, "float32 JCPT image")->required();
  predict->add_option("--checkpoint", pred_ckpt, "JCKP checkpoint")->required();
  predict->add_option("--out", pred_out, "uint8 JCPT mask")->required();

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
  std::uint64_t grad_seed = 7;
  grad->add_option("--seed", grad_seed, "RNG seed");

  auto* preview = app.add_subcommand("augment-preview", "Write augmented example pairs");
  jcapa::AugmentPreviewOptions preview_opts;
  std::string preview_out;
  preview->add_option("--seed", preview_opts.seed, "RNG seed")->required();
  preview->add_option("--out", preview_out, "Output directory")->required();
  preview->add_option("--count", preview_opts.count, "Batch size");

  auto* ablate = app.add_subcommand("ablate", "Train and evaluate all six variants");
  std::string ablate_config;
  ablate->add_option("--config", ablate_config, "RunConfig JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      gen_opts.seed = gen_seed;
      gen_opts.phantoms.width = gen_opts.phantoms.height;
      const auto split = jcapa::run_generate_data(gen_out, gen_opts);
      std::printf("wrote %lld scans to %s (train %zu, test %zu)\n",
                  static_cast<long long>(gen_opts.phantoms.scans), gen_out.c_str(),
                  split.train_ids.size(), split.test_ids.size());
    } else if (*train) {
      auto cfg = jcapa::RunConfig::load(train_config);
      if (train_seed) cfg.seed = *train_seed;
      const auto artifacts = jcapa::run_train(cfg);
      std::printf("best epoch %lld (val dice %.4f) -> %s\n",
                  static_cast<long long>(artifacts.best_epoch), artifacts.best_val_dice,
                  artifacts.best_checkpoint.string().c_str());
    } else if (*eval) {
      const auto cfg = jcapa::RunConfig::load(eval_config);
      std::cout << jcapa::run_evaluate(cfg, eval_ckpt).to_csv();
    } else if (*predict) {
      jcapa::run_predict(pred_in, pred_ckpt, pred_out);
    } else if (*grad) {
      return run_gradcheck(grad_seed);
    } else if (*preview) {
      const auto records = jcapa::run_augment_preview(preview_out, preview_opts);
      std::printf("wrote %lld pairs and %zu CutMix records to %s\n",
                  static_cast<long long>(preview_opts.count), records.size(), preview_out.c_str());
    } else if (*ablate) {
      const auto cfg = jcapa::RunConfig::load(ablate_config);
      auto rows = jcapa::run_ablate(cfg);
      std::printf("variant,mean_dice,mean_hd95\n");
      for (const auto& r : rows) {
        std::printf("%s,%.6f,%.6f\n", std::string(jcapa::variant_name(r.variant)).c_str(),
                    r.mean_dice, r.mean_hd95);
      }
      std::stable_sort(rows.begin(), rows.end(),
                       [](const auto& a, const auto& b) { return a.mean_dice > b.mean_dice; });
      std::printf("ordering by mean_dice:");
      for (const auto& r : rows) std::printf(" %s", std::string(jcapa::variant_name(r.variant)).c_str());
      std::printf("\n");
    }
  } catch (const jcapa::NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kNumeric;
  } catch (const jcapa::IoError& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  } catch (const jcapa::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "I/O error: %s\n", e.what());
    return kIo;
  }
  return kOk;
}
