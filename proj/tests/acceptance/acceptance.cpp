// Runs the eight acceptance criteria and prints one PASS/FAIL line each.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "jcapa/attention.hpp"
#include "jcapa/augment.hpp"
#include "jcapa/experiment.hpp"
#include "jcapa/metrics.hpp"
#include "jcapa/network.hpp"
#include "jcapa/phantom.hpp"
#include "oracles.hpp"

using namespace jcapa;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const std::string kCli = JCAPA_CLI_PATH;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("jcapa_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::array<Shape, 3> kAttentionShapes{Shape{1, 8, 4, 4}, Shape{2, 16, 8, 8}, Shape{1, 64, 8, 8}};

// 1. γ = 0 makes CAM and PAM exact identities.
Outcome gamma_identity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    const Shape& s = kAttentionShapes[static_cast<std::size_t>(i % 3)];
    const Tensor x = oracle::random_tensor(s, rng, -3.0f, 3.0f);
    const auto cam = CamParams::init(s[1], rng);
    const auto pam = PamParams::init(s[1], rng);
    if (cam.gamma.item() != 0.0f || pam.gamma.item() != 0.0f) ++mismatches;
    if (!oracle::bitwise_equal(cam_forward(x, cam), x)) ++mismatches;
    if (!oracle::bitwise_equal(pam_forward(x, pam), x)) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0,
          "100 inputs, " + std::to_string(mismatches) + " non-identical outputs, " + fmt("%.2f s", secs) +
              " (limit 5 s)"};
}

// 2. Finite-difference gradient suite through the CLI.
Outcome gradient_suite() {
  const auto t0 = Clock::now();
  const auto r = testing::run_cli(kCli, "gradcheck --seed 7");
  const double secs = seconds_since(t0);
  int checks = 0, failed = 0;
  std::istringstream is(r.output);
  for (std::string line; std::getline(is, line);) {
    if (line.find(" ok ") != std::string::npos) ++checks;
    if (line.find(" FAIL ") != std::string::npos) {
      ++checks;
      ++failed;
      std::printf("    %s\n", line.c_str());
    }
  }
  return {r.exit_code == 0 && failed == 0 && checks > 0 && secs < 60.0,
          std::to_string(checks) + " checks, " + std::to_string(failed) + " failed, exit " +
              std::to_string(r.exit_code) + ", " + fmt("%.1f s", secs) + " (limit 60 s)"};
}

// 3. Every attention matrix is row-stochastic.
Outcome row_stochastic() {
  std::mt19937_64 rng(103);
  NetworkConfig cfg;
  const ModelState model = ModelState::create(cfg, Variant::kFull, 103);
  double worst_cam = 0, worst_pam = 0, worst_self = 0;
  std::size_t cam_n = 0, pam_n = 0, self_n = 0;
  std::set<std::int64_t> pam_sizes;
  for (int i = 0; i < 100; ++i) {
    const Shape& s = kAttentionShapes[static_cast<std::size_t>(i % 3)];
    const Tensor x = oracle::random_tensor(s, rng, -3.0f, 3.0f);
    AttentionTrace trace;
    auto cam = CamParams::init(s[1], rng);
    auto pam = PamParams::init(s[1], rng);
    cam_forward(x, cam, &trace);
    pam_forward(x, pam, &trace);
    AttentionTrace net;
    {
      NoGradGuard g;
      forward(oracle::random_tensor({1, 1, 64, 64}, rng, 0.0f, 1.0f), model, &net);
    }
    for (auto* t : {&trace, &net}) {
      for (const auto& a : t->channel) worst_cam = std::max(worst_cam, oracle::worst_row_sum_error(a)), ++cam_n;
      for (const auto& a : t->pyramid) {
        worst_pam = std::max(worst_pam, oracle::worst_row_sum_error(a));
        pam_sizes.insert(a.dims().back());
        ++pam_n;
      }
      for (const auto& a : t->self_attention) worst_self = std::max(worst_self, oracle::worst_row_sum_error(a)), ++self_n;
    }
  }
  std::string sizes;
  for (auto n : pam_sizes) sizes += (sizes.empty() ? "" : "/") + std::to_string(n);
  const double worst = std::max({worst_cam, worst_pam, worst_self});
  return {worst <= 1e-5 && cam_n > 0 && pam_n > 0 && self_n > 0,
          "max |row sum - 1|: cam " + fmt("%.2e", worst_cam) + " (" + std::to_string(cam_n) + " matrices), pam " +
              fmt("%.2e", worst_pam) + " (" + std::to_string(pam_n) + ", N_s " + sizes + "), self " +
              fmt("%.2e", worst_self) + " (" + std::to_string(self_n) + "); tol 1e-5"};
}

// 4. Dice and HD95 against brute force.
//
// The 4×4 enumeration visits every pair up to the joint dihedral symmetries
// of the grid and the P/G swap: the prediction ranges over orbit
// representatives and the ground truth over every mask whose representative
// is not smaller. Both metrics are invariant under those maps, so every
// unordered pair class is checked.
Outcome metric_oracle() {
  const auto t0 = Clock::now();
  constexpr int kN = 4;
  auto sym = [](int mask, int s) {
    int out = 0;
    for (int y = 0; y < kN; ++y) {
      for (int x = 0; x < kN; ++x) {
        if (!((mask >> (y * kN + x)) & 1)) continue;
        int yy = y, xx = x;
        if (s & 1) xx = kN - 1 - xx;
        if (s & 2) yy = kN - 1 - yy;
        if (s & 4) std::swap(yy, xx);
        out |= 1 << (yy * kN + xx);
      }
    }
    return out;
  };
  std::vector<int> masks;
  for (int m = 0; m < (1 << 16); ++m) {
    if (std::popcount(static_cast<unsigned>(m)) <= 6) masks.push_back(m);
  }
  std::vector<int> canon(1 << 16, 0);
  std::vector<LabelMap> maps(1 << 16);
  std::vector<std::vector<oracle::Voxel>> bnd(1 << 16);
  for (int m : masks) {
    int c = m;
    for (int s = 1; s < 8; ++s) c = std::min(c, sym(m, s));
    canon[static_cast<std::size_t>(m)] = c;
    LabelMap lm = LabelMap::zeros({kN, kN});
    for (int i = 0; i < kN * kN; ++i) lm.data[static_cast<std::size_t>(i)] = (m >> i) & 1;
    bnd[static_cast<std::size_t>(m)] = oracle::brute_boundary(lm, 1);
    maps[static_cast<std::size_t>(m)] = std::move(lm);
  }
  const double diag = std::sqrt(2.0 * (kN - 1) * (kN - 1));
  // Same definition as oracle::brute_hd95, with boundaries precomputed.
  std::vector<double> pooled;
  auto ref_hd95 = [&](int a, int b) {
    const auto& ba = bnd[static_cast<std::size_t>(a)];
    const auto& bb = bnd[static_cast<std::size_t>(b)];
    if (ba.empty() && bb.empty()) return 0.0;
    if (ba.empty() || bb.empty()) return diag;
    pooled.clear();
    auto directed = [&](const auto& from, const auto& to) {
      for (const auto& u : from) {
        std::int64_t best = INT64_MAX;
        for (const auto& v : to) best = std::min(best, (u.y - v.y) * (u.y - v.y) + (u.x - v.x) * (u.x - v.x));
        pooled.push_back(std::sqrt(static_cast<double>(best)));
      }
    };
    directed(ba, bb);
    directed(bb, ba);
    std::sort(pooled.begin(), pooled.end());
    const double pos = 0.95 * static_cast<double>(pooled.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= pooled.size()) return pooled[lo];
    return pooled[lo] + (pos - static_cast<double>(lo)) * (pooled[lo + 1] - pooled[lo]);
  };
  auto ref_dice = [](int a, int b) {
    const int na = std::popcount(static_cast<unsigned>(a)), nb = std::popcount(static_cast<unsigned>(b));
    if (na + nb == 0) return 1.0;
    return 2.0 * std::popcount(static_cast<unsigned>(a & b)) / (na + nb);
  };

  double worst_dice = 0, worst_hd = 0;
  std::size_t pairs = 0;
  for (int a : masks) {
    if (canon[static_cast<std::size_t>(a)] != a) continue;
    for (int b : masks) {
      if (canon[static_cast<std::size_t>(b)] < a) continue;
      const auto& pa = maps[static_cast<std::size_t>(a)];
      const auto& pb = maps[static_cast<std::size_t>(b)];
      worst_dice = std::max(worst_dice, std::abs(dice(pa, pb, 1) - ref_dice(a, b)));
      worst_hd = std::max(worst_hd, std::abs(hd95(pa, pb, 1) - ref_hd95(a, b)));
      ++pairs;
    }
  }

  // The fast reference agrees with the generic one on a sample of pairs.
  std::mt19937_64 rng(104);
  std::uniform_int_distribution<std::size_t> pick(0, masks.size() - 1);
  double ref_gap = 0;
  for (int i = 0; i < 2000; ++i) {
    const int a = masks[pick(rng)], b = masks[pick(rng)];
    ref_gap = std::max(ref_gap, std::abs(ref_hd95(a, b) - oracle::brute_hd95(maps[static_cast<std::size_t>(a)],
                                                                             maps[static_cast<std::size_t>(b)], 1)));
  }

  double worst_rand = 0;
  for (int i = 0; i < 1000; ++i) {
    const LabelMap p = oracle::random_blobs(16, 16, 3, rng);
    const LabelMap g = oracle::random_blobs(16, 16, 3, rng);
    for (int c = 1; c < 3; ++c) {
      worst_rand = std::max(worst_rand, std::abs(dice(p, g, c) - oracle::brute_dice(p, g, c)));
      worst_rand = std::max(worst_rand, std::abs(hd95(p, g, c) - oracle::brute_hd95(p, g, c)));
    }
  }
  const double secs = seconds_since(t0);
  const double worst = std::max({worst_dice, worst_hd, worst_rand, ref_gap});
  return {worst <= 1e-9 && secs < 60.0,
          std::to_string(masks.size()) + " masks, " + std::to_string(pairs) +
              " 4x4 pairs up to symmetry + 1000 random 16x16 pairs; max error dice " + fmt("%.1e", worst_dice) +
              ", hd95 " + fmt("%.1e", worst_hd) + ", random " + fmt("%.1e", worst_rand) + "; " +
              fmt("%.1f s", secs) + " (limit 60 s)"};
}

// 5. CutMix record statistics and pixel provenance.
Outcome cutmix_statistics() {
  std::mt19937_64 rng(105);
  AugConfig cfg;
  std::vector<LabeledSlice> plain(8, LabeledSlice{Tensor::zeros({1, 64, 64}), LabelMap::zeros({64, 64})});
  std::size_t n = 0, out_of_range = 0, bad_count = 0;
  double sum = 0;
  while (n < 10000) {
    const auto r = cutmix_batch(plain, cfg, rng);
    if (r.records.size() != 2) ++bad_count;  // floor(0.33·8)
    for (const auto& rec : r.records) {
      out_of_range += rec.area_fraction < 0.18 || rec.area_fraction > 0.62;
      sum += rec.area_fraction;
      ++n;
    }
  }
  for (std::size_t b = 2; b <= 32; ++b) {
    std::vector<LabeledSlice> batch(b, plain[0]);
    if (cutmix_batch(batch, cfg, rng).records.size() != static_cast<std::size_t>(std::floor(0.33 * double(b)))) ++bad_count;
  }
  const double mean = sum / double(n);

  std::size_t provenance_errors = 0;
  std::uniform_int_distribution<int> cls(0, 8);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<LabeledSlice> batch;
    for (int i = 0; i < 8; ++i) {
      std::vector<float> img(64 * 64);
      for (std::size_t p = 0; p < img.size(); ++p) img[p] = static_cast<float>(i * 10000 + static_cast<int>(p));
      LabelMap lbl = LabelMap::zeros({64, 64});
      for (auto& v : lbl.data) v = static_cast<std::uint8_t>(cls(rng));
      batch.push_back({Tensor({1, 64, 64}, std::move(img)), std::move(lbl)});
    }
    const auto r = cutmix_batch(batch, cfg, rng);
    std::vector<const CutMixRecord*> rec(8, nullptr);
    for (const auto& x : r.records) {
      if (rec[x.target_index] || x.donor_index == x.target_index) ++provenance_errors;
      rec[x.target_index] = &x;
    }
    for (std::size_t i = 0; i < 8; ++i) {
      for (std::int64_t p = 0; p < 64 * 64; ++p) {
        const auto y = p / 64, x = p % 64;
        const auto* q = rec[i];
        const bool inside = q && x >= q->x0 && x < q->x0 + q->width && y >= q->y0 && y < q->y0 + q->height;
        const std::size_t src = inside ? q->donor_index : i;
        const auto k = static_cast<std::size_t>(p);
        if (r.batch[i].image.data()[k] != batch[src].image.data()[k] || r.batch[i].label.data[k] != batch[src].label.data[k]) {
          ++provenance_errors;
        }
      }
    }
  }
  return {out_of_range == 0 && mean >= 0.37 && mean <= 0.43 && bad_count == 0 && provenance_errors == 0,
          std::to_string(n) + " records, " + std::to_string(out_of_range) + " outside [0.18, 0.62], mean " +
              fmt("%.4f", mean) + " (want [0.37, 0.43]), " + std::to_string(bad_count) + " wrong target counts, " +
              std::to_string(provenance_errors) + " provenance errors over 100 batches"};
}

// 6. The full model overfits eight phantom slices.
Outcome overfit() {
  const auto t0 = Clock::now();
  PhantomConfig pc;  // 64×64, K = 9
  const auto scan = generate_phantom_scan(2024, 0, pc);
  RunConfig cfg;
  cfg.seed = 7;
  cfg.variant = Variant::kFull;
  cfg.batch_size = 8;
  cfg.epochs = 300;  // one batch per epoch: 300 iterations
  cfg.base_lr = 0.05;
  TrainSummary summary;
  const ModelState model = train_model(scan.slices, {}, cfg, {}, &summary);
  std::vector<LabelMap> pred, gt;
  for (const auto& s : scan.slices) {
    pred.push_back(predict_slice(model, s.image));
    gt.push_back(s.label);
  }
  const MetricReport report = evaluate_volume(pred, gt, 9);
  const double secs = seconds_since(t0);
  return {report.mean_dice >= 0.90 && report.mean_hd95 <= 5.0 && summary.iterations <= 500 && secs <= 600.0,
          std::to_string(summary.iterations) + " iterations, loss " + fmt("%.4f", summary.first_loss) + " -> " +
              fmt("%.4f", summary.last_loss) + ", mean dice " + fmt("%.4f", report.mean_dice) + " (want >= 0.90), mean hd95 " +
              fmt("%.3f", report.mean_hd95) + " px (want <= 5.0), " + fmt("%.0f s", secs) + " (limit 600 s)"};
}

std::string tiny_run_config(const fs::path& data, const fs::path& out) {
  return R"({"data_dir": ")" + data.string() + R"(", "out_dir": ")" + out.string() +
         R"(", "seed": 7, "epochs": 2, "batch_size": 2, "base_lr": 0.01,)"
         R"( "model": {"base_channels": 8, "image_size": 32, "num_classes": 9}})";
}

bool tiny_dataset(const fs::path& dir) {
  return testing::run_cli(kCli, "generate-data --seed 11 --scans 4 --slices 2 --size 32 --out '" + dir.string() + "'")
             .exit_code == 0;
}

// 7. One ablate command yields all six variant rows.
Outcome ablation() {
  const fs::path root = scratch("ablate");
  if (!tiny_dataset(root / "data")) return {false, "generate-data failed"};
  testing::write_text(root / "cfg.json", tiny_run_config(root / "data", root / "out"));
  const auto r = testing::run_cli(kCli, "ablate --config '" + (root / "cfg.json").string() + "'");
  if (r.exit_code != 0) return {false, "ablate exited " + std::to_string(r.exit_code) + ": " + r.output};

  std::istringstream is(testing::slurp(root / "out" / "ablation.csv"));
  std::string line, names, ordering;
  std::getline(is, line);
  bool ok = line == "variant,mean_dice,mean_hd95";
  std::size_t row = 0;
  while (std::getline(is, line)) {
    const auto c1 = line.find(','), c2 = line.rfind(',');
    if (row >= std::size(kAllVariants) || c1 == std::string::npos || c1 == c2) {
      ok = false;
      break;
    }
    const std::string name = line.substr(0, c1);
    const double d = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    const double h = std::stod(line.substr(c2 + 1));
    ok = ok && name == variant_name(kAllVariants[row]) && std::isfinite(d) && std::isfinite(h);
    names += (names.empty() ? "" : " ") + name + "(" + fmt("%.3f", d) + ")";
    ++row;
  }
  ok = ok && row == std::size(kAllVariants);
  std::istringstream out(r.output);
  while (std::getline(out, line)) {
    if (line.starts_with("ordering")) ordering = line;
  }
  fs::remove_all(root);
  return {ok, std::to_string(row) + " rows: " + names + "; " + ordering + " (reported, not asserted)"};
}

// 8. Two identical training runs are byte-identical.
Outcome determinism() {
  const fs::path root = scratch("determinism");
  if (!tiny_dataset(root / "data")) return {false, "generate-data failed"};
  for (const char* run : {"a", "b"}) {
    testing::write_text(root / (std::string(run) + ".json"), tiny_run_config(root / "data", root / run));
    const auto r = testing::run_cli(kCli, "train --seed 7 --config '" + (root / (std::string(run) + ".json")).string() + "'");
    if (r.exit_code != 0) return {false, "train exited " + std::to_string(r.exit_code) + ": " + r.output};
  }
  std::vector<fs::path> files{"train_log.csv", "best.jckp"};
  for (const auto& e : fs::directory_iterator(root / "a" / "checkpoints")) files.push_back(fs::path("checkpoints") / e.path().filename());
  std::size_t differing = 0;
  for (const auto& f : files) {
    const std::string a = testing::slurp(root / "a" / f), b = testing::slurp(root / "b" / f);
    if (a.empty() || a != b) {
      ++differing;
      std::printf("    differs: %s\n", f.string().c_str());
    }
  }
  fs::remove_all(root);
  return {differing == 0 && files.size() >= 4,
          std::to_string(files.size()) + " files compared, " + std::to_string(differing) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gamma-identity", gamma_identity},  {"gradient-suite", gradient_suite},
      {"attention-rows-stochastic", row_stochastic}, {"metric-oracle", metric_oracle},
      {"cutmix-statistics", cutmix_statistics}, {"overfit-convergence", overfit},
      {"ablation-rows", ablation},         {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
