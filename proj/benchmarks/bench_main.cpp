#include <benchmark/benchmark.h>

#include <random>

#include "jcapa/attention.hpp"
#include "jcapa/metrics.hpp"
#include "jcapa/network.hpp"
#include "jcapa/ops.hpp"
#include "jcapa/optimizer.hpp"
#include "jcapa/phantom.hpp"

using namespace jcapa;

namespace {

Tensor random_tensor(const Shape& dims, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(static_cast<std::size_t>(shape_numel(dims)));
  for (auto& x : v) x = dist(rng);
  return Tensor(dims, std::move(v));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = state.range(0);
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

void BM_Conv3x3(benchmark::State& state) {
  const auto c = state.range(0), hw = state.range(1);
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({8, c, hw, hw}, rng), w = random_tensor({c, c, 3, 3}, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(ops::conv2d(x, w, Tensor(), 1, 1));
}
BENCHMARK(BM_Conv3x3)->Args({16, 32})->Args({64, 8});

void BM_Cam(benchmark::State& state) {
  const auto c = state.range(0);
  std::mt19937_64 rng(3);
  const Tensor x = random_tensor({8, c, 8, 8}, rng);
  const auto p = CamParams::init(c, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(cam_forward(x, p));
}
BENCHMARK(BM_Cam)->Arg(16)->Arg(64);

void BM_Pam(benchmark::State& state) {
  const auto hw = state.range(0);
  std::mt19937_64 rng(4);
  const Tensor x = random_tensor({8, 16, hw, hw}, rng);
  const auto p = PamParams::init(16, rng);
  NoGradGuard g;
  for (auto _ : state) benchmark::DoNotOptimize(pam_forward(x, p));
}
BENCHMARK(BM_Pam)->Arg(16)->Arg(32);

void BM_Hd95(benchmark::State& state) {
  PhantomConfig pc;
  pc.scans = 2;
  const auto scans = generate_phantoms(5, pc);
  const LabelMap p = stack_labels({scans[0].slices[0].label, scans[0].slices[1].label});
  const LabelMap q = stack_labels({scans[1].slices[0].label, scans[1].slices[1].label});
  for (auto _ : state) benchmark::DoNotOptimize(hd95(p, q, 1));
}
BENCHMARK(BM_Hd95);

void BM_TrainStep(benchmark::State& state) {
  const auto variant = static_cast<Variant>(state.range(0));
  NetworkConfig cfg;
  ModelState model = ModelState::create(cfg, variant, 6);
  Sgd opt(model.parameter_list());
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({8, 1, 64, 64}, rng);
  LabelMap y = LabelMap::zeros({8, 64, 64});
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = static_cast<std::uint8_t>(i % 9);
  for (auto _ : state) {
    opt.zero_grad();
    Tensor loss = segmentation_loss(forward(x, model), y);
    backward(loss);
    opt.step(0.01);
  }
  state.SetLabel(std::string(variant_name(variant)));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(Variant::kBaseline))
    ->Arg(static_cast<int>(Variant::kFull))
    ->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
