#pragma once

#include <cstdint>
#include <vector>

#include "jcapa/tensor.hpp"

namespace jcapa {

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 1e-4;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   v ← μ·v + (g + λ·w);  w ← w − lr·v
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, SgdOptions options = {});

  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<float>> velocity_;
  SgdOptions options_;
};

/// base·(1 − iter/max_iter)^power.
double poly_lr(double base, std::int64_t iter, std::int64_t max_iter, double power = 0.9);

}  // namespace jcapa
