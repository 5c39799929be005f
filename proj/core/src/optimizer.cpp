#include "jcapa/optimizer.hpp"

#include <cmath>

namespace jcapa {

Sgd::Sgd(std::vector<Tensor> params, SgdOptions options)
    : params_(std::move(params)), options_(options) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_) velocity_.emplace_back(static_cast<std::size_t>(p.numel()), 0.0f);
}

void Sgd::step(double lr) {
  const auto mu = static_cast<float>(options_.momentum);
  const auto wd = static_cast<float>(options_.weight_decay);
  const auto rate = static_cast<float>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    auto w = p.mutable_data();
    auto& v = velocity_[i];
    const bool has_grad = p.has_grad();
    const auto g = p.grad();
    for (std::size_t j = 0; j < w.size(); ++j) {
      const float grad = (has_grad ? g[j] : 0.0f) + wd * w[j];
      v[j] = mu * v[j] + grad;
      w[j] -= rate * v[j];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double poly_lr(double base, std::int64_t iter, std::int64_t max_iter, double power) {
  if (max_iter <= 0) return base;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return base * std::pow(frac > 0.0 ? frac : 0.0, power);
}

}  // namespace jcapa
