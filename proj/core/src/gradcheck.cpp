#include "jcapa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "jcapa/error.hpp"
#include "gemm.hpp"
#include "op_util.hpp"

namespace jcapa {

namespace detail {

BranchRecorder*& active_branch_recorder() {
  thread_local BranchRecorder* recorder = nullptr;
  return recorder;
}

}  // namespace detail

ReferencePrecisionGuard::ReferencePrecisionGuard() : previous_(detail::gemm_double_accumulation()) {
  detail::gemm_double_accumulation() = true;
}

ReferencePrecisionGuard::~ReferencePrecisionGuard() { detail::gemm_double_accumulation() = previous_; }

namespace {

struct Evaluation {
  double value;
  std::uint64_t branches;
};

// Finite-difference reference evaluation: records branches and sums matrix
// products in double so rounding noise stays well below the tolerance.
Evaluation evaluate(const std::function<Tensor()>& loss_fn) {
  struct Scope {
    detail::BranchRecorder rec;
    ReferencePrecisionGuard precision;
    Scope() { detail::active_branch_recorder() = &rec; }
    ~Scope() { detail::active_branch_recorder() = nullptr; }
  } scope;
  const double value = loss_fn().item();
  return {value, scope.rec.hash};
}

// Tolerance test shared by both checks; returns false on failure.
bool judge(GradCheckResult& result, const GradCheckOptions& options, double a, double numeric) {
  const double err = std::abs(a - numeric);
  const double scale = std::max(std::abs(a), std::abs(numeric));
  const double allowed = std::max(options.rel_tol * scale, options.abs_floor);
  ++result.checked;
  if (options.rel_tol * scale > options.abs_floor) ++result.relative_checked;
  result.worst_abs_error = std::max(result.worst_abs_error, err);
  if (scale > options.abs_floor) {
    result.worst_rel_error = std::max(result.worst_rel_error, err / scale);
  }
  return err <= allowed;
}

void finish(GradCheckResult& result, std::ostringstream& failures) {
  if (result.skipped * 2 > result.checked + result.skipped) {
    if (result.passed) failures << "too many probes cross a kink";
    result.passed = false;
  }
  result.detail = failures.str();
}

std::uint64_t analytic_pass(const std::function<Tensor()>& loss_fn, std::vector<Tensor>& inputs) {
  Tape::current().clear();
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Tensor loss = loss_fn();
  backward(loss);
  NoGradGuard no_grad;
  return evaluate(loss_fn).branches;
}

}  // namespace

GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;

  const std::uint64_t base_branches = analytic_pass(loss_fn, inputs);

  std::mt19937_64 rng(options.seed);
  std::ostringstream failures;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    const auto n = static_cast<std::size_t>(t.numel());
    std::vector<float> analytic(n, 0.0f);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());

    std::vector<std::size_t> probe(n);
    std::iota(probe.begin(), probe.end(), 0);
    if (n > options.max_entries) {
      std::shuffle(probe.begin(), probe.end(), rng);
      probe.resize(options.max_entries);
      std::sort(probe.begin(), probe.end());
    }

    NoGradGuard no_grad;
    auto values = t.mutable_data();
    for (std::size_t idx : probe) {
      const float original = values[idx];
      const float up = original + static_cast<float>(options.step);
      const float down = original - static_cast<float>(options.step);
      values[idx] = up;
      const Evaluation f_up = evaluate(loss_fn);
      values[idx] = down;
      const Evaluation f_down = evaluate(loss_fn);
      values[idx] = original;
      if (f_up.branches != base_branches || f_down.branches != base_branches) {
        ++result.skipped;
        continue;
      }

      const double numeric =
          (f_up.value - f_down.value) / (static_cast<double>(up) - static_cast<double>(down));
      if (!judge(result, options, analytic[idx], numeric)) {
        if (result.passed) {
          failures << "input " << ti << " entry " << idx << ": analytic " << analytic[idx]
                   << " numeric " << numeric;
        }
        result.passed = false;
      }
    }
  }
  finish(result, failures);
  for (auto& t : inputs) t.zero_grad();
  return result;
}

GradCheckResult check_directional(const std::string& name, const std::function<Tensor()>& loss_fn,
                                  std::vector<Tensor> inputs, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = name;
  const std::uint64_t base_branches = analytic_pass(loss_fn, inputs);

  std::mt19937_64 rng(options.seed);
  std::bernoulli_distribution coin(0.5);
  std::ostringstream failures;
  const auto h = static_cast<float>(options.step);
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    Tensor& t = inputs[ti];
    const auto n = static_cast<std::size_t>(t.numel());
    std::vector<float> dir(n);
    for (auto& d : dir) d = coin(rng) ? 1.0f : -1.0f;
    double analytic = 0.0;
    if (t.has_grad()) {
      const auto g = t.grad();
      for (std::size_t i = 0; i < n; ++i) analytic += static_cast<double>(g[i]) * dir[i];
    }

    NoGradGuard no_grad;
    auto values = t.mutable_data();
    const std::vector<float> original(values.begin(), values.end());
    // Actual float displacements, projected back onto the direction.
    double span = 0.0;
    for (std::size_t i = 0; i < n; ++i) values[i] = original[i] + h * dir[i];
    for (std::size_t i = 0; i < n; ++i) span += (static_cast<double>(values[i]) - original[i]) * dir[i];
    const Evaluation f_up = evaluate(loss_fn);
    for (std::size_t i = 0; i < n; ++i) values[i] = original[i] - h * dir[i];
    for (std::size_t i = 0; i < n; ++i) span -= (static_cast<double>(values[i]) - original[i]) * dir[i];
    const Evaluation f_down = evaluate(loss_fn);
    std::copy(original.begin(), original.end(), values.begin());
    if (f_up.branches != base_branches || f_down.branches != base_branches) {
      ++result.skipped;
      continue;
    }
    // span ≈ 2h·n; dividing by it and scaling by n gives the derivative
    // along v (whose squared norm is n).
    const double numeric = (f_up.value - f_down.value) / span * static_cast<double>(n);
    if (!judge(result, options, analytic, numeric)) {
      if (result.passed) {
        failures << "input " << ti << ": analytic " << analytic << " numeric " << numeric;
      }
      result.passed = false;
    }
  }
  finish(result, failures);
  for (auto& t : inputs) t.zero_grad();
  return result;
}

}  // namespace jcapa
