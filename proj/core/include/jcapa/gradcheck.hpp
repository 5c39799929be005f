#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "jcapa/tensor.hpp"

namespace jcapa {

struct GradCheckOptions {
  double step = 1e-3;
  double rel_tol = 1e-2;
  double abs_floor = 1e-4;
  // Entries probed per tensor; larger tensors are subsampled.
  std::size_t max_entries = 64;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  std::string name;
  bool passed = true;
  std::size_t checked = 0;
  std::size_t skipped = 0;  // probes whose ±step crossed a relu/max kink
  // Probes large enough that the relative tolerance, not the absolute
  // floor, decided them.
  std::size_t relative_checked = 0;
  double worst_abs_error = 0.0;
  double worst_rel_error = 0.0;
  std::string detail;
};

/// While alive, matrix products on this thread sum in double and round once.
/// Finite-difference references use it so forward rounding noise stays
/// below the tolerance floor; not for training.
class ReferencePrecisionGuard {
 public:
  ReferencePrecisionGuard();
  ~ReferencePrecisionGuard();
  ReferencePrecisionGuard(const ReferencePrecisionGuard&) = delete;
  ReferencePrecisionGuard& operator=(const ReferencePrecisionGuard&) = delete;

 private:
  bool previous_;
};

/// Compares tape gradients against central finite differences.
///
/// `loss_fn` rebuilds the scalar loss from the current values of `inputs`;
/// it is called once with recording on (for the analytic gradient) and
/// twice per probed entry under NoGradGuard. An entry passes when
/// |analytic − numeric| ≤ max(rel_tol·max(|analytic|, |numeric|), abs_floor).
/// Probes whose perturbed evaluations take a different relu/max branch than
/// the unperturbed one are skipped, since the central difference is not a
/// derivative estimate there; the check fails if more than half are skipped.
GradCheckResult check_gradients(const std::string& name, const std::function<Tensor()>& loss_fn,
                                std::vector<Tensor> inputs, const GradCheckOptions& options = {});

/// Directional variant for large models: for each input tensor, compares
/// ⟨grad, v⟩ against the central difference of the loss along a random ±1
/// direction v of that tensor. One probe per tensor, counted like an entry
/// above (including the kink skip).
GradCheckResult check_directional(const std::string& name, const std::function<Tensor()>& loss_fn,
                                  std::vector<Tensor> inputs, const GradCheckOptions& options = {});

/// Runs every op/module check: primitives, attention modules, transformer
/// layer, segmentation loss and an end-to-end network.
std::vector<GradCheckResult> run_gradcheck_suite(std::uint64_t seed = 7,
                                                 GradCheckOptions options = {});

}  // namespace jcapa
