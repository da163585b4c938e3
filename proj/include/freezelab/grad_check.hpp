#pragma once

// Central finite-difference oracle for tape programs.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "freezelab/tensor.hpp"

namespace freezelab {

// Builds a scalar loss from `inputs` on `tape`. Must be a pure function of
// the input values.
using TensorProgram = std::function<Tensor(Tape& tape, std::span<const Tensor> inputs)>;

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of this many
  // coordinates per input.
  std::size_t max_coords_per_input = 0;
  std::uint64_t seed = 0;
  // Smallest denominator in the relative error. Central differences carry
  // round-off noise of about 1e-16 * |f| / eps, so gradients far below this
  // are compared absolutely.
  double denominator_floor = 1e-6;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coords_checked = 0;
  // worst coordinate, for diagnostics
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares reverse-mode gradients of every input with requires_grad against
// central differences. Error per coordinate is
// |analytic - numeric| / max(denominator_floor, |analytic| + |numeric|).
GradCheckResult grad_check(const TensorProgram& f, std::span<Tensor> inputs,
                           const GradCheckOptions& options = {});

}  // namespace freezelab
