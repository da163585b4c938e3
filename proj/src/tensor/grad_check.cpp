#include "freezelab/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "freezelab/error.hpp"

namespace freezelab {

namespace {

double evaluate(const TensorProgram& f, std::span<const Tensor> inputs) {
  Tape tape;
  NoGradScope scope(tape);
  return f(tape, inputs).item();
}

std::vector<std::size_t> pick_coords(std::size_t n, std::size_t limit, std::mt19937_64& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (limit == 0 || limit >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

GradCheckResult grad_check(const TensorProgram& f, std::span<Tensor> inputs,
                           const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw Error("grad_check: eps must be positive");
  GradCheckResult result;

  std::vector<std::vector<double>> analytic(inputs.size());
  {
    Tape tape;
    const Tensor loss = f(tape, inputs);
    const GradMap grads = tape.backward(loss);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      auto it = grads.find(inputs[i].id());
      if (it == grads.end()) {
        analytic[i].assign(inputs[i].numel(), 0.0);
      } else {
        const auto g = it->second.values();
        analytic[i].assign(g.begin(), g.end());
      }
    }
    tape.reset();
  }

  std::mt19937_64 rng(options.seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (!inputs[i].requires_grad()) continue;
    auto values = inputs[i].mutable_values();
    for (std::size_t k : pick_coords(values.size(), options.max_coords_per_input, rng)) {
      const double saved = values[k];
      values[k] = saved + options.eps;
      const double up = evaluate(f, inputs);
      values[k] = saved - options.eps;
      const double down = evaluate(f, inputs);
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[i][k];
      const double err = std::abs(a - numeric) / std::max(options.denominator_floor, std::abs(a) + std::abs(numeric));
      ++result.coords_checked;
      if (err > result.max_rel_error || result.coords_checked == 1) {
        result.max_rel_error = std::max(result.max_rel_error, err);
        result.worst_input = i;
        result.worst_index = k;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace freezelab
