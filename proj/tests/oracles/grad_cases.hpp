#pragma once

// Randomized grad_check programs, one per primitive op, shared by the unit
// tests and the acceptance run.

#include <cstdint>
#include <random>
#include <vector>

#include "freezelab/grad_check.hpp"
#include "freezelab/tensor.hpp"

namespace oracle {

using namespace freezelab;

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool grad = true, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = d(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

struct GradCase {
  const char* name;
  std::vector<Tensor> in;
  TensorProgram f;
};

inline std::vector<GradCase> primitive_grad_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 11);
  std::uniform_int_distribution<std::size_t> d(1, 3), sp(3, 6);
  const std::size_t n = d(rng), c = d(rng), h = sp(rng), w = sp(rng), o = d(rng);
  const int stride = static_cast<int>(d(rng) % 2 + 1);
  // Random readout weights keep every loss sensitive to every output.
  Tensor r4 = random_tensor({n, 2 * c, h, w}, rng, false);
  std::vector<GradCase> cases;
  cases.push_back({"conv2d",
                   {random_tensor({n, c, h, w}, rng), random_tensor({o, c, 3, 3}, rng),
                    random_tensor({o}, rng)},
                   [stride](Tape& t, std::span<const Tensor> v) {
                     Tensor y = conv2d(t, v[0], v[1], v[2], stride, 1);
                     return sum(t, mul(t, y, y));
                   }});
  for (Activation a : {Activation::relu, Activation::silu, Activation::sigmoid}) {
    Tensor x = random_tensor({n, c, h, w}, rng);
    // Keep relu inputs away from the kink.
    if (a == Activation::relu)
      for (double& v : x.mutable_values()) v += v >= 0 ? 0.1 : -0.1;
    cases.push_back({"elementwise", {x, random_tensor({n, c, h, w}, rng, false)},
                     [a](Tape& t, std::span<const Tensor> v) {
                       return sum(t, mul(t, elementwise(t, v[0], a), v[1]));
                     }});
  }
  cases.push_back({"upsample", {random_tensor({n, c, h, w}, rng), random_tensor({n, c, 2 * h, 2 * w}, rng, false)},
                   [](Tape& t, std::span<const Tensor> v) {
                     return sum(t, mul(t, upsample_nearest2x(t, v[0]), v[1]));
                   }});
  cases.push_back({"concat", {random_tensor({n, c, h, w}, rng), random_tensor({n, c, h, w}, rng), r4},
                   [](Tape& t, std::span<const Tensor> v) {
                     return sum(t, mul(t, concat_channels(t, v[0], v[1]), v[2]));
                   }});
  cases.push_back({"slice", {random_tensor({n, 2 * c, h, w}, rng), random_tensor({n, c, h, w}, rng, false)},
                   [c](Tape& t, std::span<const Tensor> v) {
                     return sum(t, mul(t, slice_channels(t, v[0], c, c), v[1]));
                   }});
  cases.push_back({"max_pool", {random_tensor({n, c, h, w}, rng), random_tensor({n, c, h, w}, rng, false)},
                   [](Tape& t, std::span<const Tensor> v) {
                     return sum(t, mul(t, max_pool2d(t, v[0], 3, 1), v[1]));
                   }});
  cases.push_back({"mean", {random_tensor({n, c, h, w}, rng)},
                   [](Tape& t, std::span<const Tensor> v) {
                     Tensor m = mean(t, v[0]);
                     return mul(t, m, m);
                   }});
  cases.push_back({"add_scale", {random_tensor({3, 4}, rng), random_tensor({3, 4}, rng)},
                   [](Tape& t, std::span<const Tensor> v) {
                     Tensor s = add(t, scale(t, v[0], -1.5), v[1]);
                     return sum(t, mul(t, s, s));
                   }});
  cases.push_back({"standardize_weight",
                   {random_tensor({o, c, 3, 3}, rng), random_tensor({o, c, 3, 3}, rng, false)},
                   [](Tape& t, std::span<const Tensor> v) {
                     return sum(t, mul(t, standardize_weight(t, v[0], 1.7881), v[1]));
                   }});
  return cases;
}

}  // namespace oracle
