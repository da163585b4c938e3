// Serial reference vs OpenMP conv kernels on detector-sized layers.
//
//   freezelab_bench_conv --benchmark_filter=Forward

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "freezelab/kernels.hpp"

namespace k = freezelab::kernels;

namespace {

struct Buffers {
  k::ConvGeometry g;
  std::vector<double> x, w, b, y, gy, gx, gw, gb;
};

// args: batch, channels (in = out), spatial size, kernel
Buffers make(const benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto c = static_cast<std::size_t>(state.range(1));
  const auto s = static_cast<std::size_t>(state.range(2));
  const auto kk = static_cast<std::size_t>(state.range(3));
  Buffers buf;
  buf.g = k::ConvGeometry::make(n, c, s, s, c, kk, kk, 1, kk / 2);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  auto fill = [&](std::size_t size) {
    std::vector<double> v(size);
    for (double& e : v) e = nd(rng);
    return v;
  };
  buf.x = fill(buf.g.input_size());
  buf.w = fill(buf.g.weight_size());
  buf.b = fill(c);
  buf.gy = fill(buf.g.output_size());
  buf.y.resize(buf.g.output_size());
  buf.gx.resize(buf.g.input_size());
  buf.gw.resize(buf.g.weight_size());
  buf.gb.resize(c);
  return buf;
}

void set_flops(benchmark::State& state, const k::ConvGeometry& g) {
  state.counters["FLOPS"] = benchmark::Counter(
      2.0 * static_cast<double>(g.output_size() * g.in_channels * g.kernel_h * g.kernel_w),
      benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void Forward(benchmark::State& state) {
  Buffers b = make(state);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_forward(b.g, b.x, b.w, b.b, b.y);
    else k::serial::conv2d_forward(b.g, b.x, b.w, b.b, b.y);
    benchmark::DoNotOptimize(b.y.data());
  }
  set_flops(state, b.g);
}

template <bool Parallel>
void BackwardInput(benchmark::State& state) {
  Buffers b = make(state);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_backward_input(b.g, b.gy, b.w, b.gx);
    else k::serial::conv2d_backward_input(b.g, b.gy, b.w, b.gx);
    benchmark::DoNotOptimize(b.gx.data());
  }
  set_flops(state, b.g);
}

template <bool Parallel>
void BackwardWeight(benchmark::State& state) {
  Buffers b = make(state);
  for (auto _ : state) {
    if constexpr (Parallel) k::parallel::conv2d_backward_weight(b.g, b.gy, b.x, b.gw, b.gb);
    else k::serial::conv2d_backward_weight(b.g, b.gy, b.x, b.gw, b.gb);
    benchmark::DoNotOptimize(b.gw.data());
  }
  set_flops(state, b.g);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->ArgNames({"n", "c", "hw", "k"});
  b->Args({4, 8, 32, 3});
  b->Args({4, 16, 16, 3});
  b->Args({4, 32, 8, 1});
  b->Args({16, 16, 16, 3});
}

}  // namespace

BENCHMARK(Forward<false>)->Name("Forward/serial")->Apply(shapes);
BENCHMARK(Forward<true>)->Name("Forward/parallel")->Apply(shapes);
BENCHMARK(BackwardInput<false>)->Name("BackwardInput/serial")->Apply(shapes);
BENCHMARK(BackwardInput<true>)->Name("BackwardInput/parallel")->Apply(shapes);
BENCHMARK(BackwardWeight<false>)->Name("BackwardWeight/serial")->Apply(shapes);
BENCHMARK(BackwardWeight<true>)->Name("BackwardWeight/parallel")->Apply(shapes);

BENCHMARK_MAIN();
