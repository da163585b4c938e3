#pragma once

// Convolution kernels behind conv2d. Two implementations share one contract:
//
//   serial::   direct per-element gather loops, kept as the test reference
//   parallel:: plane-blocked loops, OpenMP-parallel over independent planes
//
// Both accumulate every output element in the same term order, so their
// results are bit-identical and the OpenMP build stays deterministic for any
// thread count. Outputs are overwritten, never accumulated.

#include <cstddef>
#include <span>

namespace freezelab::kernels {

struct ConvGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t in_h = 0;
  std::size_t in_w = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_h = 0;
  std::size_t out_w = 0;

  // Throws ShapeError when the padded input is smaller than the kernel.
  static ConvGeometry make(std::size_t batch, std::size_t in_channels, std::size_t in_h,
                           std::size_t in_w, std::size_t out_channels, std::size_t kernel_h,
                           std::size_t kernel_w, std::size_t stride, std::size_t padding);

  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t weight_size() const { return out_channels * in_channels * kernel_h * kernel_w; }
  std::size_t output_size() const { return batch * out_channels * out_h * out_w; }
};

namespace serial {

// bias may be empty.
void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);
// grad_bias may be empty.
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

}  // namespace serial

namespace parallel {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output);
void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);
void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

// Number of OpenMP threads the parallel kernels use (1 without OpenMP).
int max_threads();

}  // namespace parallel

}  // namespace freezelab::kernels
