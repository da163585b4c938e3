#include "freezelab/kernels.hpp"

#include <string>

#include "freezelab/error.hpp"

namespace freezelab::kernels {

ConvGeometry ConvGeometry::make(std::size_t batch, std::size_t in_channels, std::size_t in_h,
                                std::size_t in_w, std::size_t out_channels, std::size_t kernel_h,
                                std::size_t kernel_w, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  if (in_h + 2 * padding < kernel_h) {
    throw ShapeError("conv2d: padded input height " + std::to_string(in_h + 2 * padding) +
                     " is smaller than kernel height " + std::to_string(kernel_h));
  }
  if (in_w + 2 * padding < kernel_w) {
    throw ShapeError("conv2d: padded input width " + std::to_string(in_w + 2 * padding) +
                     " is smaller than kernel width " + std::to_string(kernel_w));
  }
  ConvGeometry g;
  g.batch = batch;
  g.in_channels = in_channels;
  g.in_h = in_h;
  g.in_w = in_w;
  g.out_channels = out_channels;
  g.kernel_h = kernel_h;
  g.kernel_w = kernel_w;
  g.stride = stride;
  g.padding = padding;
  g.out_h = (in_h + 2 * padding - kernel_h) / stride + 1;
  g.out_w = (in_w + 2 * padding - kernel_w) / stride + 1;
  return g;
}

namespace serial {

namespace {

// Input coordinate touched by output coordinate `o` and kernel tap `k`, or -1
// when it falls in the padding.
long input_coord(std::size_t o, std::size_t k, std::size_t stride, std::size_t padding,
                 std::size_t extent) {
  const long pos = static_cast<long>(o * stride + k) - static_cast<long>(padding);
  return (pos < 0 || pos >= static_cast<long>(extent)) ? -1 : pos;
}

}  // namespace

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oh = 0; oh < g.out_h; ++oh) {
        for (std::size_t ow = 0; ow < g.out_w; ++ow) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
              const long ih = input_coord(oh, kh, g.stride, g.padding, g.in_h);
              if (ih < 0) continue;
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const long iw = input_coord(ow, kw, g.stride, g.padding, g.in_w);
                if (iw < 0) continue;
                acc += weight[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw] *
                       input[((n * g.in_channels + c) * g.in_h + ih) * g.in_w + iw];
              }
            }
          }
          output[((n * g.out_channels + o) * g.out_h + oh) * g.out_w + ow] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const long s = static_cast<long>(g.stride);
  const long p = static_cast<long>(g.padding);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t ih = 0; ih < g.in_h; ++ih) {
        for (std::size_t iw = 0; iw < g.in_w; ++iw) {
          double acc = 0.0;
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
              const long th = static_cast<long>(ih) + p - static_cast<long>(kh);
              if (th < 0 || th % s != 0 || th / s >= static_cast<long>(g.out_h)) continue;
              const std::size_t oh = static_cast<std::size_t>(th / s);
              for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
                const long tw = static_cast<long>(iw) + p - static_cast<long>(kw);
                if (tw < 0 || tw % s != 0 || tw / s >= static_cast<long>(g.out_w)) continue;
                const std::size_t ow = static_cast<std::size_t>(tw / s);
                acc += grad_output[((n * g.out_channels + o) * g.out_h + oh) * g.out_w + ow] *
                       weight[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw];
              }
            }
          }
          grad_input[((n * g.in_channels + c) * g.in_h + ih) * g.in_w + iw] = acc;
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  for (std::size_t o = 0; o < g.out_channels; ++o) {
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      for (std::size_t kh = 0; kh < g.kernel_h; ++kh) {
        for (std::size_t kw = 0; kw < g.kernel_w; ++kw) {
          double acc = 0.0;
          for (std::size_t n = 0; n < g.batch; ++n) {
            for (std::size_t oh = 0; oh < g.out_h; ++oh) {
              const long ih = input_coord(oh, kh, g.stride, g.padding, g.in_h);
              if (ih < 0) continue;
              for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                const long iw = input_coord(ow, kw, g.stride, g.padding, g.in_w);
                if (iw < 0) continue;
                acc += grad_output[((n * g.out_channels + o) * g.out_h + oh) * g.out_w + ow] *
                       input[((n * g.in_channels + c) * g.in_h + ih) * g.in_w + iw];
              }
            }
          }
          grad_weight[((o * g.in_channels + c) * g.kernel_h + kh) * g.kernel_w + kw] = acc;
        }
      }
    }
    if (!grad_bias.empty()) {
      double acc = 0.0;
      for (std::size_t n = 0; n < g.batch; ++n) {
        const double* plane = &grad_output[(n * g.out_channels + o) * g.out_h * g.out_w];
        for (std::size_t i = 0; i < g.out_h * g.out_w; ++i) acc += plane[i];
      }
      grad_bias[o] = acc;
    }
  }
}

}  // namespace serial
}  // namespace freezelab::kernels
