#include <algorithm>
#include <cstddef>

#include "freezelab/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace freezelab::kernels::parallel {

namespace {

using Index = std::ptrdiff_t;

// Output positions o in [lo, hi) whose tap k lands inside [0, extent).
struct Range {
  Index lo;
  Index hi;
};

Range valid_outputs(Index k, Index stride, Index padding, Index extent, Index out_extent) {
  // o * stride + k - padding in [0, extent)
  Index lo = 0;
  if (padding > k) lo = (padding - k + stride - 1) / stride;
  const Index last = extent - 1 + padding - k;
  if (last < 0) return {0, 0};
  const Index hi = std::min(out_extent, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input,
                    std::span<const double> weight, std::span<const double> bias,
                    std::span<double> output) {
  const Index batch = static_cast<Index>(g.batch);
  const Index out_c = static_cast<Index>(g.out_channels);
  const Index in_c = static_cast<Index>(g.in_channels);
  const Index H = static_cast<Index>(g.in_h), W = static_cast<Index>(g.in_w);
  const Index OH = static_cast<Index>(g.out_h), OW = static_cast<Index>(g.out_w);
  const Index KH = static_cast<Index>(g.kernel_h), KW = static_cast<Index>(g.kernel_w);
  const Index s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
  const double* in_data = input.data();
  const double* w_data = weight.data();
  double* out_data = output.data();
  const bool has_bias = !bias.empty();

#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < batch; ++n) {
    for (Index o = 0; o < out_c; ++o) {
      double* out = out_data + (n * out_c + o) * OH * OW;
      std::fill(out, out + OH * OW, has_bias ? bias[static_cast<std::size_t>(o)] : 0.0);
      for (Index c = 0; c < in_c; ++c) {
        const double* in = in_data + (n * in_c + c) * H * W;
        const double* wk = w_data + (o * in_c + c) * KH * KW;
        for (Index kh = 0; kh < KH; ++kh) {
          const Range rows = valid_outputs(kh, s, p, H, OH);
          for (Index kw = 0; kw < KW; ++kw) {
            const Range cols = valid_outputs(kw, s, p, W, OW);
            const double wv = wk[kh * KW + kw];
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              const double* irow = in + (oh * s + kh - p) * W + kw - p;
              double* orow = out + oh * OW;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) orow[ow] += wv * irow[ow * s];
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_input(const ConvGeometry& g, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const Index batch = static_cast<Index>(g.batch);
  const Index out_c = static_cast<Index>(g.out_channels);
  const Index in_c = static_cast<Index>(g.in_channels);
  const Index H = static_cast<Index>(g.in_h), W = static_cast<Index>(g.in_w);
  const Index OH = static_cast<Index>(g.out_h), OW = static_cast<Index>(g.out_w);
  const Index KH = static_cast<Index>(g.kernel_h), KW = static_cast<Index>(g.kernel_w);
  const Index s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
  const double* go_data = grad_output.data();
  const double* w_data = weight.data();
  double* gi_data = grad_input.data();

#pragma omp parallel for collapse(2) schedule(static)
  for (Index n = 0; n < batch; ++n) {
    for (Index c = 0; c < in_c; ++c) {
      double* gi = gi_data + (n * in_c + c) * H * W;
      std::fill(gi, gi + H * W, 0.0);
      for (Index o = 0; o < out_c; ++o) {
        const double* go = go_data + (n * out_c + o) * OH * OW;
        const double* wk = w_data + (o * in_c + c) * KH * KW;
        for (Index kh = 0; kh < KH; ++kh) {
          const Range rows = valid_outputs(kh, s, p, H, OH);
          for (Index kw = 0; kw < KW; ++kw) {
            const Range cols = valid_outputs(kw, s, p, W, OW);
            const double wv = wk[kh * KW + kw];
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              double* irow = gi + (oh * s + kh - p) * W + kw - p;
              const double* grow = go + oh * OW;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) irow[ow * s] += grow[ow] * wv;
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_weight(const ConvGeometry& g, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const Index batch = static_cast<Index>(g.batch);
  const Index out_c = static_cast<Index>(g.out_channels);
  const Index in_c = static_cast<Index>(g.in_channels);
  const Index H = static_cast<Index>(g.in_h), W = static_cast<Index>(g.in_w);
  const Index OH = static_cast<Index>(g.out_h), OW = static_cast<Index>(g.out_w);
  const Index KH = static_cast<Index>(g.kernel_h), KW = static_cast<Index>(g.kernel_w);
  const Index s = static_cast<Index>(g.stride), p = static_cast<Index>(g.padding);
  const double* go_data = grad_output.data();
  const double* in_data = input.data();
  double* gw_data = grad_weight.data();
  const bool want_bias = !grad_bias.empty();

#pragma omp parallel for schedule(static)
  for (Index o = 0; o < out_c; ++o) {
    for (Index c = 0; c < in_c; ++c) {
      for (Index kh = 0; kh < KH; ++kh) {
        const Range rows = valid_outputs(kh, s, p, H, OH);
        for (Index kw = 0; kw < KW; ++kw) {
          const Range cols = valid_outputs(kw, s, p, W, OW);
          double acc = 0.0;
          for (Index n = 0; n < batch; ++n) {
            const double* go = go_data + (n * out_c + o) * OH * OW;
            const double* in = in_data + (n * in_c + c) * H * W;
            for (Index oh = rows.lo; oh < rows.hi; ++oh) {
              const double* irow = in + (oh * s + kh - p) * W + kw - p;
              const double* grow = go + oh * OW;
              for (Index ow = cols.lo; ow < cols.hi; ++ow) acc += grow[ow] * irow[ow * s];
            }
          }
          gw_data[((o * in_c + c) * KH + kh) * KW + kw] = acc;
        }
      }
    }
    if (want_bias) {
      double acc = 0.0;
      for (Index n = 0; n < batch; ++n) {
        const double* go = go_data + (n * out_c + o) * OH * OW;
        for (Index i = 0; i < OH * OW; ++i) acc += go[i];
      }
      grad_bias[static_cast<std::size_t>(o)] = acc;
    }
  }
}

}  // namespace freezelab::kernels::parallel
