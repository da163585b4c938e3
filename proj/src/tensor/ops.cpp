#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "freezelab/error.hpp"
#include "freezelab/kernels.hpp"
#include "freezelab/tensor.hpp"

namespace freezelab {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": " + what + " is undefined");
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got shape " + shape_to_string(t.shape()));
  }
}

void add_into(std::span<double> dst, std::span<const double> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  require_rank(input, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  if (stride <= 0) throw ShapeError("conv2d: stride must be positive");
  if (padding < 0) throw ShapeError("conv2d: padding must be non-negative");
  if (input.dim(1) != weight.dim(1)) {
    throw ShapeError("conv2d: input channel dimension (dim 1) is " + std::to_string(input.dim(1)) +
                     " but weight expects " + std::to_string(weight.dim(1)) + " input channels");
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ShapeError("conv2d: bias must have shape [" + std::to_string(weight.dim(0)) +
                     "], got " + shape_to_string(bias.shape()));
  }
  const auto g = kernels::ConvGeometry::make(
      input.dim(0), input.dim(1), input.dim(2), input.dim(3), weight.dim(0), weight.dim(2),
      weight.dim(3), static_cast<std::size_t>(stride), static_cast<std::size_t>(padding));

  std::vector<double> out(g.output_size());
  kernels::parallel::conv2d_forward(g, input.values(), weight.values(),
                                    bias.defined() ? bias.values() : std::span<const double>{},
                                    out);

  return tape.record(
      "conv2d", Shape{g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out),
      {input, weight, bias}, [g, input, weight](const NodeGrads& grads) {
        if (!grads.inputs[0].empty()) {
          std::vector<double> gi(g.input_size());
          kernels::parallel::conv2d_backward_input(g, grads.output, weight.values(), gi);
          add_into(grads.inputs[0], gi);
        }
        const bool want_w = !grads.inputs[1].empty();
        const bool want_b = !grads.inputs[2].empty();
        if (want_w) {
          std::vector<double> gw(g.weight_size());
          std::vector<double> gb(want_b ? g.out_channels : 0);
          kernels::parallel::conv2d_backward_weight(g, grads.output, input.values(), gw, gb);
          add_into(grads.inputs[1], gw);
          if (want_b) add_into(grads.inputs[2], gb);
        } else if (want_b) {
          const std::size_t plane = g.out_h * g.out_w;
          for (std::size_t o = 0; o < g.out_channels; ++o) {
            double acc = 0.0;
            for (std::size_t n = 0; n < g.batch; ++n) {
              const double* p = &grads.output[(n * g.out_channels + o) * plane];
              for (std::size_t i = 0; i < plane; ++i) acc += p[i];
            }
            grads.inputs[2][o] += acc;
          }
        }
      });
}

Tensor elementwise(Tape& tape, const Tensor& x, Activation kind) {
  const auto in = x.values();
  std::vector<double> out(in.size());
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : 0.0;
      return tape.record("relu", x.shape(), std::move(out), {x}, [x](const NodeGrads& g) {
        const auto v = x.values();
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (v[i] > 0.0) g.inputs[0][i] += g.output[i];
        }
      });
    case Activation::sigmoid: {
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid_value(in[i]);
      std::vector<double> s = out;
      return tape.record("sigmoid", x.shape(), std::move(out), {x},
                         [s = std::move(s)](const NodeGrads& g) {
                           for (std::size_t i = 0; i < s.size(); ++i) {
                             g.inputs[0][i] += g.output[i] * s[i] * (1.0 - s[i]);
                           }
                         });
    }
    case Activation::silu: {
      std::vector<double> s(in.size());
      for (std::size_t i = 0; i < in.size(); ++i) {
        s[i] = sigmoid_value(in[i]);
        out[i] = in[i] * s[i];
      }
      return tape.record("silu", x.shape(), std::move(out), {x},
                         [x, s = std::move(s)](const NodeGrads& g) {
                           const auto v = x.values();
                           for (std::size_t i = 0; i < s.size(); ++i) {
                             g.inputs[0][i] += g.output[i] * s[i] * (1.0 + v[i] * (1.0 - s[i]));
                           }
                         });
    }
  }
  throw Error("elementwise: unknown activation");
}

Tensor upsample_nearest2x(Tape& tape, const Tensor& x) {
  require_rank(x, 4, "upsample_nearest2x", "input");
  const std::size_t planes = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const auto in = x.values();
  std::vector<double> out(planes * 4 * H * W);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t h = 0; h < 2 * H; ++h) {
      for (std::size_t w = 0; w < 2 * W; ++w) {
        out[(p * 2 * H + h) * 2 * W + w] = in[(p * H + h / 2) * W + w / 2];
      }
    }
  }
  return tape.record("upsample_nearest2x", Shape{x.dim(0), x.dim(1), 2 * H, 2 * W},
                     std::move(out), {x}, [planes, H, W](const NodeGrads& g) {
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t h = 0; h < 2 * H; ++h) {
                           for (std::size_t w = 0; w < 2 * W; ++w) {
                             g.inputs[0][(p * H + h / 2) * W + w / 2] +=
                                 g.output[(p * 2 * H + h) * 2 * W + w];
                           }
                         }
                       }
                     });
}

Tensor concat_channels(Tape& tape, std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  require_rank(parts[0], 4, "concat_channels", "input 0");
  const std::size_t N = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    require_rank(parts[i], 4, "concat_channels", "input");
    const Shape& s = parts[i].shape();
    if (s[0] != N || s[2] != H || s[3] != W) {
      throw ShapeError("concat_channels: input " + std::to_string(i) + " has shape " +
                       shape_to_string(s) + ", incompatible with " +
                       shape_to_string(parts[0].shape()) + " (N, H, W must agree)");
    }
    channels.push_back(s[1]);
    total += s[1];
  }
  const std::size_t plane = H * W;
  std::vector<double> out(N * total * plane);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const auto in = parts[i].values();
    for (std::size_t n = 0; n < N; ++n) {
      std::copy_n(in.begin() + static_cast<std::ptrdiff_t>(n * channels[i] * plane),
                  channels[i] * plane,
                  out.begin() + static_cast<std::ptrdiff_t>((n * total + offset) * plane));
    }
    offset += channels[i];
  }
  return tape.record(
      "concat_channels", Shape{N, total, H, W}, std::move(out),
      std::vector<Tensor>(parts.begin(), parts.end()),
      [N, total, plane, channels](const NodeGrads& g) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < channels.size(); ++i) {
          if (!g.inputs[i].empty()) {
            for (std::size_t n = 0; n < N; ++n) {
              const double* src = &g.output[(n * total + off) * plane];
              double* dst = &g.inputs[i][n * channels[i] * plane];
              for (std::size_t k = 0; k < channels[i] * plane; ++k) dst[k] += src[k];
            }
          }
          off += channels[i];
        }
      });
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  const Tensor parts[] = {a, b};
  return concat_channels(tape, std::span<const Tensor>(parts));
}

Tensor slice_channels(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count) {
  require_rank(x, 4, "slice_channels", "input");
  const std::size_t N = x.dim(0), C = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (count == 0 || begin + count > C) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") outside " + std::to_string(C) +
                     " channels");
  }
  const auto in = x.values();
  std::vector<double> out(N * count * plane);
  for (std::size_t n = 0; n < N; ++n) {
    std::copy_n(in.begin() + static_cast<std::ptrdiff_t>((n * C + begin) * plane), count * plane,
                out.begin() + static_cast<std::ptrdiff_t>(n * count * plane));
  }
  return tape.record("slice_channels", Shape{N, count, x.dim(2), x.dim(3)}, std::move(out), {x},
                     [N, C, plane, begin, count](const NodeGrads& g) {
                       for (std::size_t n = 0; n < N; ++n) {
                         const double* src = &g.output[n * count * plane];
                         double* dst = &g.inputs[0][(n * C + begin) * plane];
                         for (std::size_t k = 0; k < count * plane; ++k) dst[k] += src[k];
                       }
                     });
}

Tensor max_pool2d(Tape& tape, const Tensor& x, int kernel, int padding) {
  require_rank(x, 4, "max_pool2d", "input");
  if (kernel <= 0 || padding < 0) throw ShapeError("max_pool2d: bad kernel/padding");
  const long H = static_cast<long>(x.dim(2)), W = static_cast<long>(x.dim(3));
  const long k = kernel, p = padding;
  const long OH = H + 2 * p - k + 1, OW = W + 2 * p - k + 1;
  if (OH <= 0 || OW <= 0) throw ShapeError("max_pool2d: kernel larger than padded input");
  if (p >= k) throw ShapeError("max_pool2d: padding must be smaller than the kernel");
  const std::size_t planes = x.dim(0) * x.dim(1);
  const auto in = x.values();
  std::vector<double> out(planes * static_cast<std::size_t>(OH * OW));
  std::vector<std::size_t> argmax(out.size());
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (long oh = 0; oh < OH; ++oh) {
      for (long ow = 0; ow < OW; ++ow) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (long kh = 0; kh < k; ++kh) {
          const long ih = oh + kh - p;
          if (ih < 0 || ih >= H) continue;
          for (long kw = 0; kw < k; ++kw) {
            const long iw = ow + kw - p;
            if (iw < 0 || iw >= W) continue;
            const std::size_t idx = pl * static_cast<std::size_t>(H * W) +
                                    static_cast<std::size_t>(ih * W + iw);
            if (in[idx] > best) {
              best = in[idx];
              best_idx = idx;
            }
          }
        }
        const std::size_t o = pl * static_cast<std::size_t>(OH * OW) +
                              static_cast<std::size_t>(oh * OW + ow);
        out[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return tape.record("max_pool2d",
                     Shape{x.dim(0), x.dim(1), static_cast<std::size_t>(OH),
                           static_cast<std::size_t>(OW)},
                     std::move(out), {x}, [argmax = std::move(argmax)](const NodeGrads& g) {
                       for (std::size_t o = 0; o < argmax.size(); ++o) {
                         g.inputs[0][argmax[o]] += g.output[o];
                       }
                     });
}

Tensor reduce(Tape& tape, const Tensor& x, Reduction kind) {
  const auto in = x.values();
  double acc = 0.0;
  for (double v : in) acc += v;
  const double factor = kind == Reduction::mean ? 1.0 / static_cast<double>(in.size()) : 1.0;
  return tape.record(kind == Reduction::mean ? "mean" : "sum", Shape{1},
                     std::vector<double>{acc * factor}, {x}, [factor](const NodeGrads& g) {
                       const double d = g.output[0] * factor;
                       for (double& v : g.inputs[0]) v += d;
                     });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return tape.record("add", a.shape(), std::move(out), {a, b}, [](const NodeGrads& g) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (!g.inputs[k].empty()) add_into(g.inputs[k], g.output);
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul: shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()) + " differ");
  }
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return tape.record("mul", a.shape(), std::move(out), {a, b}, [a, b](const NodeGrads& g) {
    const auto av = a.values(), bv = b.values();
    if (!g.inputs[0].empty()) {
      for (std::size_t i = 0; i < av.size(); ++i) g.inputs[0][i] += g.output[i] * bv[i];
    }
    if (!g.inputs[1].empty()) {
      for (std::size_t i = 0; i < av.size(); ++i) g.inputs[1][i] += g.output[i] * av[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  const auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * factor;
  return tape.record("scale", x.shape(), std::move(out), {x}, [factor](const NodeGrads& g) {
    for (std::size_t i = 0; i < g.output.size(); ++i) g.inputs[0][i] += g.output[i] * factor;
  });
}

Tensor standardize_weight(Tape& tape, const Tensor& weight, double gain) {
  if (weight.rank() < 2) {
    throw ShapeError("standardize_weight: expected a kernel of rank >= 2, got " +
                     shape_to_string(weight.shape()));
  }
  constexpr double kEps = 1e-10;
  const std::size_t rows = weight.dim(0);
  const std::size_t n = weight.numel() / rows;
  const auto w = weight.values();
  std::vector<double> out(w.size());
  // Per-row centered values and inverse norms, reused by backward.
  std::vector<double> centered(w.size());
  std::vector<double> inv_norm(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w.data() + r * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += row[i];
    mu /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      centered[r * n + i] = row[i] - mu;
      ss += centered[r * n + i] * centered[r * n + i];
    }
    inv_norm[r] = 1.0 / std::sqrt(ss + kEps);
    for (std::size_t i = 0; i < n; ++i) out[r * n + i] = gain * centered[r * n + i] * inv_norm[r];
  }
  return tape.record(
      "standardize_weight", weight.shape(), std::move(out), {weight},
      [rows, n, gain, centered = std::move(centered), inv_norm = std::move(inv_norm)](
          const NodeGrads& g) {
        if (g.inputs[0].empty()) return;
        std::vector<double> dx(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* x = centered.data() + r * n;
          const double* gy = g.output.data() + r * n;
          const double s = inv_norm[r];
          double dot = 0.0;
          for (std::size_t i = 0; i < n; ++i) dot += gy[i] * x[i];
          double total = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            dx[i] = gain * (gy[i] * s - x[i] * dot * s * s * s);
            total += dx[i];
          }
          const double shift = total / static_cast<double>(n);
          for (std::size_t i = 0; i < n; ++i) g.inputs[0][r * n + i] += dx[i] - shift;
        }
      });
}

}  // namespace freezelab
