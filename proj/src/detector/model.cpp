#include <cmath>
#include <random>
#include <string>

#include "freezelab/detector.hpp"
#include "freezelab/error.hpp"

namespace freezelab {

std::string_view to_string(BlockRole role) {
  switch (role) {
    case BlockRole::backbone: return "backbone";
    case BlockRole::neck: return "neck";
    case BlockRole::head: return "head";
  }
  return "?";
}

std::string_view to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::conv_down: return "conv_down";
    case BlockKind::csp_like: return "csp_like";
    case BlockKind::sppf_like: return "sppf_like";
    case BlockKind::upsample: return "upsample";
    case BlockKind::concat: return "concat";
    case BlockKind::conv: return "conv";
    case BlockKind::head: return "head";
  }
  return "?";
}

namespace {

constexpr double kObjectnessPrior = -3.5;
constexpr double kHeadWeightStd = 0.01;
constexpr int kPoolKernel = 5;
// Hidden convs use standardized weights, which keeps activation scale fixed
// through 23 blocks without normalization layers. The gain undoes the
// variance lost in the preceding SiLU; the first conv sees the image itself.
constexpr double kSiluGain = 1.7881;
constexpr double kInputGain = 1.0;

class Builder {
 public:
  Builder(std::uint64_t seed) : rng_(seed) {}

  std::size_t add_param(std::vector<Parameter>& params, std::string name, std::size_t block,
                        ParamKind kind, Shape shape, double stddev, double fill = 0.0) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> values(n, fill);
    if (stddev > 0.0) {
      std::normal_distribution<double> dist(0.0, stddev);
      for (double& v : values) v = dist(rng_);
    }
    params.push_back({std::move(name), block, kind, Tensor(std::move(shape), std::move(values), true)});
    return params.size() - 1;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace

std::size_t Model::total_params() const {
  std::size_t n = 0;
  for (const Parameter& p : params_) n += p.value.numel();
  return n;
}

Model build_model(std::size_t w, std::size_t num_classes, std::uint64_t seed) {
  if (w < 2) throw Error("build_model: width_base must be at least 2");
  if (num_classes == 0) throw Error("build_model: num_classes must be positive");
  Model m;
  m.seed_ = seed;
  m.arch_.num_classes = num_classes;
  m.arch_.width_base = w;
  m.units_.resize(kNumBlocks);
  Builder builder(seed);

  const std::size_t c1 = w, c2 = 2 * w, c3 = 4 * w, c4 = 8 * w, c5 = 8 * w;

  auto conv = [&](std::size_t block, const std::string& tag, std::size_t cin, std::size_t cout,
                  int k, int stride, bool activate) {
    const std::string prefix = "b" + std::to_string(block) + "." + tag;
    const bool is_head = block == kHeadBlock;
    const double stddev =
        is_head ? kHeadWeightStd : std::sqrt(2.0 / static_cast<double>(cin * k * k));
    Model::ConvUnit u;
    u.weight = builder.add_param(m.params_, prefix + ".weight", block, ParamKind::weight,
                                 Shape{cout, cin, static_cast<std::size_t>(k),
                                       static_cast<std::size_t>(k)},
                                 stddev);
    u.bias = builder.add_param(m.params_, prefix + ".bias", block, ParamKind::bias, Shape{cout},
                               0.0);
    u.stride = stride;
    u.padding = k / 2;
    u.activate = activate;
    u.ws_gain = is_head ? 0.0 : (block == 0 ? kInputGain : kSiluGain);
    m.units_[block].push_back(u);
  };

  auto add_block = [&](BlockKind kind, std::size_t cin, std::size_t cout, std::size_t stride) {
    BlockSpec b;
    b.index = m.arch_.blocks.size();
    b.kind = kind;
    b.role = b.index < kBackboneBlocks ? BlockRole::backbone
             : b.index == kHeadBlock   ? BlockRole::head
                                       : BlockRole::neck;
    b.in_channels = cin;
    b.out_channels = cout;
    b.stride = stride;
    const std::size_t i = b.index;
    switch (kind) {
      case BlockKind::conv_down:
        conv(i, "conv", cin, cout, 3, 2, true);
        break;
      case BlockKind::conv:
        conv(i, "conv", cin, cout, 1, 1, true);
        break;
      case BlockKind::head:
        conv(i, "pred", cin, cout, 1, 1, false);
        break;
      case BlockKind::csp_like:
        conv(i, "cv1", cin, cout, 1, 1, true);
        conv(i, "m", cout / 2, cout / 2, 3, 1, true);
        conv(i, "cv2", cout + cout / 2, cout, 1, 1, true);
        break;
      case BlockKind::sppf_like:
        conv(i, "cv1", cin, cin / 2, 1, 1, true);
        conv(i, "cv2", 2 * cin, cout, 1, 1, true);
        break;
      case BlockKind::upsample:
      case BlockKind::concat:
        break;
    }
    m.arch_.blocks.push_back(b);
  };

  add_block(BlockKind::conv_down, 3, c1, 2);    // 0  P1/2
  add_block(BlockKind::conv_down, c1, c2, 4);   // 1  P2/4
  add_block(BlockKind::csp_like, c2, c2, 4);    // 2
  add_block(BlockKind::conv_down, c2, c3, 8);   // 3  P3/8
  add_block(BlockKind::csp_like, c3, c3, 8);    // 4
  add_block(BlockKind::conv_down, c3, c4, 16);  // 5  P4/16
  add_block(BlockKind::csp_like, c4, c4, 16);   // 6
  add_block(BlockKind::conv_down, c4, c5, 32);  // 7  P5/32
  add_block(BlockKind::csp_like, c5, c5, 32);   // 8
  add_block(BlockKind::sppf_like, c5, c5, 32);  // 9
  add_block(BlockKind::upsample, c5, c5, 16);   // 10
  add_block(BlockKind::conv, c5, c4, 16);       // 11
  add_block(BlockKind::csp_like, c4, c4, 16);   // 12
  add_block(BlockKind::upsample, c4, c4, 8);    // 13
  add_block(BlockKind::concat, c4 + c3, c4 + c3, 8);  // 14 <- 13, 4
  add_block(BlockKind::csp_like, c4 + c3, c3, 8);     // 15
  add_block(BlockKind::conv_down, c3, c3, 16);        // 16
  add_block(BlockKind::concat, c3 + c4, c3 + c4, 16); // 17 <- 16, 12
  add_block(BlockKind::csp_like, c3 + c4, c4, 16);    // 18
  add_block(BlockKind::upsample, c4, c4, 8);          // 19
  add_block(BlockKind::concat, c4 + c3, c4 + c3, 8);  // 20 <- 19, 15
  add_block(BlockKind::csp_like, c4 + c3, c3, 8);     // 21
  add_block(BlockKind::head, c3, kClassOffset + num_classes, 8);  // 22

  m.arch_.wiring = {{14, {13, 4}}, {17, {16, 12}}, {20, {19, 15}}};

  // Head priors: rare objectness.
  const Model::ConvUnit& head = m.units_[kHeadBlock].front();
  m.params_[head.bias].value.mutable_values()[kObjChannel] = kObjectnessPrior;

  for (BlockSpec& b : m.arch_.blocks) {
    for (const Parameter& p : m.params_) {
      if (p.block == b.index) b.param_count += p.value.numel();
    }
  }
  return m;
}

Tensor Model::run_conv(Tape& tape, const ConvUnit& unit, const Tensor& x) const {
  const Tensor& w = params_[unit.weight].value;
  Tensor y = conv2d(tape, x, unit.ws_gain > 0 ? standardize_weight(tape, w, unit.ws_gain) : w,
                    params_[unit.bias].value, unit.stride, unit.padding);
  return unit.activate ? silu(tape, y) : y;
}

std::vector<Tensor> Model::forward_all(Tape& tape, const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("forward: expected images [N, 3, S, S], got " +
                     shape_to_string(images.shape()));
  }
  if (images.dim(2) % 32 != 0 || images.dim(3) % 32 != 0) {
    throw ShapeError("forward: spatial size must be divisible by 32, got " +
                     shape_to_string(images.shape()));
  }
  std::vector<Tensor> out;
  out.reserve(kNumBlocks);
  for (const BlockSpec& b : arch_.blocks) {
    const Tensor& x = b.index == 0 ? images : out.back();
    const auto& u = units_[b.index];
    switch (b.kind) {
      case BlockKind::conv_down:
      case BlockKind::conv:
      case BlockKind::head:
        out.push_back(run_conv(tape, u[0], x));
        break;
      case BlockKind::csp_like: {
        Tensor y = run_conv(tape, u[0], x);
        const std::size_t half = y.dim(1) / 2;
        Tensor a = slice_channels(tape, y, 0, half);
        Tensor c = slice_channels(tape, y, half, half);
        Tensor mid = run_conv(tape, u[1], c);
        const Tensor parts[] = {a, c, mid};
        out.push_back(run_conv(tape, u[2], concat_channels(tape, std::span<const Tensor>(parts))));
        break;
      }
      case BlockKind::sppf_like: {
        Tensor y0 = run_conv(tape, u[0], x);
        Tensor y1 = max_pool2d(tape, y0, kPoolKernel, kPoolKernel / 2);
        Tensor y2 = max_pool2d(tape, y1, kPoolKernel, kPoolKernel / 2);
        Tensor y3 = max_pool2d(tape, y2, kPoolKernel, kPoolKernel / 2);
        const Tensor parts[] = {y0, y1, y2, y3};
        out.push_back(run_conv(tape, u[1], concat_channels(tape, std::span<const Tensor>(parts))));
        break;
      }
      case BlockKind::upsample:
        out.push_back(upsample_nearest2x(tape, x));
        break;
      case BlockKind::concat: {
        const auto [first, second] = arch_.wiring.at(b.index);
        out.push_back(concat_channels(tape, out[first], out[second]));
        break;
      }
    }
  }
  return out;
}

Tensor Model::forward(Tape& tape, const Tensor& images) const {
  return forward_all(tape, images).back();
}

Model Model::clone() const {
  Model m;
  m.arch_ = arch_;
  m.seed_ = seed_;
  m.units_ = units_;
  m.params_.reserve(params_.size());
  for (const Parameter& p : params_) {
    Tensor v = p.value.clone();
    v.set_requires_grad(p.value.requires_grad());
    m.params_.push_back({p.name, p.block, p.kind, std::move(v)});
  }
  return m;
}

}  // namespace freezelab
