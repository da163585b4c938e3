#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "freezelab/dataset.hpp"
#include "freezelab/error.hpp"

namespace freezelab {

AugmentOp parse_augment_op(std::string_view name) {
  if (name == "hflip") return AugmentOp::hflip;
  if (name == "vflip") return AugmentOp::vflip;
  if (name == "rotate90") return AugmentOp::rotate90;
  if (name == "random_crop") return AugmentOp::random_crop;
  if (name == "gaussian_blur") return AugmentOp::gaussian_blur;
  if (name == "gaussian_noise") return AugmentOp::gaussian_noise;
  throw Error("unknown augmentation '" + std::string(name) +
              "' (hflip, vflip, rotate90, random_crop, gaussian_blur, gaussian_noise)");
}

std::string_view to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::hflip: return "hflip";
    case AugmentOp::vflip: return "vflip";
    case AugmentOp::rotate90: return "rotate90";
    case AugmentOp::random_crop: return "random_crop";
    case AugmentOp::gaussian_blur: return "gaussian_blur";
    case AugmentOp::gaussian_noise: return "gaussian_noise";
  }
  return "?";
}

namespace {

Image hflip(const Image& in) {
  Image out(in.width, in.height);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = in.at(in.width - 1 - x, y, c);
  return out;
}

Image vflip(const Image& in) {
  Image out(in.width, in.height);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = in.at(x, in.height - 1 - y, c);
  return out;
}

// Clockwise quarter turn.
Image rotate90(const Image& in) {
  Image out(in.height, in.width);
  for (std::size_t y = 0; y < in.height; ++y)
    for (std::size_t x = 0; x < in.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out.at(in.height - 1 - y, x, c) = in.at(x, y, c);
  return out;
}

Image blur(const Image& in) {
  constexpr int r = 2;
  double k[2 * r + 1];
  double norm = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-0.5 * i * i / (kBlurSigma * kBlurSigma));
    norm += k[i + r];
  }
  for (double& v : k) v /= norm;
  const long W = static_cast<long>(in.width), H = static_cast<long>(in.height);
  auto clampi = [](long v, long hi) { return static_cast<std::size_t>(std::clamp(v, 0L, hi - 1)); };
  Image tmp(in.width, in.height), out(in.width, in.height);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * in.at(clampi(x + i, W), static_cast<std::size_t>(y), c);
        tmp.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = acc;
      }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.at(static_cast<std::size_t>(x), clampi(y + i, H), c);
        out.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), c) = acc;
      }
  return out;
}

std::pair<Image, std::vector<Label>> crop(const Image& in, std::span<const Label> labels,
                                          std::mt19937_64& rng) {
  const double W = static_cast<double>(in.width), H = static_cast<double>(in.height);
  std::pair<Image, std::vector<Label>> result;
  for (int attempt = 0; attempt < 10; ++attempt) {
    std::uniform_int_distribution<std::size_t> dw((in.width * 3 + 4) / 5, in.width);
    std::uniform_int_distribution<std::size_t> dh((in.height * 3 + 4) / 5, in.height);
    const std::size_t cw = dw(rng), ch = dh(rng);
    const std::size_t x0 = std::uniform_int_distribution<std::size_t>(0, in.width - cw)(rng);
    const std::size_t y0 = std::uniform_int_distribution<std::size_t>(0, in.height - ch)(rng);
    Image out(cw, ch);
    for (std::size_t y = 0; y < ch; ++y)
      for (std::size_t x = 0; x < cw; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(x, y, c) = in.at(x0 + x, y0 + y, c);
    std::vector<Label> kept;
    for (const Label& l : labels) {
      const double bx1 = std::max((l.cx - l.w / 2) * W, static_cast<double>(x0));
      const double bx2 = std::min((l.cx + l.w / 2) * W, static_cast<double>(x0 + cw));
      const double by1 = std::max((l.cy - l.h / 2) * H, static_cast<double>(y0));
      const double by2 = std::min((l.cy + l.h / 2) * H, static_cast<double>(y0 + ch));
      if (bx2 <= bx1 || by2 <= by1) continue;
      Label n = l;
      n.cx = snap_coord(std::clamp(((bx1 + bx2) / 2 - x0) / cw, 0.0, 1.0));
      n.cy = snap_coord(std::clamp(((by1 + by2) / 2 - y0) / ch, 0.0, 1.0));
      n.w = snap_coord(std::clamp((bx2 - bx1) / cw, 0.0, 1.0));
      n.h = snap_coord(std::clamp((by2 - by1) / ch, 0.0, 1.0));
      if (n.w > 0 && n.h > 0) kept.push_back(n);
    }
    result = {std::move(out), std::move(kept)};
    if (labels.empty() || !result.second.empty()) break;
  }
  return result;
}

}  // namespace

std::pair<Image, std::vector<Label>> augment(const Image& img, std::span<const Label> labels,
                                             AugmentOp op, std::uint64_t seed) {
  if (img.width == 0 || img.height == 0 || img.data.size() != img.width * img.height * 3) {
    throw Error("augment: invalid image");
  }
  std::vector<Label> out(labels.begin(), labels.end());
  std::mt19937_64 rng(seed);
  switch (op) {
    case AugmentOp::hflip:
      for (Label& l : out) l.cx = 1.0 - l.cx;
      return {hflip(img), out};
    case AugmentOp::vflip:
      for (Label& l : out) l.cy = 1.0 - l.cy;
      return {vflip(img), out};
    case AugmentOp::rotate90:
      for (Label& l : out) l = {l.class_id, 1.0 - l.cy, l.cx, l.h, l.w};
      return {rotate90(img), out};
    case AugmentOp::random_crop:
      return crop(img, labels, rng);
    case AugmentOp::gaussian_blur:
      return {blur(img), out};
    case AugmentOp::gaussian_noise: {
      Image noisy = img;
      std::normal_distribution<double> noise(0.0, kNoiseSigma);
      for (double& v : noisy.data) v = std::clamp(v + noise(rng), 0.0, 1.0);
      return {noisy, out};
    }
  }
  throw Error("augment: unknown op");
}

Dataset augment_dataset(const Dataset& data, std::span<const AugmentOp> ops, std::uint64_t seed) {
  Dataset out = data;
  out.manifest.splits.reset();
  out.manifest.augmented = true;
  for (std::size_t i = 0; i < data.images.size(); ++i) {
    for (std::size_t k = 0; k < ops.size(); ++k) {
      auto [img, labels] = augment(data.images[i], data.manifest.labels[i], ops[k],
                                   seed + 1000003ULL * i + k);
      quantize(img);
      out.manifest.images.push_back({data.manifest.images[i].stem + "_" + std::string(to_string(ops[k])),
                                     img.width, img.height});
      out.manifest.labels.push_back(std::move(labels));
      out.images.push_back(std::move(img));
    }
  }
  return out;
}

}  // namespace freezelab
