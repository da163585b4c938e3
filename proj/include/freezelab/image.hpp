#pragma once

// RGB images as doubles in [0, 1], PPM (P6) I/O, and model preprocessing.

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "freezelab/tensor.hpp"

namespace freezelab {

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> data;  // row-major, interleaved RGB

  Image() = default;
  Image(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), data(w * h * 3, fill) {}

  double& at(std::size_t x, std::size_t y, std::size_t c) { return data[(y * width + x) * 3 + c]; }
  double at(std::size_t x, std::size_t y, std::size_t c) const {
    return data[(y * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

inline constexpr std::array<double, 3> kImageNetMean = {0.485, 0.456, 0.406};
inline constexpr std::array<double, 3> kImageNetStd = {0.229, 0.224, 0.225};

// Rounds every channel to the nearest multiple of 1/255 (what a P6 file
// stores), clamping to [0, 1].
void quantize(Image& img);

// Binary P6 with maxval 255.
Image read_ppm(const std::string& path);
void write_ppm(const Image& img, const std::string& path);

// Nearest-neighbor resize to size x size, then per-channel
// (x - mean) / std. Result is [3, size, size].
Tensor preprocess(const Image& img, std::size_t size);

}  // namespace freezelab
