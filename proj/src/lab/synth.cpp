#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <random>

#include "freezelab/dataset.hpp"
#include "freezelab/error.hpp"

namespace freezelab {

namespace {

using Rgb = std::array<double, 3>;

constexpr std::array<std::array<Rgb, kMaxSynthClasses>, 2> kPalettes = {{
    {{{0.86, 0.16, 0.14}, {0.14, 0.32, 0.88}, {0.16, 0.72, 0.22}, {0.92, 0.84, 0.12},
      {0.78, 0.18, 0.76}, {0.12, 0.80, 0.82}, {0.96, 0.52, 0.08}, {0.95, 0.95, 0.95}}},
    {{{0.98, 0.62, 0.70}, {0.98, 0.92, 0.40}, {0.52, 0.20, 0.70}, {0.20, 0.55, 0.55},
      {0.60, 0.90, 0.50}, {0.90, 0.40, 0.30}, {0.35, 0.35, 0.95}, {0.10, 0.10, 0.10}}},
}};

constexpr const char* kShapeNames[] = {"square", "disk", "triangle", "diamond"};
constexpr const char* kColorNames[2][kMaxSynthClasses] = {
    {"red", "blue", "green", "yellow", "magenta", "cyan", "orange", "white"},
    {"pink", "lemon", "purple", "teal", "lime", "coral", "indigo", "black"}};

// Whether pixel (px, py) of a size x size box belongs to shape s.
bool inside(int shape, double px, double py, double size) {
  const double u = (px + 0.5) / size, v = (py + 0.5) / size;  // [0, 1] in the box
  switch (shape) {
    case 0: return true;
    case 1: return (u - 0.5) * (u - 0.5) + (v - 0.5) * (v - 0.5) <= 0.25;
    case 2: return std::abs(u - 0.5) <= 0.5 * v;
    default: return std::abs(u - 0.5) + std::abs(v - 0.5) <= 0.5;
  }
}

struct Placed {
  std::size_t x0, y0, size;
};

bool overlaps(const Placed& a, const Placed& b) {
  return a.x0 < b.x0 + b.size && b.x0 < a.x0 + a.size && a.y0 < b.y0 + b.size &&
         b.y0 < a.y0 + a.size;
}

}  // namespace

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("SynthSpec: expected a JSON object");
  SynthSpec s;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "num_images") s.num_images = value.get<std::size_t>();
      else if (key == "image_size") s.image_size = value.get<std::size_t>();
      else if (key == "num_classes") s.num_classes = value.get<std::size_t>();
      else if (key == "min_objects") s.min_objects = value.get<std::size_t>();
      else if (key == "max_objects") s.max_objects = value.get<std::size_t>();
      else if (key == "noise_level") s.noise_level = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else if (key == "domain") s.domain = value.get<int>();
      else throw ParseError("SynthSpec: unknown field '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("SynthSpec: ") + e.what());
  }
  return s;
}

Dataset gen_synth_detection_set(const SynthSpec& spec) {
  if (spec.num_images == 0 || spec.image_size < 16) throw Error("SynthSpec: need images of size >= 16");
  if (spec.num_classes == 0 || spec.num_classes > kMaxSynthClasses) {
    throw Error("SynthSpec: num_classes must be in [1, " + std::to_string(kMaxSynthClasses) + "]");
  }
  if (spec.min_objects == 0 || spec.min_objects > spec.max_objects) {
    throw Error("SynthSpec: need 1 <= min_objects <= max_objects");
  }
  if (spec.noise_level < 0) throw Error("SynthSpec: noise_level must be non-negative");
  if (spec.domain != 0 && spec.domain != 1) throw Error("SynthSpec: domain must be 0 or 1");

  const std::size_t S = spec.image_size;
  const std::size_t cell = std::max<std::size_t>(1, S / kGridStride);
  const auto& palette = kPalettes[static_cast<std::size_t>(spec.domain)];
  Dataset data;
  for (std::size_t c = 0; c < spec.num_classes; ++c) {
    data.manifest.class_names.push_back(std::string(kColorNames[spec.domain][c]) + "_" +
                                        kShapeNames[c % 4]);
  }

  for (std::size_t i = 0; i < spec.num_images; ++i) {
    // Per-image stream so images are independent of each other's draws.
    std::mt19937_64 rng(spec.seed * 0x9e3779b97f4a7c15ULL + i + 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, spec.noise_level > 0 ? spec.noise_level : 1.0);

    Image img(S, S);
    const double jitter = 0.1 * (unit(rng) - 0.5);
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        Rgb base;
        if (spec.domain == 0) {
          base = {0.45 + jitter, 0.45 + jitter, 0.45 + jitter};
        } else {
          const double t = static_cast<double>(x + y) / static_cast<double>(2 * S);
          base = {0.30 + 0.25 * t + jitter, 0.22 + 0.15 * t + jitter, 0.12 + 0.10 * t};
        }
        for (std::size_t c = 0; c < 3; ++c) {
          img.at(x, y, c) = base[c] + (spec.noise_level > 0 ? noise(rng) : 0.0);
        }
      }
    }

    const std::size_t count = std::uniform_int_distribution<std::size_t>(
        spec.min_objects, spec.max_objects)(rng);
    std::vector<Placed> placed;
    std::vector<Label> labels;
    std::uniform_int_distribution<std::size_t> size_dist(S / 5, (S * 2) / 5);
    std::uniform_int_distribution<std::size_t> class_dist(0, spec.num_classes - 1);
    // Pixel coordinate in [lo, hi) whose offset inside its cell lies in the
    // middle half; 0 when no such coordinate was drawn.
    auto center_in_cell = [&](std::mt19937_64& r, std::size_t lo, std::size_t hi) -> std::size_t {
      if (hi <= lo) return 0;
      const std::size_t v = std::uniform_int_distribution<std::size_t>(lo, hi - 1)(r);
      const std::size_t off = v % cell;
      if (cell >= 4 && (off < cell / 4 || off >= cell - cell / 4)) return 0;
      return v;
    };
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t cls = class_dist(rng);
      for (int attempt = 0; attempt < 200; ++attempt) {
        const std::size_t size = size_dist(rng);
        // Centers sit in the inner half of a grid cell, away from cell
        // borders, so the center cell of every object is unambiguous.
        const std::size_t lo = (size + 1) / 2, hi = S - size / 2;
        const std::size_t cx = center_in_cell(rng, lo, hi);
        const std::size_t cy = center_in_cell(rng, lo, hi);
        if (cx == 0 || cy == 0) continue;
        const std::size_t x0 = cx - size / 2, y0 = cy - size / 2;
        if (x0 + size > S || y0 + size > S) continue;
        const Placed p{x0, y0, size};
        bool ok = true;
        for (const Placed& q : placed) {
          const bool same_cell = (2 * p.x0 + p.size) / (2 * cell) == (2 * q.x0 + q.size) / (2 * cell) &&
                                 (2 * p.y0 + p.size) / (2 * cell) == (2 * q.y0 + q.size) / (2 * cell);
          if (same_cell || overlaps(p, q)) ok = false;
        }
        if (!ok) continue;
        placed.push_back(p);
        const Rgb& color = palette[cls];
        const double shade = 0.08 * (unit(rng) - 0.5);
        const int shape = static_cast<int>(cls % 4);
        for (std::size_t y = 0; y < size; ++y) {
          for (std::size_t x = 0; x < size; ++x) {
            if (!inside(shape, static_cast<double>(x), static_cast<double>(y),
                        static_cast<double>(size))) {
              continue;
            }
            for (std::size_t c = 0; c < 3; ++c) {
              img.at(x0 + x, y0 + y, c) =
                  color[c] + shade + (spec.noise_level > 0 ? 0.5 * noise(rng) : 0.0);
            }
          }
        }
        const double s = static_cast<double>(S);
        labels.push_back({static_cast<int>(cls), snap_coord((x0 + size / 2.0) / s),
                          snap_coord((y0 + size / 2.0) / s), snap_coord(size / s),
                          snap_coord(size / s)});
        break;
      }
    }
    quantize(img);
    char stem[32];
    std::snprintf(stem, sizeof stem, "img_%05zu", i);
    data.manifest.images.push_back({stem, S, S});
    data.manifest.labels.push_back(std::move(labels));
    data.images.push_back(std::move(img));
  }
  return data;
}

}  // namespace freezelab
