#pragma once

// Detection datasets: YOLO label files, on-disk layout, stratified splits,
// offline augmentation, synthetic generation and class histograms.
//
// Directory layout:
//   classes.txt          one class name per line
//   images/<stem>.ppm
//   labels/<stem>.txt    `class cx cy w h` per line, normalized
//   splits.json          optional {"train": [stems], "test": [...], "val": [...]}
//   dataset.json         optional {"augmented": bool}

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freezelab/image.hpp"
#include "freezelab/labels.hpp"
#include "freezelab/metrics.hpp"
#include "freezelab/train.hpp"
#include "json.hpp"

namespace freezelab {

struct ImageEntry {
  std::string stem;
  std::size_t width = 0;
  std::size_t height = 0;
};

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  std::vector<std::size_t> val;
};

struct DatasetManifest {
  std::vector<ImageEntry> images;
  std::vector<std::vector<Label>> labels;  // parallel to images
  std::vector<std::string> class_names;
  std::optional<Splits> splits;
  bool augmented = false;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Image> images;  // parallel to manifest.images
};

// Label coordinates are snapped to multiples of 2^-24 so that flips and
// rotations round-trip exactly.
double snap_coord(double v);

// Each line `class cx cy w h`; blank lines are skipped. Throws ParseError
// (with the line number) on bad tokens, negative classes or coordinates
// outside [0, 1].
std::vector<Label> parse_yolo_labels(std::string_view text, const std::string& source);
std::vector<std::pair<int, Box>> load_yolo_labels(const std::string& path, double image_width,
                                                  double image_height);
std::string format_yolo_labels(std::span<const Label> labels);

Dataset load_dataset(const std::string& dir);
void save_dataset(const Dataset& data, const std::string& dir);

// Ratios are (train, test, val) and must sum to 1. Greedy iterative
// stratification on class presence, deterministic by seed.
Splits split_dataset(const DatasetManifest& manifest, std::array<double, 3> ratios,
                     std::uint64_t seed);

enum class AugmentOp { hflip, vflip, rotate90, random_crop, gaussian_blur, gaussian_noise };

AugmentOp parse_augment_op(std::string_view name);
std::string_view to_string(AugmentOp op);

inline constexpr double kNoiseSigma = 0.1;
inline constexpr double kBlurSigma = 1.0;

std::pair<Image, std::vector<Label>> augment(const Image& img, std::span<const Label> labels,
                                             AugmentOp op, std::uint64_t seed);

// Originals followed by one augmented copy per (image, op); marks the
// result augmented and drops any splits.
Dataset augment_dataset(const Dataset& data, std::span<const AugmentOp> ops, std::uint64_t seed);

struct SynthSpec {
  std::size_t num_images = 50;
  std::size_t image_size = 64;
  std::size_t num_classes = 2;
  std::size_t min_objects = 1;
  std::size_t max_objects = 3;
  double noise_level = 0.05;
  std::uint64_t seed = 0;
  // 0 and 1 use different palettes and backgrounds.
  int domain = 0;
};

inline constexpr std::size_t kMaxSynthClasses = 8;

SynthSpec synth_spec_from_json(const nlohmann::json& j);
Dataset gen_synth_detection_set(const SynthSpec& spec);

struct ClassHistogram {
  std::vector<std::size_t> images_per_class;
  std::vector<std::size_t> instances_per_class;
};

ClassHistogram class_histogram(const DatasetManifest& manifest);

// Preprocessed training samples for the given image indices.
std::vector<Sample> to_samples(const Dataset& data, std::span<const std::size_t> indices,
                               std::size_t size);
std::vector<Sample> to_samples(const Dataset& data, std::size_t size);

}  // namespace freezelab
