#pragma once

// Detection evaluation: IoU, class-aware greedy NMS, 101-point interpolated
// AP, and mAP@50 / mAP@50:95.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"

namespace freezelab {

// Corner box. x1 <= x2, y1 <= y2.
struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  double area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const Box&) const = default;
};

struct Detection {
  Box box;
  int class_id = 0;
  double confidence = 0;
};

struct GtBox {
  Box box;
  int class_id = 0;
};

// IoU thresholds 0.50, 0.55, ..., 0.95.
inline constexpr std::size_t kNumIouThresholds = 10;
double iou_threshold(std::size_t i);

double iou(const Box& a, const Box& b);

// Greedy per-class suppression in descending confidence (ties keep input
// order). A detection is dropped iff a kept same-class detection overlaps it
// with IoU > iou_threshold. Output is sorted by confidence, descending.
std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold = 0.7);

// AP of one class over a set of images. Detections are matched greedily in
// descending confidence (ties by image, then input order) to the unmatched
// ground truth of that class with the highest IoU >= iou_threshold.
// No ground truths gives 0.
double average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                         const std::vector<std::vector<GtBox>>& gts_per_image, int class_id,
                         double iou_threshold);

// Single-image convenience form; every detection and gt is treated as class 0.
double average_precision(std::span<const Detection> dets, std::span<const GtBox> gts,
                         double iou_threshold);

struct EvalOptions {
  double conf_threshold = 0.5;
  double nms_iou = 0.7;
  // Skips suppression (NMS-free heads).
  bool apply_nms = true;
};

struct ClassAp {
  int class_id = 0;
  std::size_t num_gt = 0;
  std::array<double, kNumIouThresholds> ap{};
};

struct EvalResult {
  // Only classes that have ground truth somewhere in the set.
  std::vector<ClassAp> per_class;
  double map50 = 0;
  double map5095 = 0;
};

EvalResult evaluate(const std::vector<std::vector<Detection>>& dets_per_image,
                    const std::vector<std::vector<GtBox>>& gts_per_image, int num_classes,
                    const EvalOptions& options = {});

nlohmann::json to_json(const EvalResult& result);

}  // namespace freezelab
