#include "freezelab/metrics.hpp"

#include <algorithm>
#include <numeric>

#include <cstdio>

#include "freezelab/error.hpp"

namespace freezelab {

double iou_threshold(std::size_t i) { return static_cast<double>(50 + 5 * i) / 100.0; }

double iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

namespace {

std::vector<std::size_t> by_confidence(std::span<const Detection> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].confidence > dets[b].confidence;
  });
  return order;
}

}  // namespace

std::vector<Detection> nms(std::span<const Detection> dets, double iou_thr) {
  if (!(iou_thr > 0.0 && iou_thr <= 1.0)) throw Error("nms: IoU threshold must be in (0, 1]");
  std::vector<Detection> kept;
  for (std::size_t i : by_confidence(dets)) {
    const Detection& d = dets[i];
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == d.class_id && iou(k.box, d.box) > iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

double average_precision(const std::vector<std::vector<Detection>>& dets_per_image,
                         const std::vector<std::vector<GtBox>>& gts_per_image, int class_id,
                         double iou_thr) {
  struct Ref {
    std::size_t image;
    const Detection* det;
  };
  std::vector<Ref> refs;
  for (std::size_t im = 0; im < dets_per_image.size(); ++im) {
    for (const Detection& d : dets_per_image[im]) {
      if (d.class_id == class_id) refs.push_back({im, &d});
    }
  }
  std::stable_sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) {
    return a.det->confidence > b.det->confidence;
  });

  std::size_t num_gt = 0;
  std::vector<std::vector<bool>> matched(gts_per_image.size());
  for (std::size_t im = 0; im < gts_per_image.size(); ++im) {
    matched[im].assign(gts_per_image[im].size(), false);
    for (const GtBox& g : gts_per_image[im]) num_gt += g.class_id == class_id ? 1 : 0;
  }
  if (num_gt == 0) return 0.0;

  std::vector<double> precision, recall;
  precision.reserve(refs.size());
  recall.reserve(refs.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const Ref& ref = refs[r];
    if (ref.image < gts_per_image.size()) {
      const auto& gts = gts_per_image[ref.image];
      double best = -1.0;
      std::size_t best_j = 0;
      for (std::size_t j = 0; j < gts.size(); ++j) {
        if (gts[j].class_id != class_id || matched[ref.image][j]) continue;
        const double v = iou(ref.det->box, gts[j].box);
        if (v >= iou_thr && v > best) {
          best = v;
          best_j = j;
        }
      }
      if (best >= 0.0) {
        matched[ref.image][best_j] = true;
        ++tp;
      }
    }
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_gt));
  }

  // Precision envelope, right to left.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  std::size_t idx = 0;
  for (int k = 0; k <= 100; ++k) {
    const double level = static_cast<double>(k) / 100.0;
    while (idx < recall.size() && recall[idx] < level) ++idx;
    if (idx < recall.size()) sum += precision[idx];
  }
  return sum / 101.0;
}

double average_precision(std::span<const Detection> dets, std::span<const GtBox> gts,
                         double iou_thr) {
  std::vector<std::vector<Detection>> d(1);
  std::vector<std::vector<GtBox>> g(1);
  for (Detection x : dets) {
    x.class_id = 0;
    d[0].push_back(x);
  }
  for (GtBox x : gts) {
    x.class_id = 0;
    g[0].push_back(x);
  }
  return average_precision(d, g, 0, iou_thr);
}

EvalResult evaluate(const std::vector<std::vector<Detection>>& dets_per_image,
                    const std::vector<std::vector<GtBox>>& gts_per_image, int num_classes,
                    const EvalOptions& options) {
  if (num_classes <= 0) throw Error("evaluate: num_classes must be positive");
  if (dets_per_image.size() > gts_per_image.size()) {
    throw Error("evaluate: more detection lists than images");
  }
  std::vector<std::vector<Detection>> dets(gts_per_image.size());
  for (std::size_t im = 0; im < dets_per_image.size(); ++im) {
    std::vector<Detection> kept;
    for (const Detection& d : dets_per_image[im]) {
      if (d.confidence >= options.conf_threshold) kept.push_back(d);
    }
    dets[im] = options.apply_nms ? nms(kept, options.nms_iou) : std::move(kept);
  }

  EvalResult result;
  for (int c = 0; c < num_classes; ++c) {
    ClassAp entry;
    entry.class_id = c;
    for (const auto& gts : gts_per_image) {
      for (const GtBox& g : gts) entry.num_gt += g.class_id == c ? 1 : 0;
    }
    if (entry.num_gt == 0) continue;
    for (std::size_t t = 0; t < kNumIouThresholds; ++t) {
      entry.ap[t] = average_precision(dets, gts_per_image, c, iou_threshold(t));
    }
    result.per_class.push_back(entry);
  }
  if (result.per_class.empty()) return result;
  double s50 = 0.0, s5095 = 0.0;
  for (const ClassAp& c : result.per_class) {
    s50 += c.ap[0];
    double s = 0.0;
    for (double v : c.ap) s += v;
    s5095 += s / static_cast<double>(kNumIouThresholds);
  }
  const double n = static_cast<double>(result.per_class.size());
  result.map50 = s50 / n;
  result.map5095 = s5095 / n;
  return result;
}

nlohmann::json to_json(const EvalResult& result) {
  nlohmann::json classes = nlohmann::json::array();
  for (const ClassAp& c : result.per_class) {
    nlohmann::json ap = nlohmann::json::object();
    for (std::size_t t = 0; t < kNumIouThresholds; ++t) {
      char key[8];
      std::snprintf(key, sizeof key, "%.2f", iou_threshold(t));
      ap[key] = c.ap[t];
    }
    classes.push_back({{"class_id", c.class_id}, {"num_gt", c.num_gt}, {"ap", ap}});
  }
  return {{"map50", result.map50}, {"map5095", result.map5095}, {"classes", classes}};
}

}  // namespace freezelab
