#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "freezelab/error.hpp"
#include "freezelab/train.hpp"

namespace freezelab {

namespace {

struct GridView {
  std::size_t batch, channels, grid;
  std::size_t at(std::size_t n, std::size_t c, std::size_t gy, std::size_t gx) const {
    return ((n * channels + c) * grid + gy) * grid + gx;
  }
};

GridView view_of(const Tensor& preds) {
  if (preds.rank() != 4 || preds.dim(2) != preds.dim(3) || preds.dim(1) <= kClassOffset) {
    throw ShapeError("detection head must be [N, 5 + C, G, G], got " +
                     shape_to_string(preds.shape()));
  }
  return {preds.dim(0), preds.dim(1), preds.dim(2)};
}

// log(1 + e^z) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double bce_logits(double z, double y) { return softplus(z) - y * z; }

struct IouGrad {
  double iou = 0;
  double d_cx = 0, d_cy = 0, d_w = 0, d_h = 0;
};

// IoU of a center-format prediction with a center-format target, and its
// gradient w.r.t. the prediction.
IouGrad iou_and_grad(double cx, double cy, double w, double h, const Label& gt) {
  IouGrad r;
  const double px1 = cx - w / 2, px2 = cx + w / 2, py1 = cy - h / 2, py2 = cy + h / 2;
  const double gx1 = gt.cx - gt.w / 2, gx2 = gt.cx + gt.w / 2;
  const double gy1 = gt.cy - gt.h / 2, gy2 = gt.cy + gt.h / 2;
  const double iw = std::min(px2, gx2) - std::max(px1, gx1);
  const double ih = std::min(py2, gy2) - std::max(py1, gy1);
  if (iw <= 0 || ih <= 0) return r;
  const double inter = iw * ih;
  const double pa = w * h;
  const double uni = pa + gt.w * gt.h - inter;
  if (uni <= 0) return r;
  r.iou = inter / uni;
  const double d_inter = (uni + inter) / (uni * uni);
  const double d_area = -inter / (uni * uni);
  const double dI_dx1 = px1 > gx1 ? -ih : 0.0;
  const double dI_dx2 = px2 < gx2 ? ih : 0.0;
  const double dI_dy1 = py1 > gy1 ? -iw : 0.0;
  const double dI_dy2 = py2 < gy2 ? iw : 0.0;
  r.d_cx = d_inter * (dI_dx1 + dI_dx2);
  r.d_cy = d_inter * (dI_dy1 + dI_dy2);
  r.d_w = d_inter * 0.5 * (dI_dx2 - dI_dx1) + d_area * h;
  r.d_h = d_inter * 0.5 * (dI_dy2 - dI_dy1) + d_area * w;
  return r;
}

std::size_t cell_of(double v, std::size_t grid) {
  const double scaled = std::floor(v * static_cast<double>(grid));
  return static_cast<std::size_t>(std::clamp(scaled, 0.0, static_cast<double>(grid - 1)));
}

}  // namespace

Label decode_cell(const Tensor& preds, std::size_t n, std::size_t gy, std::size_t gx) {
  const GridView v = view_of(preds);
  const auto p = preds.values();
  const double g = static_cast<double>(v.grid);
  Label out;
  out.cx = (static_cast<double>(gx) + sigmoid_value(p[v.at(n, 0, gy, gx)])) / g;
  out.cy = (static_cast<double>(gy) + sigmoid_value(p[v.at(n, 1, gy, gx)])) / g;
  out.w = sigmoid_value(p[v.at(n, 2, gy, gx)]);
  out.h = sigmoid_value(p[v.at(n, 3, gy, gx)]);
  return out;
}

LossResult detection_loss(Tape& tape, const Tensor& preds, std::span<const Target> targets,
                          const TrainConfig& cfg) {
  const GridView v = view_of(preds);
  const std::size_t num_classes = v.channels - kClassOffset;
  const auto p = preds.values();
  const double g = static_cast<double>(v.grid);

  // Assignment: center cell per target.
  struct Assigned {
    std::size_t n, gy, gx;
    Label label;
  };
  std::vector<Assigned> assigned;
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> positive_cells;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::set<int>> cell_classes;
  for (const Target& t : targets) {
    if (t.image >= v.batch) throw Error("detection_loss: target image index out of range");
    if (t.label.class_id < 0 || static_cast<std::size_t>(t.label.class_id) >= num_classes) {
      throw Error("detection_loss: class id " + std::to_string(t.label.class_id) +
                  " out of range");
    }
    Assigned a{t.image, cell_of(t.label.cy, v.grid), cell_of(t.label.cx, v.grid), t.label};
    assigned.push_back(a);
    positive_cells.insert({a.n, a.gy, a.gx});
    cell_classes[{a.n, a.gy, a.gx}].insert(a.label.class_id);
  }

  std::vector<double> grad(p.size(), 0.0);
  LossTerms terms;

  // Objectness over every cell.
  const std::size_t cells = v.batch * v.grid * v.grid;
  const double obj_scale = 1.0 / static_cast<double>(cells);
  for (std::size_t n = 0; n < v.batch; ++n) {
    for (std::size_t gy = 0; gy < v.grid; ++gy) {
      for (std::size_t gx = 0; gx < v.grid; ++gx) {
        const std::size_t k = v.at(n, kObjChannel, gy, gx);
        const double y = positive_cells.count({n, gy, gx}) ? 1.0 : 0.0;
        terms.obj += bce_logits(p[k], y);
        grad[k] += (sigmoid_value(p[k]) - y) * obj_scale;
      }
    }
  }
  terms.obj *= obj_scale;

  // Classes at positive cells.
  if (!positive_cells.empty()) {
    const double cls_scale =
        cfg.gain_cls / static_cast<double>(positive_cells.size() * num_classes);
    for (const auto& [cell, classes] : cell_classes) {
      const auto [n, gy, gx] = cell;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const std::size_t k = v.at(n, kClassOffset + c, gy, gx);
        const double y = classes.count(static_cast<int>(c)) ? 1.0 : 0.0;
        terms.cls += bce_logits(p[k], y) * cls_scale;
        grad[k] += (sigmoid_value(p[k]) - y) * cls_scale;
      }
    }
  }

  // Boxes, one term per target.
  if (!assigned.empty()) {
    const double box_scale = cfg.gain_box / static_cast<double>(assigned.size());
    for (const Assigned& a : assigned) {
      const std::size_t kx = v.at(a.n, 0, a.gy, a.gx), ky = v.at(a.n, 1, a.gy, a.gx);
      const std::size_t kw = v.at(a.n, 2, a.gy, a.gx), kh = v.at(a.n, 3, a.gy, a.gx);
      const double sx = sigmoid_value(p[kx]), sy = sigmoid_value(p[ky]);
      const double sw = sigmoid_value(p[kw]), sh = sigmoid_value(p[kh]);
      const double cx = (static_cast<double>(a.gx) + sx) / g;
      const double cy = (static_cast<double>(a.gy) + sy) / g;
      const IouGrad r = iou_and_grad(cx, cy, sw, sh, a.label);
      terms.box += (1.0 - r.iou) * box_scale;
      grad[kx] -= box_scale * r.d_cx * sx * (1 - sx) / g;
      grad[ky] -= box_scale * r.d_cy * sy * (1 - sy) / g;
      grad[kw] -= box_scale * r.d_w * sw * (1 - sw);
      grad[kh] -= box_scale * r.d_h * sh * (1 - sh);
    }
  }

  terms.total = terms.box + terms.cls + terms.obj;
  LossResult result;
  result.terms = terms;
  result.total = tape.record("detection_loss", Shape{1}, std::vector<double>{terms.total}, {preds},
                             [grad = std::move(grad)](const NodeGrads& ng) {
                               const double d = ng.output[0];
                               for (std::size_t i = 0; i < grad.size(); ++i) {
                                 ng.inputs[0][i] += d * grad[i];
                               }
                             });
  return result;
}

std::vector<std::vector<Detection>> decode_detections(const Tensor& preds, double image_size,
                                                      double min_conf) {
  const GridView v = view_of(preds);
  const std::size_t num_classes = v.channels - kClassOffset;
  const auto p = preds.values();
  std::vector<std::vector<Detection>> out(v.batch);
  for (std::size_t n = 0; n < v.batch; ++n) {
    for (std::size_t gy = 0; gy < v.grid; ++gy) {
      for (std::size_t gx = 0; gx < v.grid; ++gx) {
        const double obj = sigmoid_value(p[v.at(n, kObjChannel, gy, gx)]);
        double best = -1.0;
        int best_c = 0;
        for (std::size_t c = 0; c < num_classes; ++c) {
          const double s = sigmoid_value(p[v.at(n, kClassOffset + c, gy, gx)]);
          if (s > best) {
            best = s;
            best_c = static_cast<int>(c);
          }
        }
        const double conf = obj * best;
        if (conf < min_conf) continue;
        const Label l = decode_cell(preds, n, gy, gx);
        Detection d;
        d.class_id = best_c;
        d.confidence = conf;
        d.box.x1 = std::clamp((l.cx - l.w / 2) * image_size, 0.0, image_size);
        d.box.x2 = std::clamp((l.cx + l.w / 2) * image_size, 0.0, image_size);
        d.box.y1 = std::clamp((l.cy - l.h / 2) * image_size, 0.0, image_size);
        d.box.y2 = std::clamp((l.cy + l.h / 2) * image_size, 0.0, image_size);
        out[n].push_back(d);
      }
    }
  }
  return out;
}

}  // namespace freezelab
