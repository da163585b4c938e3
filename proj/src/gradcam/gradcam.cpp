#include "freezelab/gradcam.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <utility>

#include "freezelab/error.hpp"

namespace freezelab {

namespace fs = std::filesystem;

namespace {

// [C, H, W] view of a 3-D or batch-1 4-D tensor.
struct Chw {
  std::size_t c, h, w;
};

Chw chw_of(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
  if (t.rank() == 4 && t.dim(0) == 1) return {t.dim(1), t.dim(2), t.dim(3)};
  throw ShapeError(std::string("gradcam_map: ") + what + " must be [C, H, W], got " +
                   shape_to_string(t.shape()));
}

}  // namespace

ActivationMap gradcam_map(const Tensor& activations, const Tensor& gradients) {
  const Chw a = chw_of(activations, "activations");
  const Chw g = chw_of(gradients, "gradients");
  if (a.c != g.c || a.h != g.h || a.w != g.w) {
    throw ShapeError("gradcam_map: activations " + shape_to_string(activations.shape()) +
                     " vs gradients " + shape_to_string(gradients.shape()));
  }
  const std::size_t plane = a.h * a.w;
  const auto av = activations.values();
  const auto gv = gradients.values();
  ActivationMap map{a.h, a.w, std::vector<double>(plane, 0.0)};
  for (std::size_t c = 0; c < a.c; ++c) {
    double w = 0;
    for (std::size_t i = 0; i < plane; ++i) w += gv[c * plane + i];
    w /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) map.values[i] += w * av[c * plane + i];
  }
  for (double& v : map.values) v = std::max(v, 0.0);
  return map;
}

void check_cam_block(const Model& model, std::size_t block) {
  const ModelArch& arch = model.arch();
  if (block >= arch.num_blocks()) {
    throw Error("gradcam: block " + std::to_string(block) + " out of range [0, " +
                std::to_string(arch.num_blocks() - 1) + "]");
  }
  switch (arch.blocks[block].kind) {
    case BlockKind::conv_down:
    case BlockKind::csp_like:
    case BlockKind::sppf_like:
    case BlockKind::conv:
      return;
    default:
      throw Error("gradcam: block " + std::to_string(block) + " (" +
                  std::string(to_string(arch.blocks[block].kind)) +
                  ") is not a convolutional feature map");
  }
}

CamCapture capture_gradcam(const Model& model, const Tensor& image, std::size_t block,
                           int class_id) {
  check_cam_block(model, block);
  if (image.rank() != 3) {
    throw ShapeError("gradcam: expected one [3, S, S] image, got " +
                     shape_to_string(image.shape()));
  }
  const int num_classes = static_cast<int>(model.num_classes());
  if (class_id >= num_classes) {
    throw Error("gradcam: class " + std::to_string(class_id) + " out of range");
  }
  // A grad-requiring input makes every block record, frozen or not.
  Shape shape{1, image.dim(0), image.dim(1), image.dim(2)};
  const auto iv = image.values();
  Tensor input(shape, std::vector<double>(iv.begin(), iv.end()), true);

  Tape tape;
  const std::vector<Tensor> outs = model.forward_all(tape, input);
  const Tensor& head = outs.back();
  const std::size_t plane = head.dim(2) * head.dim(3);
  const auto hv = head.values();

  CamTarget best;
  best.score = -1;
  for (std::size_t cell = 0; cell < plane; ++cell) {
    const double obj = sigmoid_value(hv[kObjChannel * plane + cell]);
    for (int c = 0; c < num_classes; ++c) {
      if (class_id >= 0 && c != class_id) continue;
      const double s =
          obj * sigmoid_value(hv[(kClassOffset + static_cast<std::size_t>(c)) * plane + cell]);
      if (s > best.score) best = {cell / head.dim(3), cell % head.dim(3), c, s};
    }
  }

  const std::size_t cell = best.gy * head.dim(3) + best.gx;
  const std::size_t io = kObjChannel * plane + cell;
  const std::size_t ic = (kClassOffset + static_cast<std::size_t>(best.class_id)) * plane + cell;
  const double so = sigmoid_value(hv[io]), sc = sigmoid_value(hv[ic]);
  Tensor score = tape.record("cam_score", Shape{1}, {so * sc}, {head},
                             [io, ic, so, sc](const NodeGrads& ng) {
                               ng.inputs[0][io] += ng.output[0] * sc * so * (1 - so);
                               ng.inputs[0][ic] += ng.output[0] * so * sc * (1 - sc);
                             });
  tape.backward(score);
  const Tensor& act = outs[block];
  if (!act.has_grad()) return {gradcam_map(act, Tensor(act.shape())), best};
  Tensor grad(act.shape(), std::vector<double>(act.grad().begin(), act.grad().end()));
  return {gradcam_map(act, grad), best};
}

MilestoneRecorder::MilestoneRecorder(Tensor image, std::size_t block, int class_id)
    : image_(std::move(image)), block_(block), class_id_(class_id) {}

void MilestoneRecorder::attach(TrainHooks& hooks) {
  auto previous = std::move(hooks.on_epoch_end);
  hooks.on_epoch_end = [this, previous](std::size_t epoch, const Model& m, bool improved) {
    if (previous) previous(epoch, m, improved);
    on_epoch_end(epoch, m, improved);
  };
}

void MilestoneRecorder::on_epoch_end(std::size_t epoch, const Model& model, bool improved) {
  const bool want_first = epoch == 0, want_tenth = epoch == 9;
  if (!want_first && !want_tenth && !improved) return;
  const ActivationMap map = capture_gradcam(model, image_, block_, class_id_).map;
  if (want_first) first_ = CamMilestone{"epoch_1", 1, map};
  if (want_tenth) tenth_ = CamMilestone{"epoch_10", 10, map};
  if (improved) best_ = CamMilestone{"best", epoch + 1, map};
}

std::vector<CamMilestone> MilestoneRecorder::milestones() const {
  std::vector<CamMilestone> out;
  for (const auto* m : {&first_, &tenth_, &best_}) {
    if (*m) out.push_back(**m);
  }
  return out;
}

std::vector<std::uint8_t> quantize_map(const ActivationMap& map) {
  std::vector<std::uint8_t> px(map.values.size(), 0);
  if (map.values.empty()) return px;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double min = *lo, range = *hi - *lo;
  if (!(range > 0)) return px;
  for (std::size_t i = 0; i < px.size(); ++i) {
    const double q = std::floor(255.0 * (map.values[i] - min) / range);
    px[i] = static_cast<std::uint8_t>(std::clamp(q, 0.0, 255.0));
  }
  return px;
}

void render_pgm(const ActivationMap& map, const std::string& path) {
  if (map.values.size() != map.width * map.height || map.values.empty()) {
    throw Error("render_pgm: map has inconsistent shape");
  }
  const std::vector<std::uint8_t> px = quantize_map(map);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << "P5\n" << map.width << ' ' << map.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  if (!out) throw IoError("write failed: " + path);
}

GrayImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    return t;
  };
  if (token() != "P5") throw ParseError(path + ": not a binary PGM (P5)");
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (std::stoul(token()) != 255) throw ParseError(path + ": maxval must be 255");
  } catch (const std::logic_error&) {
    throw ParseError(path + ": bad PGM header");
  }
  img.pixels.resize(img.width * img.height);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw ParseError(path + ": truncated pixel data");
  }
  return img;
}

nlohmann::json write_milestones(const std::vector<CamMilestone>& milestones,
                                const std::string& dir) {
  fs::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (const CamMilestone& m : milestones) {
    const std::string path = (fs::path(dir) / (m.tag + ".pgm")).string();
    render_pgm(m.map, path);
    index.push_back({{"milestone", m.tag}, {"epoch", m.epoch}, {"path", path}});
  }
  std::ofstream out(fs::path(dir) / "milestones.json");
  if (!out) throw IoError("cannot write milestone index in " + dir);
  out << index.dump(2) << '\n';
  return index;
}

}  // namespace freezelab
