#pragma once

// GradCAM on the detector: channel weights are spatial means of the score
// gradient, the map is ReLU of the weighted activation sum. Includes the
// milestone schedule (epoch 1, epoch 10, best validation loss) and PGM output.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "freezelab/detector.hpp"
#include "freezelab/tensor.hpp"
#include "freezelab/train.hpp"
#include "json.hpp"

namespace freezelab {

struct ActivationMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // row-major, all >= 0

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
  bool operator==(const ActivationMap&) const = default;
};

// activations and gradients are [C, H, W] (or [1, C, H, W]).
ActivationMap gradcam_map(const Tensor& activations, const Tensor& gradients);

inline constexpr std::size_t kDefaultCamBlock = 8;

// Throws Error unless the block is a convolutional stage (conv_down,
// csp_like, sppf_like, conv).
void check_cam_block(const Model& model, std::size_t block);

struct CamTarget {
  std::size_t gy = 0;
  std::size_t gx = 0;
  int class_id = 0;
  double score = 0;  // sigmoid(obj) * sigmoid(cls)
};

struct CamCapture {
  ActivationMap map;
  CamTarget target;
};

// `image` is one preprocessed [3, S, S] sample. The score is
// sigmoid(obj) * sigmoid(cls_c) at the cell with the highest such value;
// class_id < 0 lets every class compete, otherwise only that class does.
CamCapture capture_gradcam(const Model& model, const Tensor& image,
                           std::size_t block = kDefaultCamBlock, int class_id = -1);

struct CamMilestone {
  std::string tag;        // "epoch_1", "epoch_10", "best"
  std::size_t epoch = 0;  // 1-based
  ActivationMap map;
};

// Hooks into training and captures maps at epochs 1 and 10 and at the epoch
// with the best validation loss so far.
class MilestoneRecorder {
 public:
  MilestoneRecorder(Tensor image, std::size_t block = kDefaultCamBlock, int class_id = -1);

  // Chains onto any existing on_epoch_end hook.
  void attach(TrainHooks& hooks);
  void on_epoch_end(std::size_t epoch, const Model& model, bool improved);

  // Present milestones in order: epoch_1, epoch_10 (if reached), best.
  std::vector<CamMilestone> milestones() const;

 private:
  Tensor image_;
  std::size_t block_;
  int class_id_;
  std::optional<CamMilestone> first_, tenth_, best_;
};

// P5, floor(255 * (v - min) / (max - min)); a constant map is all zeros.
std::vector<std::uint8_t> quantize_map(const ActivationMap& map);
void render_pgm(const ActivationMap& map, const std::string& path);

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;
};

GrayImage read_pgm(const std::string& path);

// Writes <dir>/<tag>.pgm per milestone plus <dir>/milestones.json, a list of
// {"milestone", "epoch", "path"}. Returns the index.
nlohmann::json write_milestones(const std::vector<CamMilestone>& milestones,
                                const std::string& dir);

}  // namespace freezelab
