#pragma once

// SGD training of the detector under a freeze plan: config, lr/momentum
// schedule, optimizer, simplified detection loss, trainer and report.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freezelab/detector.hpp"
#include "freezelab/grad_monitor.hpp"
#include "freezelab/labels.hpp"
#include "freezelab/metrics.hpp"
#include "freezelab/tensor.hpp"
#include "json.hpp"

namespace freezelab {

struct TrainConfig {
  int epochs = 1000;
  int patience = 30;
  int batch_size = 16;
  int img_size = 64;
  double lr0 = 1e-2;
  double lr_final = 1e-4;
  double momentum = 0.937;
  double weight_decay = 5e-4;
  double warmup_epochs = 3.0;
  double warmup_momentum = 0.8;
  double warmup_bias_lr = 0.1;
  double gain_box = 7.5;
  double gain_cls = 0.5;
  double gain_dfl = 1.5;  // carried for completeness; no DFL term exists
  std::uint64_t seed = 42;
  bool augment = false;

  // Throws Error naming the first invalid field.
  void validate() const;
};

// Exactly the field names above; unknown keys and wrong types are rejected.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig load_config(const std::string& path);

enum class ParamGroup { weights, biases };

// `epoch_progress` is fractional (epoch + batch / batches_per_epoch).
double lr_at(const TrainConfig& cfg, double epoch_progress, ParamGroup group);
double momentum_at(const TrainConfig& cfg, double epoch_progress);

struct OptState {
  // param id -> momentum buffer; only trainable parameters get one.
  std::map<std::size_t, std::vector<double>> velocity;
};

struct StepRates {
  double weight_lr = 0;
  double bias_lr = 0;
  double momentum = 0;
  // Multiplies every gradient; the trainer uses it for norm clipping.
  double grad_scale = 1.0;
};

// v <- m v + s g + wd theta (weights only); theta <- theta - lr v. Frozen
// parameters are skipped and never get state.
void sgd_step(std::vector<Parameter>& params, const GradMap& grads, OptState& state,
              const TrainConfig& cfg, const FreezePlan& plan, const StepRates& rates);

// Target of a batch: image index plus the normalized label.
struct Target {
  std::size_t image = 0;
  Label label;
};

struct LossTerms {
  double box = 0;
  double cls = 0;
  double obj = 0;
  double total = 0;
};

struct LossResult {
  Tensor total;  // scalar, differentiable w.r.t. the head grid
  LossTerms terms;
};

// Head grid [N, 5 + C, G, G]. Each target is assigned to the cell holding its
// center. box = gain_box * mean_t (1 - IoU); cls = gain_cls * mean BCE over
// positive cells x classes; obj = mean BCE over all cells.
LossResult detection_loss(Tape& tape, const Tensor& preds, std::span<const Target> targets,
                          const TrainConfig& cfg);

// Decoded predicted box of one cell, normalized center format.
Label decode_cell(const Tensor& preds, std::size_t n, std::size_t gy, std::size_t gx);

// Per image: one detection per cell with confidence sigmoid(obj) * max
// sigmoid(cls) >= min_conf, boxes in pixels of an image_size x image_size
// input.
std::vector<std::vector<Detection>> decode_detections(const Tensor& preds, double image_size,
                                                      double min_conf = 0.0);

struct Sample {
  Tensor image;  // [3, S, S], preprocessed
  std::vector<Label> labels;
};

struct Batch {
  Tensor images;  // [N, 3, S, S]
  std::vector<Target> targets;
};

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);

std::vector<GtBox> ground_truth_boxes(const Sample& sample);

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms train;
  double val_loss = 0;
  double map50 = 0;
  double map5095 = 0;
  std::optional<double> grad_norm;  // mean over positive batch norms
  double seconds = 0;               // wall time of the training steps
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  std::size_t stopped_epoch = 0;
  std::uint64_t trainable_state_bytes = 0;
  double wall_time = 0;
  std::vector<NormEntry> norm_log;
};

struct TrainHooks {
  std::function<void(std::size_t epoch, std::size_t batch, double norm)> on_batch;
  // `improved` is true when this epoch set a new best validation loss.
  std::function<void(std::size_t epoch, const Model& model, bool improved)> on_epoch_end;
};

struct ValidationResult {
  LossTerms loss;
  EvalResult eval;
};

ValidationResult validate(const Model& model, std::span<const Sample> samples,
                          const TrainConfig& cfg, const EvalOptions& options = {});

// Early stopping monitors validation total loss; training halts once
// epoch - best_epoch >= max(patience, 1). The best-epoch weights are restored
// into `model` before returning.
TrainReport train(Model& model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainConfig& cfg,
                  const FreezePlan& plan, const TrainHooks& hooks = {});

std::uint64_t trainable_state_bytes(const Model& model, const FreezePlan& plan);

// `epoch,loss_box,loss_cls,loss_obj,val_loss,map50,map5095,grad_norm`
void write_report_csv(std::ostream& out, const TrainReport& report);

}  // namespace freezelab
