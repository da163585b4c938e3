#include <algorithm>
#include <chrono>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "freezelab/error.hpp"
#include "freezelab/train.hpp"

namespace freezelab {

namespace {

// Global gradient norm cap for the step. Without normalization layers the
// first epochs of a scratch run can otherwise blow up.
constexpr double kMaxGradNorm = 10.0;

void check_sample(const Sample& s, std::size_t size) {
  const Shape expect{3, size, size};
  if (s.image.shape() != expect) {
    throw ShapeError("sample image must be " + shape_to_string(expect) + ", got " +
                     shape_to_string(s.image.shape()));
  }
}

// In-batch horizontal flip used when cfg.augment is set.
void flip_into(std::span<const double> src, std::span<double> dst, std::size_t size) {
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        dst[(c * size + y) * size + x] = src[(c * size + y) * size + (size - 1 - x)];
      }
    }
  }
}

Batch make_batch_impl(std::span<const Sample> samples, std::span<const std::size_t> indices,
                      std::mt19937_64* flip_rng) {
  if (indices.empty()) throw Error("make_batch: empty batch");
  const std::size_t size = samples[indices[0]].image.dim(1);
  const std::size_t per = 3 * size * size;
  std::vector<double> data(indices.size() * per);
  Batch b;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= samples.size()) throw Error("make_batch: sample index out of range");
    const Sample& s = samples[indices[i]];
    check_sample(s, size);
    std::span<double> dst(data.data() + i * per, per);
    const bool flip = flip_rng && ((*flip_rng)() & 1u);
    if (flip) {
      flip_into(s.image.values(), dst, size);
    } else {
      std::copy(s.image.values().begin(), s.image.values().end(), dst.begin());
    }
    for (Label l : s.labels) {
      if (flip) l.cx = 1.0 - l.cx;
      b.targets.push_back({i, l});
    }
  }
  b.images = Tensor(Shape{indices.size(), 3, size, size}, std::move(data));
  return b;
}

std::vector<std::vector<double>> snapshot(const Model& m) {
  std::vector<std::vector<double>> out;
  for (const Parameter& p : m.params()) out.emplace_back(p.value.values().begin(), p.value.values().end());
  return out;
}

void restore(Model& m, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = m.params()[i].value.mutable_values();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

Batch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  return make_batch_impl(samples, indices, nullptr);
}

std::vector<GtBox> ground_truth_boxes(const Sample& sample) {
  const double size = static_cast<double>(sample.image.dim(1));
  std::vector<GtBox> out;
  for (const Label& l : sample.labels) {
    GtBox g;
    g.class_id = l.class_id;
    g.box = {(l.cx - l.w / 2) * size, (l.cy - l.h / 2) * size, (l.cx + l.w / 2) * size,
             (l.cy + l.h / 2) * size};
    out.push_back(g);
  }
  return out;
}

ValidationResult validate(const Model& model, std::span<const Sample> samples,
                          const TrainConfig& cfg, const EvalOptions& options) {
  if (samples.empty()) throw Error("validate: empty dataset");
  ValidationResult r;
  std::vector<std::vector<Detection>> dets;
  std::vector<std::vector<GtBox>> gts;
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  for (std::size_t start = 0; start < samples.size(); start += bs) {
    std::vector<std::size_t> idx(std::min(bs, samples.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(samples, idx);
    Tape tape;
    NoGradScope scope(tape);
    const Tensor preds = model.forward(tape, batch.images);
    const LossTerms t = detection_loss(tape, preds, batch.targets, cfg).terms;
    const double wgt = static_cast<double>(idx.size()) / static_cast<double>(samples.size());
    r.loss.box += t.box * wgt;
    r.loss.cls += t.cls * wgt;
    r.loss.obj += t.obj * wgt;
    r.loss.total += t.total * wgt;
    const double size = static_cast<double>(batch.images.dim(2));
    for (auto& d : decode_detections(preds, size, options.conf_threshold)) dets.push_back(std::move(d));
    for (std::size_t i : idx) gts.push_back(ground_truth_boxes(samples[i]));
  }
  r.eval = evaluate(dets, gts, static_cast<int>(model.num_classes()), options);
  return r;
}

TrainReport train(Model& model, std::span<const Sample> train_set,
                  std::span<const Sample> val_set, const TrainConfig& cfg,
                  const FreezePlan& plan, const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty()) throw Error("train: empty training set");
  if (val_set.empty()) throw Error("train: empty validation set");
  for (const Sample& s : train_set) check_sample(s, static_cast<std::size_t>(cfg.img_size));
  for (const Sample& s : val_set) check_sample(s, static_cast<std::size_t>(cfg.img_size));
  for (const Sample& s : train_set) {
    for (const Label& l : s.labels) {
      if (l.class_id < 0 || static_cast<std::size_t>(l.class_id) >= model.num_classes()) {
        throw Error("train: label class " + std::to_string(l.class_id) + " out of range");
      }
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  apply_freeze_plan(model, plan);
  TrainReport report;
  report.trainable_state_bytes = trainable_state_bytes(model, plan);

  OptState state;
  const std::size_t n = train_set.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
  const std::size_t batches = (n + bs - 1) / bs;
  double best_loss = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_values = snapshot(model);
  const std::size_t patience = static_cast<std::size_t>(std::max(cfg.patience, 1));

  for (std::size_t epoch = 0; epoch < static_cast<std::size_t>(cfg.epochs); ++epoch) {
    const auto e0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed + epoch);
    std::shuffle(order.begin(), order.end(), rng);
    std::mt19937_64 flip_rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)));

    EpochRecord rec;
    rec.epoch = epoch;
    std::vector<double> norms;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * bs, std::min(bs, n - b * bs));
      const Batch batch = make_batch_impl(train_set, idx, cfg.augment ? &flip_rng : nullptr);
      const double progress = static_cast<double>(epoch) +
                              static_cast<double>(b) / static_cast<double>(batches);
      StepRates rates{lr_at(cfg, progress, ParamGroup::weights),
                      lr_at(cfg, progress, ParamGroup::biases), momentum_at(cfg, progress)};

      Tape tape;
      const Tensor preds = model.forward(tape, batch.images);
      const LossResult loss = detection_loss(tape, preds, batch.targets, cfg);
      const GradMap grads = tape.backward(loss.total);
      const double norm = batch_grad_norm(grads);
      norms.push_back(norm);
      report.norm_log.push_back({epoch, b, norm});
      if (hooks.on_batch) hooks.on_batch(epoch, b, norm);
      // The step follows the summed-over-batch convention (mean loss times
      // batch size), clipped; the monitor sees the raw batch-mean norm.
      const double batch_n = static_cast<double>(idx.size());
      rates.grad_scale = norm * batch_n > kMaxGradNorm ? kMaxGradNorm / norm : batch_n;
      sgd_step(model.params(), grads, state, cfg, plan, rates);

      rec.train.box += loss.terms.box / static_cast<double>(batches);
      rec.train.cls += loss.terms.cls / static_cast<double>(batches);
      rec.train.obj += loss.terms.obj / static_cast<double>(batches);
      rec.train.total += loss.terms.total / static_cast<double>(batches);
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
    rec.grad_norm = epoch_mean_norm(norms);

    const ValidationResult val = validate(model, val_set, cfg);
    rec.val_loss = val.loss.total;
    rec.map50 = val.eval.map50;
    rec.map5095 = val.eval.map5095;
    report.epochs.push_back(rec);

    const bool improved = rec.val_loss < best_loss;
    if (improved) {
      best_loss = rec.val_loss;
      report.best_epoch = epoch;
      best_values = snapshot(model);
    }
    report.stopped_epoch = epoch;
    if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, model, improved);
    if (epoch - report.best_epoch >= patience) break;
  }
  restore(model, best_values);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void write_report_csv(std::ostream& out, const TrainReport& report) {
  out << "epoch,loss_box,loss_cls,loss_obj,val_loss,map50,map5095,grad_norm\n";
  char buf[512];
  for (const EpochRecord& r : report.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.epoch,
                  r.train.box, r.train.cls, r.train.obj, r.val_loss, r.map50, r.map5095);
    out << buf;
    if (r.grad_norm) {
      std::snprintf(buf, sizeof buf, "%.17g", *r.grad_norm);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace freezelab
