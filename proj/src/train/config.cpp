#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "freezelab/error.hpp"
#include "freezelab/train.hpp"

namespace freezelab {

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw Error("TrainConfig: " + what); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (patience < 0) fail("patience must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (img_size < 32 || img_size % 32 != 0) fail("img_size must be a positive multiple of 32");
  if (!(lr0 > 0)) fail("lr0 must be positive");
  if (!(lr_final > 0)) fail("lr_final must be positive");
  if (lr_final > lr0) fail("lr_final must not exceed lr0");
  if (!(momentum >= 0 && momentum < 1)) fail("momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) fail("weight_decay must be non-negative");
  if (!(warmup_epochs >= 0)) fail("warmup_epochs must be non-negative");
  if (!(warmup_momentum >= 0 && warmup_momentum < 1)) fail("warmup_momentum must be in [0, 1)");
  if (!(warmup_bias_lr >= 0)) fail("warmup_bias_lr must be non-negative");
  if (!(gain_box >= 0 && gain_cls >= 0 && gain_dfl >= 0)) fail("loss gains must be non-negative");
}

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("TrainConfig: expected a JSON object");
  TrainConfig c;
  static const std::set<std::string> known = {
      "epochs",        "patience",      "batch_size",      "img_size",       "lr0",
      "lr_final",      "momentum",      "weight_decay",    "warmup_epochs",  "warmup_momentum",
      "warmup_bias_lr", "gain_box",     "gain_cls",       "gain_dfl",       "seed",
      "augment"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ParseError("TrainConfig: unknown field '" + key + "'");
  }
  try {
    auto read = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    auto read_int = [&](const char* key, int& field) {
      if (!j.contains(key)) return;
      if (!j.at(key).is_number_integer()) {
        throw ParseError(std::string("TrainConfig: '") + key + "' must be an integer");
      }
      field = j.at(key).get<int>();
    };
    read_int("epochs", c.epochs);
    read_int("patience", c.patience);
    read_int("batch_size", c.batch_size);
    read_int("img_size", c.img_size);
    read("lr0", c.lr0);
    read("lr_final", c.lr_final);
    read("momentum", c.momentum);
    read("weight_decay", c.weight_decay);
    read("warmup_epochs", c.warmup_epochs);
    read("warmup_momentum", c.warmup_momentum);
    read("warmup_bias_lr", c.warmup_bias_lr);
    read("gain_box", c.gain_box);
    read("gain_cls", c.gain_cls);
    read("gain_dfl", c.gain_dfl);
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_unsigned()) {
        throw ParseError("TrainConfig: 'seed' must be a non-negative integer");
      }
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    if (j.contains("augment")) {
      if (!j.at("augment").is_boolean()) throw ParseError("TrainConfig: 'augment' must be a boolean");
      c.augment = j.at("augment").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("TrainConfig: ") + e.what());
  }
  try {
    c.validate();
  } catch (const ParseError&) {
    throw;
  } catch (const Error& e) {
    throw ParseError(e.what());
  }
  return c;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"img_size", c.img_size},
          {"lr0", c.lr0},
          {"lr_final", c.lr_final},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"warmup_epochs", c.warmup_epochs},
          {"warmup_momentum", c.warmup_momentum},
          {"warmup_bias_lr", c.warmup_bias_lr},
          {"gain_box", c.gain_box},
          {"gain_cls", c.gain_cls},
          {"gain_dfl", c.gain_dfl},
          {"seed", c.seed},
          {"augment", c.augment}};
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return config_from_json(j);
}

namespace {

// Linear decay lr0 -> lr_final across epochs 0 .. E-1. Written as a convex
// combination so both endpoints are exact.
double scheduled(const TrainConfig& c, double e) {
  const double span = static_cast<double>(c.epochs - 1);
  const double t = span > 0 ? std::min(1.0, e / span) : 0.0;
  return c.lr0 * (1.0 - t) + c.lr_final * t;
}

void check_progress(const TrainConfig& c, double e) {
  if (!(e >= 0.0 && e < static_cast<double>(c.epochs))) {
    throw Error("epoch progress " + std::to_string(e) + " outside [0, " +
                std::to_string(c.epochs) + ")");
  }
}

}  // namespace

double lr_at(const TrainConfig& c, double e, ParamGroup group) {
  check_progress(c, e);
  if (e >= c.warmup_epochs) return scheduled(c, e);
  const double target = scheduled(c, c.warmup_epochs);
  const double f = e / c.warmup_epochs;
  const double start = group == ParamGroup::biases ? c.warmup_bias_lr : 0.0;
  return f == 0.0 ? start : start + (target - start) * f;
}

double momentum_at(const TrainConfig& c, double e) {
  check_progress(c, e);
  if (e >= c.warmup_epochs) return c.momentum;
  const double f = e / c.warmup_epochs;
  return f == 0.0 ? c.warmup_momentum : c.warmup_momentum + (c.momentum - c.warmup_momentum) * f;
}

void sgd_step(std::vector<Parameter>& params, const GradMap& grads, OptState& state,
              const TrainConfig& cfg, const FreezePlan& plan, const StepRates& rates) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (plan.is_frozen(i)) continue;
    Parameter& p = params[i];
    auto it = grads.find(p.value.id());
    if (it == grads.end()) throw Error("sgd_step: no gradient for trainable parameter " + p.name);
    const auto g = it->second.values();
    auto theta = p.value.mutable_values();
    auto& v = state.velocity[i];
    if (v.empty()) v.assign(theta.size(), 0.0);
    const bool is_bias = p.kind == ParamKind::bias;
    const double wd = is_bias ? 0.0 : cfg.weight_decay;
    const double lr = is_bias ? rates.bias_lr : rates.weight_lr;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      v[k] = rates.momentum * v[k] + rates.grad_scale * g[k] + wd * theta[k];
      theta[k] -= lr * v[k];
    }
  }
}

std::uint64_t trainable_state_bytes(const Model& model, const FreezePlan& plan) {
  std::uint64_t total = 0, trainable = 0;
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    total += params[i].value.numel();
    if (!plan.is_frozen(i)) trainable += params[i].value.numel();
  }
  return total * 8 + trainable * 16;
}

}  // namespace freezelab
