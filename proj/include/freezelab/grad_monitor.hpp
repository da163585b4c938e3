#pragma once

// Gradient-norm tracking: per-batch L2 norms, per-epoch means, series
// statistics, and the frozen-vs-baseline health ratio.

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "freezelab/tensor.hpp"
#include "json.hpp"

namespace freezelab {

// sqrt of the sum of squares over every gradient present in the map.
double batch_grad_norm(const GradMap& grads);

// Mean over strictly positive entries; nullopt when there are none.
std::optional<double> epoch_mean_norm(std::span<const double> norms);

struct GradStats {
  double mean = 0;
  double std = 0;  // sample (n - 1) standard deviation; 0 for a single value
  double cv_percent = 0;
};

GradStats grad_stats(std::span<const double> epoch_means);

enum class Verdict { ok, at_risk };

inline constexpr std::size_t kHealthWindow = 20;
inline constexpr double kHealthThreshold = 0.6;

struct FreezeHealth {
  std::vector<double> ratios;
  double mean_ratio = 0;
  Verdict verdict = Verdict::ok;
};

// Ratios over the first 20 steps; at_risk iff the mean ratio is below 0.6.
FreezeHealth freeze_health(std::span<const double> frozen_norms,
                           std::span<const double> baseline_norms);

// Fires when an augmented (or shifted) dataset meets a plan freezing >= 50%.
std::optional<std::string> freeze_budget_warning(double frozen_fraction, bool dataset_is_augmented);

struct NormEntry {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double norm = 0;
};

// CSV with header `epoch,batch,norm`.
void write_norm_log(std::ostream& out, std::span<const NormEntry> entries);
std::vector<NormEntry> read_norm_log(std::istream& in, const std::string& source);

// Per-epoch means of a log, epochs in ascending order; epochs without a
// positive norm are skipped.
std::vector<double> epoch_means(std::span<const NormEntry> entries);

// Norms in log order, for step-wise comparisons.
std::vector<double> step_norms(std::span<const NormEntry> entries);

std::string to_string(Verdict v);
nlohmann::json to_json(const GradStats& stats);
nlohmann::json to_json(const FreezeHealth& health);

}  // namespace freezelab
