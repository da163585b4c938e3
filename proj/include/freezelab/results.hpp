#pragma once

// Published benchmark results, the tolerance-based recommendation rule,
// correlation analysis and the reference gradient-norm table.

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace freezelab {

enum class ModelFamily { v8, v10 };

struct Approach {
  enum class Kind { scratch, finetune, frozen };
  Kind kind = Kind::scratch;
  std::size_t k = 0;  // frozen blocks, only for Kind::frozen

  bool operator==(const Approach&) const = default;
};

// "scratch", "finetune", "fr_<k>".
Approach parse_approach(std::string_view name);
std::string to_string(const Approach& a);
std::string_view to_string(ModelFamily f);

struct ResultRecord {
  ModelFamily family = ModelFamily::v8;
  char variant = 'n';  // n, s, m, l
  Approach approach;
  std::string dataset;
  double gpu_mb = 0;
  double time_min = 0;
  double map50 = 0;
  double map5095 = 0;
  bool appendix_a = false;

  // e.g. "v8-l fr_9"
  std::string label() const;
};

// Schema `family,variant,approach,dataset,gpu_mb,time_min,map50,map5095[,flags]`.
// Keys (family, variant, approach, dataset) must be unique within the default
// rows and within the appendix_a rows.
std::vector<ResultRecord> parse_results_csv(std::string_view text, const std::string& source);
std::vector<ResultRecord> load_results_csv(const std::string& path);
void write_results_csv(std::ostream& out, std::span<const ResultRecord> records);

// The embedded asset. Appendix rows are left out unless asked for.
std::vector<ResultRecord> embedded_paper_results(bool include_appendix = false);

inline constexpr double kDefaultTolerance = 0.015;

struct Recommendation {
  ResultRecord chosen;
  ResultRecord best;
  double gpu_savings_pct = 0;
  double perf_drop_pct = 0;
  std::size_t pool_size = 0;
};

// best = argmax map50 over the dataset's non-appendix records; candidates are
// those with map50 >= best * (1 - tolerance); the cheapest on GPU wins, ties
// by higher map50 then approach name.
Recommendation recommend(std::span<const ResultRecord> records, std::string_view dataset,
                         double tolerance = kDefaultTolerance);

// Half-up rounding to a number of decimals, as the published tables print.
double round_half_up(double v, int decimals);

nlohmann::json to_json(const ResultRecord& r);
nlohmann::json to_json(const Recommendation& r);

enum class ResultField { gpu_mb, time_min, map50, map5095 };
ResultField parse_result_field(std::string_view name);

double pearson(std::span<const double> x, std::span<const double> y);
double pearson(std::span<const ResultRecord> records, ResultField x, ResultField y);

struct GradStatsRow {
  std::string dataset;
  std::string strategy;
  double mean_norm = 0;
  double std_norm = 0;
  double cv_pct = 0;
};

std::vector<GradStatsRow> embedded_grad_stats_table();

}  // namespace freezelab
