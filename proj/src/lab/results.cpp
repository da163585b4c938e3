#include "freezelab/results.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "freezelab/assets.hpp"
#include "freezelab/error.hpp"

namespace freezelab {

namespace {

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_number(const std::string& s, const std::string& source, std::size_t line,
                    const char* field) {
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(source, line, std::string("bad ") + field + " '" + s + "'");
  }
  return v;
}

template <typename Fn>
void for_each_line(std::string_view text, Fn fn) {
  std::size_t lineno = 0, start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++lineno;
    if (!line.empty()) fn(lineno, line);
    start = end + 1;
  }
}

double field_value(const ResultRecord& r, ResultField f) {
  switch (f) {
    case ResultField::gpu_mb: return r.gpu_mb;
    case ResultField::time_min: return r.time_min;
    case ResultField::map50: return r.map50;
    case ResultField::map5095: return r.map5095;
  }
  return 0;
}

}  // namespace

Approach parse_approach(std::string_view name) {
  if (name == "scratch") return {Approach::Kind::scratch, 0};
  if (name == "finetune") return {Approach::Kind::finetune, 0};
  if (name.rfind("fr_", 0) == 0 && name.size() > 3) {
    std::size_t k = 0;
    const char* first = name.data() + 3;
    const char* last = name.data() + name.size();
    const auto [ptr, ec] = std::from_chars(first, last, k);
    if (ec == std::errc() && ptr == last && k > 0) return {Approach::Kind::frozen, k};
  }
  throw Error("unknown approach '" + std::string(name) + "'");
}

std::string to_string(const Approach& a) {
  switch (a.kind) {
    case Approach::Kind::scratch: return "scratch";
    case Approach::Kind::finetune: return "finetune";
    case Approach::Kind::frozen: return "fr_" + std::to_string(a.k);
  }
  return "?";
}

std::string_view to_string(ModelFamily f) { return f == ModelFamily::v8 ? "v8" : "v10"; }

std::string ResultRecord::label() const {
  return std::string(to_string(family)) + "-" + variant + " " + to_string(approach);
}

std::vector<ResultRecord> parse_results_csv(std::string_view text, const std::string& source) {
  std::vector<ResultRecord> out;
  using Key = std::tuple<bool, ModelFamily, char, std::string, std::string>;
  std::set<Key> seen;
  bool header_seen = false;
  for_each_line(text, [&](std::size_t lineno, std::string_view line) {
    if (!header_seen && line.rfind("family,", 0) == 0) {
      header_seen = true;
      return;
    }
    header_seen = true;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 8 && f.size() != 9) {
      throw ParseError(source, lineno, "expected 8 or 9 fields, got " + std::to_string(f.size()));
    }
    ResultRecord r;
    if (f[0] == "v8") {
      r.family = ModelFamily::v8;
    } else if (f[0] == "v10") {
      r.family = ModelFamily::v10;
    } else {
      throw ParseError(source, lineno, "unknown family '" + f[0] + "'");
    }
    if (f[1].size() != 1 || std::string_view("nsml").find(f[1][0]) == std::string_view::npos) {
      throw ParseError(source, lineno, "unknown variant '" + f[1] + "'");
    }
    r.variant = f[1][0];
    try {
      r.approach = parse_approach(f[2]);
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
    if (f[3].empty()) throw ParseError(source, lineno, "empty dataset name");
    r.dataset = f[3];
    r.gpu_mb = parse_number(f[4], source, lineno, "gpu_mb");
    r.time_min = parse_number(f[5], source, lineno, "time_min");
    r.map50 = parse_number(f[6], source, lineno, "map50");
    r.map5095 = parse_number(f[7], source, lineno, "map5095");
    if (r.gpu_mb <= 0 || r.time_min <= 0) {
      throw ParseError(source, lineno, "gpu_mb and time_min must be positive");
    }
    if (r.map50 < 0 || r.map50 > 1 || r.map5095 < 0 || r.map5095 > 1) {
      throw ParseError(source, lineno, "mAP values must lie in [0, 1]");
    }
    if (f.size() == 9 && !f[8].empty()) {
      if (f[8] != "appendix_a") throw ParseError(source, lineno, "unknown flag '" + f[8] + "'");
      r.appendix_a = true;
    }
    const Key key{r.appendix_a, r.family, r.variant, to_string(r.approach), r.dataset};
    if (!seen.insert(key).second) {
      throw ParseError(source, lineno, "duplicate record " + r.label() + " on " + r.dataset);
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::vector<ResultRecord> load_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_results_csv(buf.str(), path);
}

void write_results_csv(std::ostream& out, std::span<const ResultRecord> records) {
  out << "family,variant,approach,dataset,gpu_mb,time_min,map50,map5095,flags\n";
  char buf[160];
  for (const ResultRecord& r : records) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", r.gpu_mb, r.time_min, r.map50,
                  r.map5095);
    out << to_string(r.family) << ',' << r.variant << ',' << to_string(r.approach) << ','
        << r.dataset << ',' << buf << ',' << (r.appendix_a ? "appendix_a" : "") << '\n';
  }
}

std::vector<ResultRecord> embedded_paper_results(bool include_appendix) {
  std::vector<ResultRecord> all = parse_results_csv(assets::text("paper_results.csv"),
                                                    "paper_results.csv");
  if (!include_appendix) {
    std::erase_if(all, [](const ResultRecord& r) { return r.appendix_a; });
  }
  return all;
}

Recommendation recommend(std::span<const ResultRecord> records, std::string_view dataset,
                         double tolerance) {
  if (!(tolerance >= 0.0 && tolerance < 1.0)) {
    throw Error("recommend: tolerance must lie in [0, 1)");
  }
  std::vector<const ResultRecord*> rows;
  for (const ResultRecord& r : records) {
    if (!r.appendix_a && r.dataset == dataset) rows.push_back(&r);
  }
  if (rows.empty()) throw Error("recommend: no records for dataset '" + std::string(dataset) + "'");

  // Total orders keep the result independent of input order.
  auto cheaper = [](const ResultRecord* a, const ResultRecord* b) {
    if (a->gpu_mb != b->gpu_mb) return a->gpu_mb < b->gpu_mb;
    if (a->map50 != b->map50) return a->map50 > b->map50;
    const std::string na = to_string(a->approach), nb = to_string(b->approach);
    if (na != nb) return na < nb;
    return a->label() < b->label();
  };
  auto better = [&](const ResultRecord* a, const ResultRecord* b) {
    if (a->map50 != b->map50) return a->map50 > b->map50;
    return cheaper(a, b);
  };
  const ResultRecord* best = *std::min_element(rows.begin(), rows.end(), better);
  const double floor = best->map50 * (1.0 - tolerance);
  const ResultRecord* chosen = nullptr;
  std::size_t pool = 0;
  for (const ResultRecord* r : rows) {
    if (r->map50 < floor) continue;
    ++pool;
    if (!chosen || cheaper(r, chosen)) chosen = r;
  }
  Recommendation rec;
  rec.best = *best;
  rec.chosen = *chosen;
  rec.pool_size = pool;
  rec.gpu_savings_pct = 100.0 * (1.0 - chosen->gpu_mb / best->gpu_mb);
  rec.perf_drop_pct = best->map50 > 0 ? 100.0 * (best->map50 - chosen->map50) / best->map50 : 0.0;
  return rec;
}

double round_half_up(double v, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // The nudge absorbs representation error in values like 1.05.
  return std::floor(v * scale + 0.5 + 1e-9) / scale;
}

nlohmann::json to_json(const ResultRecord& r) {
  nlohmann::json j;
  j["family"] = to_string(r.family);
  j["variant"] = std::string(1, r.variant);
  j["approach"] = to_string(r.approach);
  j["dataset"] = r.dataset;
  j["gpu_mb"] = r.gpu_mb;
  j["time_min"] = r.time_min;
  j["map50"] = r.map50;
  j["map5095"] = r.map5095;
  if (r.appendix_a) j["appendix_a"] = true;
  return j;
}

nlohmann::json to_json(const Recommendation& r) {
  return {{"chosen", to_json(r.chosen)},
          {"best", to_json(r.best)},
          {"gpu_savings_pct", r.gpu_savings_pct},
          {"perf_drop_pct", r.perf_drop_pct},
          {"gpu_savings_pct_rounded", round_half_up(r.gpu_savings_pct, 0)},
          {"perf_drop_pct_rounded", round_half_up(r.perf_drop_pct, 1)},
          {"pool_size", r.pool_size}};
}

ResultField parse_result_field(std::string_view name) {
  if (name == "gpu_mb") return ResultField::gpu_mb;
  if (name == "time_min") return ResultField::time_min;
  if (name == "map50") return ResultField::map50;
  if (name == "map5095") return ResultField::map5095;
  throw Error("unknown result field '" + std::string(name) + "'");
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("pearson: length mismatch");
  if (x.size() < 2) throw Error("pearson: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0 || syy == 0) throw Error("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double pearson(std::span<const ResultRecord> records, ResultField x, ResultField y) {
  std::vector<double> xs, ys;
  xs.reserve(records.size());
  ys.reserve(records.size());
  for (const ResultRecord& r : records) {
    xs.push_back(field_value(r, x));
    ys.push_back(field_value(r, y));
  }
  return pearson(xs, ys);
}

std::vector<GradStatsRow> embedded_grad_stats_table() {
  const std::string source = "grad_norm_stats.csv";
  std::vector<GradStatsRow> rows;
  for_each_line(assets::text(source), [&](std::size_t lineno, std::string_view line) {
    if (lineno == 1) return;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 5) throw ParseError(source, lineno, "expected 5 fields");
    rows.push_back({f[0], f[1], parse_number(f[2], source, lineno, "mean_norm"),
                    parse_number(f[3], source, lineno, "std_norm"),
                    parse_number(f[4], source, lineno, "cv_pct")});
  });
  return rows;
}

}  // namespace freezelab
