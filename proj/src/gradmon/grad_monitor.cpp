#include "freezelab/grad_monitor.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "freezelab/error.hpp"

namespace freezelab {

double batch_grad_norm(const GradMap& grads) {
  double acc = 0.0;
  for (const auto& [id, g] : grads) {
    for (double v : g.values()) acc += v * v;
  }
  return std::sqrt(acc);
}

std::optional<double> epoch_mean_norm(std::span<const double> norms) {
  double sum = 0.0;
  std::size_t n = 0;
  for (double v : norms) {
    if (v > 0.0) {
      sum += v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

GradStats grad_stats(std::span<const double> means) {
  if (means.empty()) throw Error("grad_stats: empty series");
  GradStats s;
  double sum = 0.0;
  for (double v : means) sum += v;
  s.mean = sum / static_cast<double>(means.size());
  if (means.size() > 1) {
    double ss = 0.0;
    for (double v : means) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(means.size() - 1));
  }
  if (s.mean > 0.0) {
    s.cv_percent = 100.0 * s.std / s.mean;
  } else if (s.std > 0.0) {
    throw Error("grad_stats: coefficient of variation needs a positive mean");
  }
  return s;
}

FreezeHealth freeze_health(std::span<const double> frozen, std::span<const double> baseline) {
  if (frozen.size() < kHealthWindow || baseline.size() < kHealthWindow) {
    throw Error("freeze_health: both series need at least " + std::to_string(kHealthWindow) +
                " steps (got " + std::to_string(frozen.size()) + " and " +
                std::to_string(baseline.size()) + ")");
  }
  FreezeHealth h;
  // Compensated sum, so a constant series averages back to exactly itself.
  double sum = 0.0, comp = 0.0;
  for (std::size_t i = 0; i < kHealthWindow; ++i) {
    if (!(baseline[i] > 0.0)) {
      throw Error("freeze_health: baseline norm at step " + std::to_string(i) + " is not positive");
    }
    const double r = frozen[i] / baseline[i];
    h.ratios.push_back(r);
    const double t = sum + r;
    comp += std::abs(sum) >= std::abs(r) ? (sum - t) + r : (r - t) + sum;
    sum = t;
  }
  h.mean_ratio = (sum + comp) / static_cast<double>(kHealthWindow);
  h.verdict = h.mean_ratio < kHealthThreshold ? Verdict::at_risk : Verdict::ok;
  return h;
}

std::optional<std::string> freeze_budget_warning(double fraction, bool augmented) {
  if (!(fraction >= 0.0 && fraction <= 100.0)) {
    throw Error("freeze_budget_warning: fraction must be within [0, 100]");
  }
  if (!augmented || fraction < 50.0) return std::nullopt;
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "%.1f%% of parameters frozen on an augmented dataset; keep freezing below 50%%",
                fraction);
  return std::string(buf);
}

void write_norm_log(std::ostream& out, std::span<const NormEntry> entries) {
  out << "epoch,batch,norm\n";
  char buf[64];
  for (const NormEntry& e : entries) {
    std::snprintf(buf, sizeof buf, "%.17g", e.norm);
    out << e.epoch << ',' << e.batch << ',' << buf << '\n';
  }
}

std::vector<NormEntry> read_norm_log(std::istream& in, const std::string& source) {
  std::vector<NormEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (lineno == 1 && line.rfind("epoch", 0) == 0) continue;
    std::istringstream fields(line);
    std::string a, b, c;
    if (!std::getline(fields, a, ',') || !std::getline(fields, b, ',') ||
        !std::getline(fields, c)) {
      throw ParseError(source, lineno, "expected epoch,batch,norm");
    }
    try {
      std::size_t used = 0;
      NormEntry e;
      e.epoch = std::stoul(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      e.batch = std::stoul(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      e.norm = std::stod(c, &used);
      if (used != c.size()) throw std::invalid_argument(c);
      if (!(e.norm >= 0.0)) throw ParseError(source, lineno, "norm must be non-negative");
      entries.push_back(e);
    } catch (const std::logic_error&) {
      throw ParseError(source, lineno, "non-numeric field in '" + line + "'");
    }
  }
  return entries;
}

std::vector<double> epoch_means(std::span<const NormEntry> entries) {
  std::map<std::size_t, std::vector<double>> by_epoch;
  for (const NormEntry& e : entries) by_epoch[e.epoch].push_back(e.norm);
  std::vector<double> means;
  for (const auto& [epoch, norms] : by_epoch) {
    if (auto m = epoch_mean_norm(norms)) means.push_back(*m);
  }
  return means;
}

std::vector<double> step_norms(std::span<const NormEntry> entries) {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const NormEntry& e : entries) out.push_back(e.norm);
  return out;
}

std::string to_string(Verdict v) { return v == Verdict::ok ? "ok" : "at_risk"; }

nlohmann::json to_json(const GradStats& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"cv_percent", s.cv_percent}};
}

nlohmann::json to_json(const FreezeHealth& h) {
  return {{"ratios", h.ratios}, {"mean_ratio", h.mean_ratio}, {"verdict", to_string(h.verdict)}};
}

}  // namespace freezelab
