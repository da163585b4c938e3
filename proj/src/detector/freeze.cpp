#include <algorithm>
#include <cctype>
#include <sstream>
#include <string>

#include "freezelab/assets.hpp"
#include "freezelab/detector.hpp"
#include "freezelab/error.hpp"

namespace freezelab {

FreezePlan make_freeze_plan(const Model& model, std::size_t k) {
  const std::size_t blocks = model.arch().num_blocks();
  if (k > blocks) {
    throw Error("make_freeze_plan: k = " + std::to_string(k) + " outside [0, " +
                std::to_string(blocks) + "]");
  }
  FreezePlan plan;
  plan.k_blocks = k;
  std::size_t frozen = 0;
  const auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].block < k) {
      plan.frozen_param_ids.insert(i);
      frozen += params[i].value.numel();
    }
  }
  const std::size_t total = model.total_params();
  plan.frozen_fraction =
      frozen == total ? 100.0 : 100.0 * static_cast<double>(frozen) / static_cast<double>(total);
  return plan;
}

void apply_freeze_plan(Model& model, const FreezePlan& plan) {
  auto& params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i].value.set_requires_grad(!plan.is_frozen(i));
  }
}

std::size_t preset_blocks(FreezePreset preset) {
  switch (preset) {
    case FreezePreset::fr1: return 4;
    case FreezePreset::fr2: return 9;
    case FreezePreset::fr3: return 22;
  }
  return 0;
}

FreezePreset parse_preset(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "fr1") return FreezePreset::fr1;
  if (lower == "fr2") return FreezePreset::fr2;
  if (lower == "fr3") return FreezePreset::fr3;
  throw Error("unknown freeze preset '" + std::string(name) + "' (expected fr1, fr2 or fr3)");
}

ParamPartition partition_params(const Model& model) {
  ParamPartition p;
  for (const BlockSpec& b : model.arch().blocks) {
    switch (b.role) {
      case BlockRole::backbone: p.backbone += b.param_count; break;
      case BlockRole::neck: p.neck += b.param_count; break;
      case BlockRole::head: p.head += b.param_count; break;
    }
  }
  return p;
}

const std::map<std::string, double>& frozen_fraction_table() {
  static const std::map<std::string, double> table = [] {
    std::map<std::string, double> t;
    std::istringstream in{std::string(assets::text("frozen_fractions.csv"))};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (lineno == 1 || line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw ParseError("frozen_fractions.csv", lineno, "missing ','");
      t.emplace(line.substr(0, comma), std::stod(line.substr(comma + 1)));
    }
    return t;
  }();
  return table;
}

double reference_frozen_fraction(std::string_view approach) {
  const auto& table = frozen_fraction_table();
  auto it = table.find(std::string(approach));
  if (it != table.end()) return it->second;
  std::string names;
  for (const auto& [name, pct] : table) {
    if (!names.empty()) names += ", ";
    names += name;
  }
  throw Error("unknown approach '" + std::string(approach) + "'; valid names: " + names);
}

}  // namespace freezelab
