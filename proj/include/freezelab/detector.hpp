#pragma once

// MiniYOLO: a 23-block detector keeping the YOLOv8 block boundaries
// (backbone 0-8, SPPF-style block 9, first concat at 14, head at 22) with
// small widths and a single P3/8 output grid.

#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "freezelab/tensor.hpp"

namespace freezelab {

enum class BlockRole { backbone, neck, head };
enum class BlockKind { conv_down, csp_like, sppf_like, upsample, concat, conv, head };

std::string_view to_string(BlockRole role);
std::string_view to_string(BlockKind kind);

struct BlockSpec {
  std::size_t index = 0;
  BlockRole role = BlockRole::backbone;
  BlockKind kind = BlockKind::conv;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t param_count = 0;
  // Total downsampling factor of the block's output relative to the input.
  std::size_t stride = 1;
};

struct ModelArch {
  std::vector<BlockSpec> blocks;
  // concat block -> (first source, second source), in concatenation order.
  std::map<std::size_t, std::pair<std::size_t, std::size_t>> wiring;
  std::size_t num_classes = 0;
  std::size_t width_base = 0;

  std::size_t num_blocks() const { return blocks.size(); }
};

inline constexpr std::size_t kNumBlocks = 23;
inline constexpr std::size_t kBackboneBlocks = 9;
inline constexpr std::size_t kHeadBlock = 22;
inline constexpr std::size_t kGridStride = 8;
// Channels per cell: tx, ty, tw, th, objectness, then one logit per class.
inline constexpr std::size_t kBoxChannels = 4;
inline constexpr std::size_t kObjChannel = 4;
inline constexpr std::size_t kClassOffset = 5;

enum class ParamKind { weight, bias };

struct Parameter {
  std::string name;
  std::size_t block = 0;
  ParamKind kind = ParamKind::weight;
  Tensor value;
};

class Model {
 public:
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelArch& arch() const { return arch_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t num_classes() const { return arch_.num_classes; }

  // Parameter id = position in this list.
  const std::vector<Parameter>& params() const { return params_; }
  std::vector<Parameter>& params() { return params_; }
  std::size_t total_params() const;

  // Output of every block for an NCHW [N, 3, S, S] batch; S divisible by 32.
  // The last entry is the head grid [N, 5 + C, S/8, S/8].
  std::vector<Tensor> forward_all(Tape& tape, const Tensor& images) const;
  Tensor forward(Tape& tape, const Tensor& images) const;

  // Deep copy with independent parameter storage.
  Model clone() const;

 private:
  friend Model build_model(std::size_t, std::size_t, std::uint64_t);
  Model() = default;

  struct ConvUnit {
    std::size_t weight = 0;
    std::size_t bias = 0;
    int stride = 1;
    int padding = 0;
    bool activate = true;
    // Weight standardization gain; 0 means the raw weight is used.
    double ws_gain = 0.0;
  };

  Tensor run_conv(Tape& tape, const ConvUnit& unit, const Tensor& x) const;

  ModelArch arch_;
  std::uint64_t seed_ = 0;
  std::vector<Parameter> params_;
  std::vector<std::vector<ConvUnit>> units_;
};

// Deterministic for a given (width_base, num_classes, seed).
Model build_model(std::size_t width_base, std::size_t num_classes, std::uint64_t seed);

struct FreezePlan {
  std::size_t k_blocks = 0;
  std::set<std::size_t> frozen_param_ids;
  double frozen_fraction = 0;  // percent of scalar parameters

  bool is_frozen(std::size_t param_id) const { return frozen_param_ids.count(param_id) != 0; }
};

FreezePlan make_freeze_plan(const Model& model, std::size_t k);
// Sets requires_grad on every parameter according to the plan.
void apply_freeze_plan(Model& model, const FreezePlan& plan);

enum class FreezePreset { fr1, fr2, fr3 };
std::size_t preset_blocks(FreezePreset preset);
FreezePreset parse_preset(std::string_view name);

struct ParamPartition {
  std::size_t backbone = 0;
  std::size_t neck = 0;
  std::size_t head = 0;
};

ParamPartition partition_params(const Model& model);

// Embedded reference percentages, keyed by approach name (e.g. "v8n-9b").
const std::map<std::string, double>& frozen_fraction_table();
double reference_frozen_fraction(std::string_view approach);

// Binary container: arch descriptor, seed, then every parameter's shape and
// raw values. Round trips are bit-exact.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

// Copies parameters of every non-head block from `src` into `dst`, plus the
// head when the class counts agree. Widths must match. Returns the number of
// parameter tensors copied.
std::size_t transfer_weights(const Model& src, Model& dst);

}  // namespace freezelab
