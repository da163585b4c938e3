#include <algorithm>
#include <cstring>
#include <fstream>

#include "freezelab/detector.hpp"
#include "freezelab/error.hpp"

namespace freezelab {

namespace {

constexpr char kMagic[4] = {'F', 'Z', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

// Host byte order; checkpoints are not meant to cross architectures.
template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw ParseError(path + ": truncated checkpoint");
  }
  return v;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, model.arch().width_base);
  put<std::uint64_t>(out, model.num_classes());
  put<std::uint64_t>(out, model.seed());
  put<std::uint64_t>(out, model.params().size());
  for (const Parameter& p : model.params()) {
    put<std::uint64_t>(out, p.value.rank());
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    const auto v = p.value.values();
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw IoError("failed writing " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[4];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ParseError(path + ": not a checkpoint file");
  }
  const auto version = get<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw ParseError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto width = get<std::uint64_t>(in, path);
  const auto classes = get<std::uint64_t>(in, path);
  const auto seed = get<std::uint64_t>(in, path);
  const auto count = get<std::uint64_t>(in, path);
  if (width < 2 || width > 4096 || classes == 0 || classes > 100000) {
    throw ParseError(path + ": implausible architecture descriptor");
  }
  Model model = build_model(width, classes, seed);
  if (count != model.params().size()) {
    throw ParseError(path + ": parameter count " + std::to_string(count) + " does not match " +
                     std::to_string(model.params().size()));
  }
  for (Parameter& p : model.params()) {
    const auto rank = get<std::uint64_t>(in, path);
    Shape shape;
    for (std::uint64_t i = 0; i < rank && i < 8; ++i) shape.push_back(get<std::uint64_t>(in, path));
    if (shape != p.value.shape()) {
      throw ParseError(path + ": shape mismatch for " + p.name + ": " + shape_to_string(shape) +
                       " vs " + shape_to_string(p.value.shape()));
    }
    auto v = p.value.mutable_values();
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(v.size() * sizeof(double)))) {
      throw ParseError(path + ": truncated checkpoint");
    }
  }
  return model;
}

std::size_t transfer_weights(const Model& src, Model& dst) {
  if (src.arch().width_base != dst.arch().width_base) {
    throw Error("transfer_weights: width mismatch (" + std::to_string(src.arch().width_base) +
                " vs " + std::to_string(dst.arch().width_base) + ")");
  }
  const bool same_head = src.num_classes() == dst.num_classes();
  std::size_t copied = 0;
  for (std::size_t i = 0; i < dst.params().size(); ++i) {
    Parameter& d = dst.params()[i];
    if (d.block == kHeadBlock && !same_head) continue;
    const Parameter& s = src.params()[i];
    auto out = d.value.mutable_values();
    const auto in = s.value.values();
    std::copy(in.begin(), in.end(), out.begin());
    ++copied;
  }
  return copied;
}

}  // namespace freezelab
