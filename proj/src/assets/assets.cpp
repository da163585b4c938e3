#include "freezelab/assets.hpp"

#include <cstddef>
#include <string>

#include "freezelab/error.hpp"

namespace freezelab::assets {

namespace detail {
struct Blob {
  const char* name;
  const char* data;
  std::size_t size;
};
extern const Blob kBlobs[];
extern const std::size_t kNumBlobs;
}  // namespace detail

namespace {

struct Pinned {
  std::string_view name;
  std::uint64_t checksum;
};

constexpr Pinned kPinned[] = {
    {"paper_results.csv", 0xcd055275a73c9e4aULL},
    {"frozen_fractions.csv", 0xdd7c851be19f464eULL},
    {"grad_norm_stats.csv", 0x7154fff4ee0215ccULL},
};

}  // namespace

std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string_view text(std::string_view name) {
  for (std::size_t i = 0; i < detail::kNumBlobs; ++i) {
    const detail::Blob& b = detail::kBlobs[i];
    if (name != b.name) continue;
    const std::string_view data(b.data, b.size);
    for (const Pinned& p : kPinned) {
      if (p.name != name) continue;
      if (fnv1a64(data) != p.checksum) {
        throw Error("embedded asset " + std::string(name) + " failed its checksum");
      }
      return data;
    }
    throw Error("embedded asset " + std::string(name) + " has no pinned checksum");
  }
  throw Error("unknown embedded asset: " + std::string(name));
}

}  // namespace freezelab::assets
