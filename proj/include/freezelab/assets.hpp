#pragma once

// CSV reference tables compiled into the library.
//
//   paper_results.csv     family,variant,approach,dataset,gpu_mb,time_min,map50,map5095,flags
//   frozen_fractions.csv  approach,frozen_pct
//   grad_norm_stats.csv   dataset,strategy,mean_norm,std_norm,cv_pct

#include <cstdint>
#include <string_view>

namespace freezelab::assets {

std::uint64_t fnv1a64(std::string_view data);

// Throws Error for an unknown name or when the embedded bytes do not match
// the pinned checksum.
std::string_view text(std::string_view name);

}  // namespace freezelab::assets
