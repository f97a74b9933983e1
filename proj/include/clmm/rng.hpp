#pragma once

#include <cstdint>

namespace clmm {

// Deterministic standard-normal stream. Substreams are derived by mixing
// (seed, stream) into a 64-bit state that a splitmix64 walk advances; normal
// deviates come from inverting the normal CDF on a 53-bit uniform, so the
// whole path is reproducible across runs and thread counts.
class NormalStream {
 public:
  NormalStream(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64();
  double uniform();  // strictly inside (0, 1)
  double normal();   // standard normal

 private:
  std::uint64_t state_;
};

}  // namespace clmm
