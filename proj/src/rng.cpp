#include "clmm/rng.hpp"

#include "clmm/inference.hpp"

namespace clmm {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix(std::uint64_t& state) {
  state += kGolden;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

NormalStream::NormalStream(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  const std::uint64_t mixed_seed = splitmix(s);
  s = stream ^ 0x6A09E667F3BCC909ull;
  const std::uint64_t mixed_stream = splitmix(s);
  state_ = mixed_seed ^ (mixed_stream + kGolden * (stream + 1));
}

std::uint64_t NormalStream::next_u64() { return splitmix(state_); }

double NormalStream::uniform() {
  return (next_u64() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

double NormalStream::normal() { return normal_quantile(uniform()); }

}  // namespace clmm
