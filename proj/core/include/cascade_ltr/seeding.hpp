#pragma once

#include <cstdint>

namespace cascade_ltr {

// SplitMix64 finalizer; used to derive independent child seeds so that
// every random stream in a run is a pure function of the root seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) noexcept {
  return mix_seed(root ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

}  // namespace cascade_ltr
