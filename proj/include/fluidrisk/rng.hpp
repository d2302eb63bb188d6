#pragma once

#include <cstdint>
#include <random>

namespace fluidrisk {

// Independent Mersenne-Twister stream per (seed, path index), so that batches
// can be simulated in any order or on any thread.
inline std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t path) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                    0x5eedu};
  return std::mt19937_64(seq);
}

}  // namespace fluidrisk
