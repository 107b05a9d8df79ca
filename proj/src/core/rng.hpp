#pragma once

#include <cstdint>
#include <random>

namespace ioncouple::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Seed of the stream for (run seed, scan point, trial): three chained splitmix64 rounds.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t point, std::uint64_t trial) {
    return splitmix64(splitmix64(splitmix64(seed) ^ point) ^ trial);
}

inline std::mt19937_64 stream(std::uint64_t seed, std::uint64_t point, std::uint64_t trial) {
    return std::mt19937_64(stream_seed(seed, point, trial));
}

inline double uniform(std::mt19937_64 &g) { return std::uniform_real_distribution<double>(0.0, 1.0)(g); }

}  // namespace ioncouple::rng
