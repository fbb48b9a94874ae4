#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace gradlab {

// SplitMix64 (Steele, Lea, Flood 2014). Every seeded draw in the library goes
// through this generator so runs are reproducible across platforms:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// uniform_index(n) = next() % n, uniform01() = (next() >> 11) * 2^-53.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Requires n >= 1.
    std::size_t uniform_index(std::size_t n) noexcept { return static_cast<std::size_t>(next() % n); }

    double uniform01() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

private:
    std::uint64_t state_;
};

// Independent stream for (seed, stream) so that adding draws to one consumer
// never shifts another consumer's sequence.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

// Fisher-Yates, i = n-1 .. 1, j = uniform_index(i + 1).
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = rng.uniform_index(i);
        std::swap(items[i - 1], items[j]);
    }
}

// Stream ids used with derive_seed. Kept here so collisions are visible.
namespace streams {
inline constexpr std::uint64_t kCounterfactual = 1;
inline constexpr std::uint64_t kNeutral = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kBaseTrain = 4;
inline constexpr std::uint64_t kProbe = 5;
inline constexpr std::uint64_t kPrePrune = 6;
inline constexpr std::uint64_t kGradiendInit = 7;
inline constexpr std::uint64_t kGradiendBatches = 8;
} // namespace streams

} // namespace gradlab
