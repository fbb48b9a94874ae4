#include "gradlab/rng.hpp"

namespace gradlab {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    SplitMix64 mix(seed ^ (stream * 0xD1B54A32D192ED03ULL));
    mix.next();
    return mix.next();
}

} // namespace gradlab
