#pragma once

#include <cstdint>
#include <random>

namespace kslab {

/// splitmix64 finalizer; decorrelates nearby integer inputs.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Stable seed-derivation scheme used across the project:
/// (base, stream, index) -> sub-seed. `stream` separates purposes
/// (paths, particles, resampling, ...), `index` enumerates within one.
/// The scheme is part of the reproducibility contract and must not change.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    std::uint64_t z = mix64(base + 0x9E3779B97F4A7C15ull);
    z = mix64(z ^ (stream + 0xD1B54A32D192ED03ull));
    z = mix64(z ^ (index + 0x8CB92BA72F3D8DD7ull));
    return z;
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

} // namespace kslab
