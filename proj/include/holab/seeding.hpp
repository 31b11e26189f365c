#pragma once

#include <array>
#include <cstdint>
#include <random>

namespace holab {

/// Child seed for a named stream of randomness under a root seed. Every
/// module draws its generator from here so one root seed fixes a run.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(root), static_cast<std::uint32_t>(root >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

// Stream tags.
inline constexpr std::uint64_t kStreamRoutes = 1;
inline constexpr std::uint64_t kStreamShadowing = 2;
inline constexpr std::uint64_t kStreamInit = 3;
inline constexpr std::uint64_t kStreamTraining = 4;
inline constexpr std::uint64_t kStreamHyperparams = 5;

} // namespace holab
