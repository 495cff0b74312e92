#pragma once

#include <cstdint>
#include <span>

namespace shefields {

/// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Counter-based SplitMix64 stream: output k is mix64(key + (k+1)*gamma).
/// Satisfies UniformRandomBitGenerator so it plugs into <random> distributions.
class SplitMix64 {
public:
    using result_type = std::uint64_t;
    static constexpr std::uint64_t gamma = 0x9E3779B97F4A7C15ull;

    explicit constexpr SplitMix64(std::uint64_t key) noexcept : state_(key) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return ~result_type{0}; }

    constexpr result_type operator()() noexcept { return mix64(state_ += gamma); }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

private:
    std::uint64_t state_;
};

/// Key of an independent stream identified by (seed, stream index).
constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix64(mix64(seed ^ 0x6A09E667F3BCC909ull) + mix64(stream + 0x3C6EF372FE94F82Bull));
}

/// Standard normal sampler: 256-layer Marsaglia-Tsang ziggurat over 64-bit draws.
/// One draw per sample on the fast path (~99% of calls).
class NormalZiggurat {
public:
    double operator()(SplitMix64& rng) const noexcept;

    /// Fills `out` with independent N(0, 1) variates scaled by `scale`.
    void fill(SplitMix64& rng, std::span<double> out, double scale) const noexcept;

    static const NormalZiggurat& instance();

private:
    NormalZiggurat();
    double slow_path(SplitMix64& rng, std::uint64_t bits) const noexcept;

    std::uint64_t ki_[256];
    double wi_[256];
    double fi_[256];
};

}  // namespace shefields
