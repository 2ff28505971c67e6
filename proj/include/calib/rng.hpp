#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace calib {

/// SplitMix64 finalizer; used only to derive seeds.
constexpr auto mix64(std::uint64_t x) noexcept -> std::uint64_t
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a, for turning experiment tags into seed material.
constexpr auto hash_tag(std::string_view tag) noexcept -> std::uint64_t
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag)
    {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic generator. The engine (mt19937_64) and the variate
/// conversions below are fully specified, so streams are reproducible for a
/// fixed seed on any conforming platform.
class Rng
{
public:
    explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

    /// Independent stream for (seed, tag, indices...). Adding or reordering
    /// consumers of other tags never perturbs this stream.
    static auto substream(std::uint64_t seed, std::string_view tag, std::initializer_list<std::uint64_t> indices) -> Rng
    {
        std::uint64_t key = mix64(seed) ^ hash_tag(tag);
        for (auto i : indices) key = mix64(key) ^ mix64(i + 0x632be59bd9b4e019ULL);
        return Rng(key);
    }

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    auto uniform() -> double
    {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Uniform integer in [0, bound) by rejection.
    auto below(std::uint64_t bound) -> std::uint64_t
    {
        if (bound <= 1) return 0;
        std::uint64_t const limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
        while (true)
        {
            auto const x = engine_();
            if (x < limit) return x % bound;
        }
    }

    auto bits() -> std::uint64_t { return engine_(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace calib
