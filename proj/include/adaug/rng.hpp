#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace adaug {

using Rng = std::mt19937_64;

/// Platform-stable 64-bit string hash (FNV-1a).
constexpr std::uint64_t stable_hash(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a base seed and any number of tags.
template <typename... Parts>
constexpr std::uint64_t derive_seed(std::uint64_t seed, Parts... parts) noexcept {
    std::uint64_t h = splitmix64(seed);
    auto mix = [&h](auto part) {
        std::uint64_t v;
        if constexpr (std::is_convertible_v<decltype(part), std::string_view>)
            v = stable_hash(std::string_view(part));
        else
            v = static_cast<std::uint64_t>(part);
        h = splitmix64(h ^ v);
    };
    (mix(parts), ...);
    return h;
}

}  // namespace adaug
