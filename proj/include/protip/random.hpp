#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <utility>
#include <vector>

namespace protip {

// mt19937_64 output is fully specified by the standard; the distributions are
// not, so bounded draws and shuffles are done by hand to keep runs
// reproducible across standard libraries.
using Rng = std::mt19937_64;

// Uniform integer in [0, n). n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    const std::uint64_t limit = Rng::max() - (Rng::max() % n + 1) % n;
    std::uint64_t x = rng();
    while (x > limit) x = rng();
    return x % n;
}

// Uniform real in [0, 1) with 53 bits of randomness.
inline double uniform_real(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller.
inline double standard_normal(Rng& rng) {
    double u1 = uniform_real(rng);
    while (u1 <= 0.0) u1 = uniform_real(rng);
    const double u2 = uniform_real(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

template <typename T>
void shuffle(std::vector<T>& items, Rng& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_index(rng, i));
        std::swap(items[i - 1], items[j]);
    }
}

// FNV-1a over the bytes of `s`, folded with `seed` through splitmix64.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_string(std::string_view s, std::uint64_t seed = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return splitmix64(h ^ splitmix64(seed));
}

// Named sub-seed derived from a master seed, e.g. derive_seed(7, "train").
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
    return hash_string(name, master);
}

}  // namespace protip

namespace protip {

// Every random stream of a run, derived from the single --seed.
struct SubSeeds {
    std::uint64_t synth;
    std::uint64_t split;
    std::uint64_t hash;
    std::uint64_t train;
    std::uint64_t shuffle;

    static SubSeeds from(std::uint64_t master) {
        return {derive_seed(master, "synth"), derive_seed(master, "split"), derive_seed(master, "hash"),
                derive_seed(master, "train"), derive_seed(master, "shuffle")};
    }
};

}  // namespace protip
