#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace nvform::rng {

using Engine = std::mt19937_64;

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Derive a child seed from a parent seed and a path of stream labels.
///
/// Every random stream in the toolkit is reached from the master seed by a
/// path such as {dose_index, trial_index, stream::walk}. The result depends
/// only on the path, never on which worker evaluates it.
constexpr std::uint64_t derive(std::uint64_t parent, std::initializer_list<std::uint64_t> path) {
    std::uint64_t s = mix64(parent);
    for (auto p : path) s = mix64(s ^ mix64(p + 0x632BE59BD9B4E019ULL));
    return s;
}

/// Stream labels used in the derivation tree.
namespace stream {
inline constexpr std::uint64_t nitrogen = 1;
inline constexpr std::uint64_t vacancies = 2;
inline constexpr std::uint64_t walk = 3;
inline constexpr std::uint64_t trial = 4;
inline constexpr std::uint64_t dose = 5;
inline constexpr std::uint64_t bootstrap = 6;
inline constexpr std::uint64_t sensitivity_block = 7;
inline constexpr std::uint64_t grid_point = 8;
}  // namespace stream

inline Engine make_engine(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return Engine(seq);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Engine& eng) { return static_cast<double>(eng() >> 11) * 0x1.0p-53; }

/// Unbiased integer in [0, n) by Lemire's multiply-and-reject on 32-bit draws.
class BoundedDraw {
public:
    explicit BoundedDraw(std::uint32_t n) : n_(n), threshold_(static_cast<std::uint32_t>(-n) % n) {}

    std::uint32_t operator()(Engine& eng) {
        for (;;) {
            if (!have_) {
                cache_ = eng();
                have_ = 2;
            }
            const auto x = static_cast<std::uint32_t>(cache_);
            cache_ >>= 32;
            --have_;
            const std::uint64_t m = static_cast<std::uint64_t>(x) * n_;
            if (static_cast<std::uint32_t>(m) >= threshold_) return static_cast<std::uint32_t>(m >> 32);
        }
    }

private:
    std::uint32_t n_;
    std::uint32_t threshold_;
    std::uint64_t cache_ = 0;
    int have_ = 0;
};

}  // namespace nvform::rng
