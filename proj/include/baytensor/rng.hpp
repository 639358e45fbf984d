#pragma once

// Seeded random streams.
//
// Every stream is an mt19937_64 engine whose seed is derived from a single
// 64-bit master seed and an ordered list of stream counters, e.g.
// (replicate, role). The derivation folds each counter into the running key
// with the SplitMix64 finalizer, so streams for distinct counter tuples are
// statistically independent and reproducible. Distributions come from
// Boost.Random, whose algorithms are fixed across standard libraries.

#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_01.hpp>
#include <boost/random/uniform_int_distribution.hpp>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace baytensor {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> counters) noexcept {
    std::uint64_t key = splitmix64(master);
    for (std::uint64_t c : counters) key = splitmix64(key ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
    return key;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    static Rng stream(std::uint64_t master, std::initializer_list<std::uint64_t> counters) {
        return Rng(derive_seed(master, counters));
    }

    double normal() { return normal_(engine_); }
    double normal(double mean, double sd) { return mean + sd * normal_(engine_); }
    double uniform() { return boost::random::uniform_01<double>{}(engine_); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        return boost::random::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    /// Gamma(shape, rate).
    double gamma(double shape, double rate) {
        return boost::random::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
    }

    /// Inverse-gamma IG(shape, scale): the reciprocal of a Gamma(shape, rate = scale) draw.
    double inverse_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    boost::random::normal_distribution<double> normal_;
};

}  // namespace baytensor
