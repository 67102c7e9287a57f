#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace prectime {

// Seeded generator. Every random decision in the engine (initialization,
// dropout masks, dataset shuffles, synthetic data) draws from one of these,
// forked from a single top-level seed by consumer name.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    // Independent child stream; the same (seed, name) always yields the same stream.
    Rng fork(std::string_view name) const;

    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal(double mean = 0.0, double stddev = 1.0);
    // Uniform integer in [lo, hi].
    std::int64_t integer(std::int64_t lo, std::int64_t hi);

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t derive_seed(std::uint64_t seed, std::string_view name);

}  // namespace prectime
