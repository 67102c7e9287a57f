#pragma once

#include "prectime/data.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace prectime {

// Per-sensor generating parameters of one state.
struct StateSignature {
    std::vector<double> level;
    std::vector<double> ramp;  // added as ramp * (t_local / duration)

    bool operator==(const StateSignature&) const = default;
};

// Multi-phase cycles whose mirrored state pairs share one signature and
// differ only in the order they are visited.
struct SynthSpec {
    std::size_t sensors = 3;
    std::size_t states = 6;
    std::vector<std::pair<std::size_t, std::size_t>> mirrored_pairs = {{2, 3}, {4, 5}};
    std::size_t duration_min = 40;
    std::size_t duration_max = 120;
    double noise_std = 0.1;
    std::size_t cycles = 40;
    std::vector<std::size_t> sequence = {0, 2, 1, 4, 0, 1, 3, 0, 5, 1};
    // Chance that two consecutive non-mirrored segments X,Y are revisited as X,Y,X,Y.
    double repeat_prob = 0.0;
    double ramp_prob = 0.5;
    double sample_rate_hz = 100.0;
    int label_offset = 1;
    std::uint64_t seed = 7;
    // Empty: derived from `seed`.
    std::vector<StateSignature> signatures;

    // Throws ConfigError on an inconsistent spec.
    void validate() const;
    std::vector<StateSignature> resolved_signatures() const;
};

// Default benchmark: 3 sensors, 6 states with 2 mirrored pairs, 40 cycles.
SynthSpec synth_mirror_v1();

std::vector<Cycle> synth_generate(const SynthSpec& spec);

// Raw label codes of the mirrored states.
std::vector<int> mirrored_codes(const SynthSpec& spec);

}  // namespace prectime
