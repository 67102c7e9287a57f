#include "prectime/synth.hpp"

#include "prectime/errors.hpp"
#include "prectime/rng.hpp"

#include <cmath>
#include <cstdio>

namespace prectime {

namespace {

// Index of the pair a state belongs to, and whether it is the second member.
struct Mirror {
    bool mirrored = false;
    std::size_t first = 0;
};

std::vector<Mirror> mirror_table(const SynthSpec& spec) {
    std::vector<Mirror> table(spec.states);
    for (const auto& [a, b] : spec.mirrored_pairs) {
        table[a] = {true, a};
        table[b] = {true, a};
    }
    return table;
}

}  // namespace

void SynthSpec::validate() const {
    if (sensors < 1) throw ConfigError("synth.sensors: must be >= 1");
    if (states < 2) throw ConfigError("synth.states: must be >= 2");
    if (cycles < 1) throw ConfigError("synth.cycles: must be >= 1");
    if (duration_min < 1 || duration_max < duration_min) {
        throw ConfigError("synth.duration_min/duration_max: need 1 <= min <= max");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("synth.noise_std: must be >= 0");
    if (!(repeat_prob >= 0.0 && repeat_prob <= 1.0)) throw ConfigError("synth.repeat_prob: must be in [0, 1]");
    if (!(ramp_prob >= 0.0 && ramp_prob <= 1.0)) throw ConfigError("synth.ramp_prob: must be in [0, 1]");
    if (sequence.empty()) throw ConfigError("synth.sequence: must list at least one state");
    for (std::size_t i = 0; i < sequence.size(); ++i) {
        if (sequence[i] >= states) {
            throw ConfigError("synth.sequence: state " + std::to_string(sequence[i]) + " is not defined (states = " +
                              std::to_string(states) + ")");
        }
        if (i > 0 && sequence[i] == sequence[i - 1]) {
            throw ConfigError("synth.sequence: consecutive segments must differ (position " + std::to_string(i) + ")");
        }
    }
    std::vector<int> used(states, 0);
    for (const auto& [a, b] : mirrored_pairs) {
        if (a >= states || b >= states || a == b) throw ConfigError("synth.mirrored_pairs: invalid pair");
        if (used[a]++ || used[b]++) throw ConfigError("synth.mirrored_pairs: a state appears in two pairs");
        std::size_t first_a = sequence.size(), first_b = sequence.size();
        for (std::size_t i = sequence.size(); i-- > 0;) {
            if (sequence[i] == a) first_a = i;
            if (sequence[i] == b) first_b = i;
        }
        if (first_b < first_a) {
            throw ConfigError("synth.sequence: mirrored state " + std::to_string(b) + " is visited before " +
                              std::to_string(a));
        }
    }
    if (!signatures.empty()) {
        if (signatures.size() != states) throw ConfigError("synth: need one signature per state");
        for (const auto& s : signatures) {
            if (s.level.size() != sensors || s.ramp.size() != sensors) {
                throw ConfigError("synth: signature width does not match sensors");
            }
        }
        for (const auto& [a, b] : mirrored_pairs) {
            if (!(signatures[a] == signatures[b])) {
                throw ConfigError("synth: mirrored states " + std::to_string(a) + " and " + std::to_string(b) +
                                  " must share a signature");
            }
        }
    }
}

std::vector<StateSignature> SynthSpec::resolved_signatures() const {
    if (!signatures.empty()) return signatures;
    Rng rng = Rng(seed).fork("synth.signatures");
    const auto mirror = mirror_table(*this);
    std::vector<StateSignature> out(states);
    constexpr double kMinSeparation = 1.0;
    for (std::size_t k = 0; k < states; ++k) {
        if (mirror[k].mirrored && mirror[k].first != k) {
            out[k] = out[mirror[k].first];
            continue;
        }
        // Rejection-sample levels until they are clearly apart from earlier distinct states.
        for (int attempt = 0; attempt < 1000; ++attempt) {
            StateSignature sig;
            for (std::size_t s = 0; s < sensors; ++s) {
                sig.level.push_back(rng.uniform(-2.0, 2.0));
                sig.ramp.push_back(rng.uniform() < ramp_prob ? rng.uniform(-1.0, 1.0) : 0.0);
            }
            bool separated = true;
            for (std::size_t j = 0; j < k && separated; ++j) {
                if (mirror[j].mirrored && mirror[j].first != j) continue;
                double d2 = 0.0;
                for (std::size_t s = 0; s < sensors; ++s) d2 += std::pow(sig.level[s] - out[j].level[s], 2);
                separated = std::sqrt(d2) >= kMinSeparation;
            }
            out[k] = std::move(sig);
            if (separated) break;
        }
    }
    // Mirrored partners that precede their first member in index order.
    for (std::size_t k = 0; k < states; ++k) {
        if (mirror[k].mirrored) out[k] = out[mirror[k].first];
    }
    return out;
}

SynthSpec synth_mirror_v1() { return SynthSpec{}; }

std::vector<int> mirrored_codes(const SynthSpec& spec) {
    std::vector<int> out;
    for (const auto& [a, b] : spec.mirrored_pairs) {
        out.push_back(static_cast<int>(a) + spec.label_offset);
        out.push_back(static_cast<int>(b) + spec.label_offset);
    }
    return out;
}

std::vector<Cycle> synth_generate(const SynthSpec& spec) {
    spec.validate();
    const auto signatures = spec.resolved_signatures();
    const auto mirror = mirror_table(spec);
    Rng rng = Rng(spec.seed).fork("synth.cycles");
    std::vector<Cycle> out;
    out.reserve(spec.cycles);
    for (std::size_t n = 0; n < spec.cycles; ++n) {
        std::vector<std::size_t> segments;
        for (std::size_t i = 0; i < spec.sequence.size(); ++i) {
            segments.push_back(spec.sequence[i]);
            if (i > 0 && spec.repeat_prob > 0.0) {
                const std::size_t x = spec.sequence[i - 1], y = spec.sequence[i];
                if (!mirror[x].mirrored && !mirror[y].mirrored && rng.uniform() < spec.repeat_prob) {
                    segments.push_back(x);
                    segments.push_back(y);
                }
            }
        }
        std::vector<std::size_t> durations;
        std::size_t total = 0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            durations.push_back(static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(spec.duration_min),
                                                                     static_cast<std::int64_t>(spec.duration_max))));
            total += durations.back();
        }
        Cycle c;
        char id[32];
        std::snprintf(id, sizeof id, "synth_%04zu", n);
        c.id = id;
        c.sample_rate_hz = spec.sample_rate_hz;
        c.sensors = Tensor({spec.sensors, total});
        c.labels.reserve(total);
        std::size_t t0 = 0;
        for (std::size_t i = 0; i < segments.size(); ++i) {
            const StateSignature& sig = signatures[segments[i]];
            const double dur = static_cast<double>(durations[i]);
            for (std::size_t u = 0; u < durations[i]; ++u) {
                for (std::size_t s = 0; s < spec.sensors; ++s) {
                    double v = sig.level[s] + sig.ramp[s] * (static_cast<double>(u) / dur);
                    if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
                    c.sensors[s * total + t0 + u] = v;
                }
                c.labels.push_back(static_cast<int>(segments[i]) + spec.label_offset);
            }
            t0 += durations[i];
        }
        c.mask.assign(total, 1);
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace prectime
