#pragma once

#include "prectime/metrics.hpp"
#include "prectime/model.hpp"
#include "prectime/synth.hpp"
#include "prectime/train.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace prectime {

struct DataConfig {
    std::filesystem::path manifest;
    // "synth-mirror-v1" (the built-in spec with [synth] overrides) or a spec file.
    std::string synth;
    std::array<double, 3> split = {0.6, 0.2, 0.2};

    bool has_source() const { return !manifest.empty() || !synth.empty(); }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    SynthSpec synth = synth_mirror_v1();
    MetricsOptions metrics;
    // Injected widths for parameter counting only (model.feature_width,
    // model.refine_input_channels).
    DimensionOverrides dims;
    Variant variant = Variant::full;
    std::filesystem::path output_dir = "out";
    std::uint64_t seed = 0;
    // Fully qualified keys ("model.sensors") set by the document.
    std::set<std::string> explicit_keys;
    // Directory of the config file; relative paths resolve against it.
    std::filesystem::path base_dir;

    bool is_set(std::string_view key) const { return explicit_keys.count(std::string(key)) > 0; }

    // Per-consumer seeds forked from `seed`.
    std::uint64_t init_seed() const;
    std::uint64_t dropout_seed() const;
    std::uint64_t split_seed() const;
    // synth.seed when given explicitly, otherwise forked from `seed`.
    std::uint64_t synth_seed() const;

    // Applies --seed; the derived seeds follow.
    void override_seed(std::uint64_t s);
    TrainConfig resolved_train() const;
    SynthSpec resolved_synth() const;
};

// `key = value` lines, `#` comments, sections [model] [train] [data] [synth]
// [metrics]; top-level keys seed, variant, output_dir. Every malformed or
// unknown entry throws ConfigError naming the source line and key.
RunConfig parse_run_config(std::string_view text, const std::string& source = "<config>");
RunConfig load_run_config(const std::filesystem::path& path);

// Keys accepted inside [synth]; the same document format serves as a spec file.
SynthSpec load_synth_spec(const std::filesystem::path& path);

}  // namespace prectime
