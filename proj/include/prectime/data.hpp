#pragma once

#include "prectime/metrics.hpp"
#include "prectime/tensor.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prectime {

// Reserved label code of padded timesteps. Never part of a learned alphabet
// unless padding is deliberately left unmasked.
inline constexpr int kPadLabel = std::numeric_limits<int>::min();

struct Cycle {
    std::string id;
    Tensor sensors;           // [S x T]
    std::vector<int> labels;  // raw label codes, length T
    double sample_rate_hz = 100.0;
    Mask mask;                // 1 = real data, 0 = padding

    std::size_t sensor_count() const { return sensors.dim(0); }
    std::size_t length() const { return labels.size(); }
    std::size_t real_length() const;
};

// CSV with header `t,<sensor>...,label`; t strictly increasing from 0.
Cycle parse_cycle(std::string_view text, std::string id, const std::string& source = "<memory>");
Cycle load_cycle(const std::filesystem::path& path);
// Real timesteps only, sensor values with 17 significant digits.
std::string format_cycle(const Cycle& cycle);
void write_cycle(const Cycle& cycle, const std::filesystem::path& path);

// Sorted raw label codes mapped onto dense class indices 0..C-1.
class Alphabet {
public:
    Alphabet() = default;
    explicit Alphabet(std::vector<int> codes);

    static Alphabet from_cycles(std::span<const Cycle> cycles, bool include_pad = false);

    std::size_t size() const noexcept { return codes_.size(); }
    bool contains(int code) const;
    // Throws DataError naming the code when it is unknown.
    int index_of(int code) const;
    int code_of(std::size_t index) const;
    const std::vector<int>& codes() const noexcept { return codes_; }

    bool operator==(const Alphabet&) const = default;

private:
    std::vector<int> codes_;
};

// Dense indices; PAD maps to -1 unless the alphabet contains it.
std::vector<int> encode_labels(std::span<const int> labels, const Alphabet& alphabet);

// [T x C] one-hot rows. PAD rows (when PAD is outside the alphabet) are all zero.
Tensor one_hot(std::span<const int> labels, const Alphabet& alphabet);
// Row-wise argmax as raw codes.
std::vector<int> decode_one_hot(const Tensor& encoded, const Alphabet& alphabet);

struct NormStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

inline constexpr double kMinStd = 1e-12;

NormStats compute_norm_stats(std::span<const Cycle> train);
// x' = (x - mean) / std; sensors with std < kMinStd map to 0.
Cycle apply_norm(const Cycle& cycle, const NormStats& stats);

struct DatasetSplit {
    std::vector<Cycle> train;
    std::vector<Cycle> val;
    std::vector<Cycle> test;
    Alphabet alphabet;
    NormStats stats;
};

// Stats from real training timesteps only, applied to every split.
DatasetSplit zscore_normalize(DatasetSplit split);

// Extends every sensor with its minimum (per cycle, or `global_minimum` when
// given) and labels with kPadLabel; the mask is 0 on appended steps.
Cycle pad_min_value(const Cycle& cycle, std::size_t target_length, std::size_t window_length = 1,
                    std::span<const double> global_minimum = {});

std::size_t round_up(std::size_t value, std::size_t multiple);

// Seeded shuffle, then counts floor(n*val) and floor(n*test) (at least one
// each when the ratio is positive); the remainder goes to train.
DatasetSplit split_dataset(std::vector<Cycle> cycles, std::array<double, 3> ratios, std::uint64_t seed);

struct ManifestEntry {
    std::filesystem::path path;
    std::string split;  // train | val | test
};

// CSV `path,split`; relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
std::string format_manifest(std::span<const ManifestEntry> entries);

// Training-ready view of a padded, normalized cycle.
struct Sample {
    std::string id;
    Tensor sensors;                // [S x T]
    Tensor target;                 // [T x C] one-hot
    std::vector<int> classes;      // dense indices, -1 on padding
    std::vector<int> codes;        // raw label codes
    Mask mask;                     // timesteps that enter loss and metrics
    std::vector<double> weights;   // mask as loss weights
};

Sample make_sample(const Cycle& cycle, const Alphabet& alphabet, bool mask_padding = true);

struct PreparedData {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
    Alphabet alphabet;
    NormStats stats;
    std::size_t padded_length = 0;
};

// Normalizes with train statistics, pads every cycle to the longest one
// rounded up to a multiple of window_length, and encodes labels.
PreparedData prepare_dataset(DatasetSplit split, std::size_t window_length, bool mask_padding = true);

}  // namespace prectime
