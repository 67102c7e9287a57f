#pragma once

#include "prectime/data.hpp"
#include "prectime/model.hpp"
#include "prectime/train.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace prectime {

inline constexpr std::string_view kCheckpointMagic = "PRECTIME1";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    Alphabet alphabet;
    NormStats stats;
    TrainConfig train;
    double best_val_accuracy = 0.0;
    std::size_t epoch = 0;
};

struct LoadedCheckpoint {
    PrecTimeModel model;
    CheckpointMeta meta;
};

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Layout: magic, u64 metadata length, metadata JSON, u64 tensor count, then
// per tensor: u32 name length, name, u32 rank, u64 extents, f64 payload.
// All integers and floats little-endian.
std::string encode_checkpoint(const PrecTimeModel& model, const CheckpointMeta& meta);
// Throws FormatError carrying the byte offset of the first inconsistency.
LoadedCheckpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const PrecTimeModel& model, const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace prectime
