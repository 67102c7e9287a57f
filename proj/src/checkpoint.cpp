#include "prectime/checkpoint.hpp"

#include "prectime/errors.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

namespace prectime {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::size_t offset() const noexcept { return pos_; }
    bool at_end() const noexcept { return pos_ == bytes_.size(); }

    std::string_view take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(pos_, std::string("truncated while reading ") + what);
        }
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

    std::uint64_t u64(const char* what) {
        auto b = take(8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }

    std::uint32_t u32(const char* what) {
        auto b = take(4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[i]);
        return v;
    }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

nlohmann::json model_config_to_json(const ModelConfig& c) {
    return {
        {"sensors", c.sensors},
        {"num_classes", c.num_classes},
        {"window_length", c.window_length},
        {"cnn_channels", c.cnn_channels},
        {"cnn_kernel", c.cnn_kernel},
        {"dilation_low", c.dilation_low},
        {"dilation_high", c.dilation_high},
        {"dropout_p", c.dropout_p},
        {"pool_m", c.pool_m},
        {"lstm1_hidden", c.lstm1_hidden},
        {"lstm2_hidden", c.lstm2_hidden},
        {"lstm2_merge", c.lstm2_merge == ops::Merge::sum ? "sum" : "concat"},
        {"refine_channels", c.refine_channels},
        {"upsample_factor", c.upsample_factor},
    };
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.sensors = j.at("sensors").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.window_length = j.at("window_length").get<std::size_t>();
    c.cnn_channels = j.at("cnn_channels").get<std::size_t>();
    c.cnn_kernel = j.at("cnn_kernel").get<std::size_t>();
    c.dilation_low = j.at("dilation_low").get<std::size_t>();
    c.dilation_high = j.at("dilation_high").get<std::size_t>();
    c.dropout_p = j.at("dropout_p").get<double>();
    c.pool_m = j.at("pool_m").get<std::size_t>();
    c.lstm1_hidden = j.at("lstm1_hidden").get<std::size_t>();
    c.lstm2_hidden = j.at("lstm2_hidden").get<std::size_t>();
    const auto merge = j.at("lstm2_merge").get<std::string>();
    if (merge != "sum" && merge != "concat") throw ConfigError("model.lstm2_merge: expected sum or concat");
    c.lstm2_merge = merge == "sum" ? ops::Merge::sum : ops::Merge::concat;
    c.refine_channels = j.at("refine_channels").get<std::size_t>();
    c.upsample_factor = j.at("upsample_factor").get<std::size_t>();
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {
        {"lr", c.lr},
        {"max_epochs", c.max_epochs},
        {"patience", c.patience},
        {"w_final", c.w_final},
        {"w_intermediate", c.w_intermediate},
        {"seed", c.seed},
        {"mask_padding", c.mask_padding},
    };
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lr = j.at("lr").get<double>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.w_final = j.at("w_final").get<double>();
    c.w_intermediate = j.at("w_intermediate").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.mask_padding = j.at("mask_padding").get<bool>();
    return c;
}

std::string encode_checkpoint(const PrecTimeModel& model, const CheckpointMeta& meta) {
    nlohmann::json doc;
    doc["format_version"] = kCheckpointVersion;
    doc["model"] = model_config_to_json(model.config());
    doc["variant"] = variant_name(model.variant());
    doc["alphabet"] = meta.alphabet.codes();
    doc["normalization"] = {{"mean", meta.stats.mean}, {"stddev", meta.stats.stddev}};
    doc["train"] = train_config_to_json(meta.train);
    doc["best_val_accuracy"] = meta.best_val_accuracy;
    doc["epoch"] = meta.epoch;
    const std::string text = doc.dump();

    std::string out(kCheckpointMagic);
    put_u64(out, text.size());
    out += text;
    const ParameterSet& params = model.parameters();
    put_u64(out, params.size());
    for (const auto& p : params) {
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out += p.name;
        put_u32(out, static_cast<std::uint32_t>(p.value.rank()));
        for (auto e : p.value.shape()) put_u64(out, e);
        for (double v : p.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
    return out;
}

LoadedCheckpoint decode_checkpoint(std::string_view bytes) {
    Reader in(bytes);
    if (in.take(kCheckpointMagic.size(), "magic") != kCheckpointMagic) throw FormatError(0, "bad magic");

    const std::size_t meta_offset = in.offset();
    const std::uint64_t meta_len = in.u64("metadata length");
    const auto meta_text = in.take(meta_len, "metadata");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(meta_text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(meta_offset + 8, std::string("invalid metadata: ") + e.what());
    }

    CheckpointMeta meta;
    ModelConfig config;
    Variant variant = Variant::full;
    try {
        if (doc.at("format_version").get<int>() != kCheckpointVersion) {
            throw FormatError(meta_offset + 8, "unsupported format version " + doc.at("format_version").dump());
        }
        config = model_config_from_json(doc.at("model"));
        variant = parse_variant(doc.at("variant").get<std::string>());
        meta.alphabet = Alphabet(doc.at("alphabet").get<std::vector<int>>());
        meta.stats.mean = doc.at("normalization").at("mean").get<std::vector<double>>();
        meta.stats.stddev = doc.at("normalization").at("stddev").get<std::vector<double>>();
        meta.train = train_config_from_json(doc.at("train"));
        meta.best_val_accuracy = doc.at("best_val_accuracy").get<double>();
        meta.epoch = doc.at("epoch").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(meta_offset + 8, std::string("incomplete metadata: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(meta_offset + 8, e.what());
    } catch (const ArgumentError& e) {
        throw FormatError(meta_offset + 8, e.what());
    }
    if (meta.alphabet.size() != config.num_classes) {
        throw FormatError(meta_offset + 8, "alphabet size does not match the model's class count");
    }

    PrecTimeModel model = [&] {
        try {
            return PrecTimeModel(config, variant, 0);
        } catch (const ConfigError& e) {
            throw FormatError(meta_offset + 8, e.what());
        }
    }();
    ParameterSet& params = model.parameters();

    const std::size_t count_offset = in.offset();
    const std::uint64_t count = in.u64("tensor count");
    if (count != params.size()) {
        throw FormatError(count_offset, "declares " + std::to_string(count) + " tensors, model has " +
                                            std::to_string(params.size()));
    }
    std::set<std::string> seen;
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::size_t at = in.offset();
        const std::uint32_t name_len = in.u32("tensor name length");
        const std::string name(in.take(name_len, "tensor name"));
        if (!params.contains(name)) throw FormatError(at, "unexpected tensor '" + name + "'");
        if (!seen.insert(name).second) throw FormatError(at, "duplicate tensor '" + name + "'");
        Parameter& p = params.get(name);
        const std::size_t rank_at = in.offset();
        const std::uint32_t rank = in.u32("tensor rank");
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(in.u64("tensor extent"));
        if (shape != p.value.shape()) {
            throw FormatError(rank_at, "tensor '" + name + "' has shape " + shape_string(shape) + ", expected " +
                                           shape_string(p.value.shape()));
        }
        auto payload = in.take(p.value.size() * 8, "tensor payload");
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            std::uint64_t bits = 0;
            for (int b = 7; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(payload[i * 8 + b]);
            p.value[i] = std::bit_cast<double>(bits);
        }
    }
    if (!in.at_end()) throw FormatError(in.offset(), "trailing bytes after the last tensor");
    return LoadedCheckpoint{std::move(model), std::move(meta)};
}

void save_checkpoint(const std::filesystem::path& path, const PrecTimeModel& model, const CheckpointMeta& meta) {
    const std::string bytes = encode_checkpoint(model, meta);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint '" + path.string() + "'");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return decode_checkpoint(os.str());
}

}  // namespace prectime
