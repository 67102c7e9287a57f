#include <doctest.h>

#include "prectime/checkpoint.hpp"
#include "prectime/errors.hpp"

#include <cstring>
#include <filesystem>

using namespace prectime;

namespace {

ModelConfig micro_config() {
    ModelConfig c;
    c.sensors = 2;
    c.num_classes = 3;
    c.window_length = 8;
    c.cnn_channels = 4;
    c.cnn_kernel = 2;
    c.dilation_low = 1;
    c.dilation_high = 3;
    c.lstm1_hidden = 5;
    c.lstm2_hidden = 6;
    c.lstm2_merge = ops::Merge::concat;
    c.refine_channels = 4;
    return c;
}

CheckpointMeta sample_meta() {
    CheckpointMeta m;
    m.alphabet = Alphabet({-3, 7, 11});
    m.stats.mean = {0.1, -2.5};
    m.stats.stddev = {1.0 / 3.0, 4.0};
    m.train.lr = 0.003;
    m.train.max_epochs = 17;
    m.train.seed = 99;
    m.best_val_accuracy = 0.875;
    m.epoch = 12;
    return m;
}

PrecTimeModel random_model(Variant v, std::uint64_t seed) {
    PrecTimeModel m(micro_config(), v, seed);
    Rng rng(seed + 100);
    for (auto& p : m.parameters()) {
        for (auto& x : p.value.data()) x = rng.normal(0, 0.5);
    }
    return m;
}

std::uint64_t read_u64(const std::string& s, std::size_t at) {
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | static_cast<unsigned char>(s[at + static_cast<std::size_t>(k)]);
    return v;
}

void write_u64(std::string& s, std::size_t at, std::uint64_t v) {
    for (int k = 0; k < 8; ++k) s[at + static_cast<std::size_t>(k)] = static_cast<char>((v >> (8 * k)) & 0xff);
}

}  // namespace

TEST_CASE("round trip is bitwise for every variant") {
    Rng rng(50);
    Tensor x({2, 24});
    for (auto& v : x.data()) v = rng.uniform(-3, 3);
    for (Variant v : {Variant::full, Variant::a1, Variant::a2, Variant::a3}) {
        PrecTimeModel m = random_model(v, 3);
        const std::string bytes = encode_checkpoint(m, sample_meta());
        LoadedCheckpoint back = decode_checkpoint(bytes);
        CHECK(back.model.variant() == v);
        for (std::size_t k = 0; k < m.parameters().size(); ++k) {
            CHECK(back.model.parameters()[k].name == m.parameters()[k].name);
            CHECK(back.model.parameters()[k].value == m.parameters()[k].value);
        }
        const DualPrediction a = m.predict(x), b = back.model.predict(x);
        CHECK(a.intermediate == b.intermediate);
        if (a.final) CHECK(*a.final == *b.final);
        CHECK(encode_checkpoint(back.model, back.meta) == bytes);
    }
}

TEST_CASE("metadata survives the round trip") {
    const CheckpointMeta meta = sample_meta();
    LoadedCheckpoint back = decode_checkpoint(encode_checkpoint(random_model(Variant::full, 1), meta));
    CHECK(back.meta.alphabet == meta.alphabet);
    CHECK(back.meta.stats.mean == meta.stats.mean);
    CHECK(back.meta.stats.stddev == meta.stats.stddev);
    CHECK(back.meta.train.lr == meta.train.lr);
    CHECK(back.meta.train.max_epochs == 17);
    CHECK(back.meta.train.seed == 99);
    CHECK(back.meta.best_val_accuracy == 0.875);
    CHECK(back.meta.epoch == 12);
    const ModelConfig c = back.model.config();
    CHECK(c.lstm2_merge == ops::Merge::concat);
    CHECK(c.dilation_high == 3);
    CHECK(model_config_from_json(model_config_to_json(c)).window_length == 8);
}

TEST_CASE("file save and load") {
    const auto path = std::filesystem::temp_directory_path() / "prectime_test_checkpoint.bin";
    PrecTimeModel m = random_model(Variant::a2, 4);
    save_checkpoint(path, m, sample_meta());
    LoadedCheckpoint back = load_checkpoint(path);
    CHECK(back.model.parameters().get("context.dense.weight").value == m.parameters().get("context.dense.weight").value);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path), DataError);
}

TEST_CASE("header layout") {
    const std::string bytes = encode_checkpoint(random_model(Variant::full, 2), sample_meta());
    CHECK(bytes.rfind("PRECTIME1", 0) == 0);
    const std::uint64_t meta_len = read_u64(bytes, 9);
    const auto meta = nlohmann::json::parse(bytes.substr(17, meta_len));
    CHECK(meta.contains("model"));
    CHECK(read_u64(bytes, 17 + meta_len) == random_model(Variant::full, 2).parameters().size());
}

TEST_CASE("corruption is reported as a format error") {
    const std::string bytes = encode_checkpoint(random_model(Variant::full, 5), sample_meta());
    // Every truncation point fails; none yields a model.
    for (std::size_t cut = 0; cut < bytes.size(); cut += 1 + cut / 7) {
        CHECK_THROWS_AS(decode_checkpoint(std::string_view(bytes).substr(0, cut)), FormatError);
    }
    std::string bad = bytes;
    bad[0] = 'X';
    try {
        decode_checkpoint(bad);
        CHECK(false);
    } catch (const FormatError& e) {
        CHECK(e.offset() == 0);
    }
    const std::uint64_t meta_len = read_u64(bytes, 9);
    std::string count = bytes;
    write_u64(count, 17 + meta_len, read_u64(bytes, 17 + meta_len) + 1);
    CHECK_THROWS_AS(decode_checkpoint(count), FormatError);
    count = bytes;
    write_u64(count, 17 + meta_len, read_u64(bytes, 17 + meta_len) - 1);
    CHECK_THROWS_AS(decode_checkpoint(count), FormatError);
    CHECK_THROWS_AS(decode_checkpoint(bytes + "x"), FormatError);
    std::string meta_garbage = bytes;
    meta_garbage[17] = '[';
    CHECK_THROWS_AS(decode_checkpoint(meta_garbage), FormatError);
}

TEST_CASE("a tensor name repeated in the file is rejected") {
    std::string bytes = encode_checkpoint(random_model(Variant::full, 6), sample_meta());
    const std::uint64_t meta_len = read_u64(bytes, 9);
    std::size_t at = 17 + meta_len + 8;
    // Rewrite the second tensor's name as the first one when both have equal length.
    auto name_at = [&](std::size_t pos) {
        std::uint32_t n = 0;
        std::memcpy(&n, bytes.data() + pos, 4);
        return std::pair<std::size_t, std::string>{n, bytes.substr(pos + 4, n)};
    };
    auto skip = [&](std::size_t pos) {
        auto [n, name] = name_at(pos);
        pos += 4 + n;
        std::uint32_t rank = 0;
        std::memcpy(&rank, bytes.data() + pos, 4);
        pos += 4;
        std::uint64_t elems = 1;
        for (std::uint32_t r = 0; r < rank; ++r) elems *= read_u64(bytes, pos + 8 * r);
        return pos + 8 * rank + 8 * elems;
    };
    const auto first = name_at(at);
    std::size_t pos = skip(at);
    bool rewritten = false;
    while (pos < bytes.size() && !rewritten) {
        auto cur = name_at(pos);
        if (cur.first == first.first && cur.second != first.second) {
            bytes.replace(pos + 4, cur.first, first.second);
            rewritten = true;
        } else {
            pos = skip(pos);
        }
    }
    REQUIRE(rewritten);
    CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);
}
