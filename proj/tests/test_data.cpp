#include <doctest.h>

#include "prectime/data.hpp"
#include "prectime/errors.hpp"
#include "prectime/rng.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace prectime;

namespace {

Cycle make_cycle(std::string id, std::vector<std::vector<double>> rows, std::vector<int> labels) {
    Cycle c;
    c.id = std::move(id);
    const std::size_t s = rows.size(), t = labels.size();
    c.sensors = Tensor({s, t});
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t u = 0; u < t; ++u) c.sensors.at(i, u) = rows[i][u];
    }
    c.labels = std::move(labels);
    c.mask.assign(t, 1);
    return c;
}

Cycle random_cycle(Rng& rng, std::string id, std::size_t sensors, std::size_t length) {
    Cycle c;
    c.id = std::move(id);
    c.sensors = Tensor({sensors, length});
    for (auto& v : c.sensors.data()) v = rng.normal(3.0, 2.0);
    for (std::size_t t = 0; t < length; ++t) c.labels.push_back(static_cast<int>(rng.integer(1, 4)));
    c.mask.assign(length, 1);
    return c;
}

std::string parse_error(const std::string& text) {
    try {
        parse_cycle(text, "c", "cyc.csv");
    } catch (const ParseError& e) {
        return e.what();
    }
    return "";
}

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("prectime_test_data_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("cycle CSV parsing") {
    Cycle c = parse_cycle("t,a,b,label\n0,1.5,2,7\n1,-1,0.25,7\n2,3,4,9\n", "x");
    CHECK(c.id == "x");
    CHECK(c.sensors.shape() == Shape{2, 3});
    CHECK(c.sensors.at(1, 1) == 0.25);
    CHECK(c.labels == std::vector<int>{7, 7, 9});
    CHECK(c.real_length() == 3);
}

TEST_CASE("cycle CSV errors carry the line number") {
    CHECK(parse_error("") .find("cyc.csv:1:") == 0);
    CHECK(parse_error("x,a,label\n0,1,2\n").find("cyc.csv:1:") == 0);
    CHECK(parse_error("t,a,label\n0,1,2\n1,2\n").find("cyc.csv:3:") == 0);
    CHECK(parse_error("t,a,label\n0,1,2\n0,1,2\n").find("cyc.csv:3:") == 0);
    CHECK(parse_error("t,a,label\n0,1,2\n1,nan,2\n").find("cyc.csv:3:") == 0);
    CHECK(parse_error("t,a,label\n0,1,2\n1,1,x\n").find("cyc.csv:3:") == 0);
    CHECK(parse_error("t,a,label\n").find("no data rows") != std::string::npos);
    CHECK(parse_error("t,a,label\n1,1,1\n").find("cyc.csv:2:") == 0);
}

TEST_CASE("formatting round-trips values exactly") {
    Rng rng(40);
    Cycle c = random_cycle(rng, "r", 3, 50);
    c.sensors.at(0, 0) = 0.1;
    c.sensors.at(1, 0) = 1.0 / 3.0;
    c.sensors.at(2, 0) = -1e-300;
    Cycle back = parse_cycle(format_cycle(c), "r");
    CHECK(back.sensors == c.sensors);
    CHECK(back.labels == c.labels);
    const auto dir = temp_dir("roundtrip");
    write_cycle(c, dir / "r.csv");
    Cycle loaded = load_cycle(dir / "r.csv");
    CHECK(loaded.id == "r");
    CHECK(loaded.sensors == c.sensors);
    CHECK_THROWS_AS(load_cycle(dir / "missing.csv"), DataError);
}

TEST_CASE("alphabet and one-hot encoding") {
    Alphabet a({5, 1, 3, 3});
    CHECK(a.codes() == std::vector<int>{1, 3, 5});
    CHECK(a.index_of(5) == 2);
    CHECK(a.code_of(1) == 3);
    CHECK_THROWS_AS(a.index_of(2), DataError);
    const std::vector<int> labels{3, 1, kPadLabel, 5};
    Tensor oh = one_hot(labels, a);
    CHECK(oh.shape() == Shape{4, 3});
    CHECK(oh.at(0, 1) == 1.0);
    CHECK(oh.at(1, 0) == 1.0);
    for (std::size_t j = 0; j < 3; ++j) CHECK(oh.at(2, j) == 0.0);
    CHECK(encode_labels(labels, a) == std::vector<int>{1, 0, -1, 2});
    const std::vector<int> real{3, 1, 5, 5};
    CHECK(decode_one_hot(one_hot(real, a), a) == real);
    Alphabet with_pad = Alphabet({1, kPadLabel});
    CHECK(with_pad.index_of(kPadLabel) == 0);
}

TEST_CASE("z-score normalization properties") {
    Rng rng(41);
    DatasetSplit split;
    for (int k = 0; k < 4; ++k) split.train.push_back(random_cycle(rng, "t" + std::to_string(k), 3, 30 + k * 7));
    split.val.push_back(random_cycle(rng, "v", 3, 20));
    // A constant sensor in every training cycle.
    for (auto& c : split.train) {
        for (std::size_t u = 0; u < c.length(); ++u) c.sensors.at(2, u) = 4.0;
    }
    const DatasetSplit raw = split;
    DatasetSplit n = zscore_normalize(split);
    for (std::size_t s = 0; s < 2; ++s) {
        double sum = 0, sq = 0, count = 0;
        for (const auto& c : n.train) {
            for (std::size_t u = 0; u < c.length(); ++u) {
                sum += c.sensors.at(s, u);
                sq += c.sensors.at(s, u) * c.sensors.at(s, u);
                count += 1;
            }
        }
        CHECK(std::abs(sum / count) <= 1e-9);
        CHECK(std::abs(sq / count - 1.0) <= 1e-9);
    }
    for (const auto& c : n.train) {
        for (std::size_t u = 0; u < c.length(); ++u) CHECK(c.sensors.at(2, u) == 0.0);
    }
    // Validation uses training statistics.
    const auto& v0 = raw.val[0].sensors;
    CHECK(n.val[0].sensors.at(0, 3) == doctest::Approx((v0.at(0, 3) - n.stats.mean[0]) / n.stats.stddev[0]));
    for (double v : n.val[0].sensors.data()) CHECK(std::isfinite(v));
    CHECK_THROWS_AS(compute_norm_stats({}), ArgumentError);
}

TEST_CASE("padded steps do not affect statistics") {
    Rng rng(42);
    Cycle c = random_cycle(rng, "a", 2, 15);
    Cycle padded = pad_min_value(c, 40, 10);
    const std::vector<Cycle> one{c}, other{padded};
    const NormStats a = compute_norm_stats(one), b = compute_norm_stats(other);
    CHECK(a.mean == b.mean);
    CHECK(a.stddev == b.stddev);
}

TEST_CASE("min-value padding") {
    Cycle c = make_cycle("p", {{3, 1, 2}}, {4, 4, 6});
    Cycle p = pad_min_value(c, 5);
    CHECK(p.sensors == Tensor::matrix({{3, 1, 2, 1, 1}}));
    CHECK(p.labels == std::vector<int>{4, 4, 6, kPadLabel, kPadLabel});
    CHECK(p.mask == Mask{1, 1, 1, 0, 0});
    CHECK(p.real_length() == 3);
    const std::vector<double> global{-7.0};
    CHECK(pad_min_value(c, 4, 1, global).sensors.at(0, 3) == -7.0);
    CHECK_THROWS_AS(pad_min_value(c, 2), ArgumentError);
    CHECK_THROWS_AS(pad_min_value(c, 5, 2), ArgumentError);
    CHECK(pad_min_value(c, 3).sensors == c.sensors);
    CHECK(round_up(45, 10) == 50);
    CHECK(round_up(40, 10) == 40);
}

TEST_CASE("dataset split sizes and determinism") {
    Rng rng(43);
    std::vector<Cycle> cycles;
    for (int k = 0; k < 40; ++k) cycles.push_back(random_cycle(rng, "c" + std::to_string(k), 2, 10));
    DatasetSplit s = split_dataset(cycles, {0.6, 0.2, 0.2}, 5);
    CHECK(s.train.size() == 24);
    CHECK(s.val.size() == 8);
    CHECK(s.test.size() == 8);
    std::set<std::string> ids;
    for (const auto* part : {&s.train, &s.val, &s.test}) {
        for (const auto& c : *part) ids.insert(c.id);
    }
    CHECK(ids.size() == 40);
    DatasetSplit again = split_dataset(cycles, {0.6, 0.2, 0.2}, 5);
    for (std::size_t i = 0; i < s.test.size(); ++i) CHECK(again.test[i].id == s.test[i].id);
    DatasetSplit other = split_dataset(cycles, {0.6, 0.2, 0.2}, 6);
    bool differs = false;
    for (std::size_t i = 0; i < s.test.size(); ++i) differs |= other.test[i].id != s.test[i].id;
    CHECK(differs);
    CHECK(s.alphabet.codes() == std::vector<int>{1, 2, 3, 4});
    CHECK_THROWS_AS(split_dataset(std::vector<Cycle>(cycles.begin(), cycles.begin() + 2), {0.6, 0.2, 0.2}, 1),
                    ArgumentError);
    CHECK_THROWS_AS(split_dataset(cycles, {0.5, 0.2, 0.2}, 1), ArgumentError);
}

TEST_CASE("manifest reading") {
    const auto dir = temp_dir("manifest");
    {
        std::ofstream m(dir / "manifest.csv");
        m << "path,split\na.csv,train\nsub/b.csv,test\n";
    }
    auto entries = read_manifest(dir / "manifest.csv");
    REQUIRE(entries.size() == 2);
    CHECK(entries[0].path == dir / "a.csv");
    CHECK(entries[1].split == "test");
    try {
        read_manifest(dir / "nope.csv");
        CHECK(false);
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("nope.csv") != std::string::npos);
    }
    {
        std::ofstream m(dir / "bad.csv");
        m << "path,split\na.csv,holdout\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "bad.csv"), ParseError);
}

TEST_CASE("prepared data pads to a window multiple and masks padding") {
    Rng rng(44);
    DatasetSplit split;
    split.train = {random_cycle(rng, "a", 2, 23), random_cycle(rng, "b", 2, 17)};
    split.val = {random_cycle(rng, "v", 2, 31)};
    split.test = {random_cycle(rng, "t", 2, 9)};
    split.alphabet = Alphabet({1, 2, 3, 4});
    PreparedData p = prepare_dataset(split, 10);
    CHECK(p.padded_length == 40);
    for (const auto* part : {&p.train, &p.val, &p.test}) {
        for (const auto& s : *part) {
            CHECK(s.sensors.dim(1) == 40);
            CHECK(s.target.shape() == Shape{40, 4});
            CHECK(s.weights.size() == 40);
        }
    }
    const Sample& t = p.test[0];
    for (std::size_t u = 0; u < 40; ++u) {
        CHECK((t.mask[u] == 1) == (u < 9));
        CHECK((t.classes[u] == -1) == (u >= 9));
    }
    PreparedData unmasked = prepare_dataset(split, 10, false);
    CHECK(unmasked.alphabet.contains(kPadLabel));
    CHECK(unmasked.test[0].mask == Mask(40, 1));
}
