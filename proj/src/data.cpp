#include "prectime/data.hpp"

#include "prectime/errors.hpp"
#include "prectime/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace prectime {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t comma = line.find(',', start);
        std::string_view field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
        while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) field.remove_suffix(1);
        out.push_back(field);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
    if (field.empty()) return false;
    if (field.front() == '+') field.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
    return ec == std::errc() && ptr == field.data() + field.size();
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::size_t Cycle::real_length() const {
    if (mask.empty()) return labels.size();
    return static_cast<std::size_t>(std::count_if(mask.begin(), mask.end(), [](auto m) { return m != 0; }));
}

Cycle parse_cycle(std::string_view text, std::string id, const std::string& source) {
    std::vector<std::vector<double>> columns;
    std::vector<int> labels;
    std::size_t line_no = 0;
    std::size_t expected_fields = 0;
    long last_t = -1;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) {
            if (line_no == 1) throw ParseError(source, line_no, "missing header");
            continue;
        }
        auto fields = split_fields(line);
        if (line_no == 1) {
            if (fields.size() < 3 || fields.front() != "t" || fields.back() != "label") {
                throw ParseError(source, line_no, "header must be t,<sensors...>,label");
            }
            expected_fields = fields.size();
            columns.resize(expected_fields - 2);
            continue;
        }
        if (fields.size() != expected_fields) {
            throw ParseError(source, line_no,
                             "expected " + std::to_string(expected_fields) + " fields, got " + std::to_string(fields.size()));
        }
        long t = 0;
        if (!parse_number(fields.front(), t)) throw ParseError(source, line_no, "t is not an integer");
        if ((last_t < 0 && t != 0) || (last_t >= 0 && t <= last_t)) {
            throw ParseError(source, line_no, "t must start at 0 and increase strictly");
        }
        last_t = t;
        for (std::size_t s = 0; s + 2 < expected_fields; ++s) {
            double v = 0.0;
            if (!parse_number(fields[s + 1], v) || !std::isfinite(v)) {
                throw ParseError(source, line_no, "sensor value '" + std::string(fields[s + 1]) + "' is not a finite number");
            }
            columns[s].push_back(v);
        }
        int label = 0;
        if (!parse_number(fields.back(), label) || label == kPadLabel) {
            throw ParseError(source, line_no, "label '" + std::string(fields.back()) + "' is not an integer");
        }
        labels.push_back(label);
    }
    if (labels.empty()) throw ParseError(source, line_no, "no data rows");

    const std::size_t steps = labels.size();
    Tensor sensors({columns.size(), steps});
    for (std::size_t s = 0; s < columns.size(); ++s) std::copy(columns[s].begin(), columns[s].end(), sensors.data().begin() + s * steps);
    Cycle c;
    c.id = std::move(id);
    c.sensors = std::move(sensors);
    c.labels = std::move(labels);
    c.mask.assign(steps, 1);
    return c;
}

Cycle load_cycle(const std::filesystem::path& path) {
    return parse_cycle(read_file(path), path.stem().string(), path.string());
}

std::string format_cycle(const Cycle& cycle) {
    std::ostringstream os;
    const std::size_t s_count = cycle.sensor_count();
    const std::size_t steps = cycle.length();
    os << 't';
    for (std::size_t s = 0; s < s_count; ++s) os << ",s" << (s + 1);
    os << ",label\n";
    std::size_t row = 0;
    for (std::size_t t = 0; t < steps; ++t) {
        if (!cycle.mask.empty() && !cycle.mask[t]) continue;
        os << row++;
        for (std::size_t s = 0; s < s_count; ++s) os << ',' << format_double(cycle.sensors[s * steps + t]);
        os << ',' << cycle.labels[t] << '\n';
    }
    return os.str();
}

void write_cycle(const Cycle& cycle, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << format_cycle(cycle);
}

Alphabet::Alphabet(std::vector<int> codes) : codes_(std::move(codes)) {
    std::sort(codes_.begin(), codes_.end());
    codes_.erase(std::unique(codes_.begin(), codes_.end()), codes_.end());
}

Alphabet Alphabet::from_cycles(std::span<const Cycle> cycles, bool include_pad) {
    std::set<int> seen;
    for (const auto& c : cycles) {
        for (int l : c.labels) {
            if (l != kPadLabel || include_pad) seen.insert(l);
        }
    }
    return Alphabet(std::vector<int>(seen.begin(), seen.end()));
}

bool Alphabet::contains(int code) const { return std::binary_search(codes_.begin(), codes_.end(), code); }

int Alphabet::index_of(int code) const {
    auto it = std::lower_bound(codes_.begin(), codes_.end(), code);
    if (it == codes_.end() || *it != code) {
        throw DataError("label " + (code == kPadLabel ? std::string("PAD") : std::to_string(code)) +
                        " is not in the alphabet");
    }
    return static_cast<int>(it - codes_.begin());
}

int Alphabet::code_of(std::size_t index) const {
    if (index >= codes_.size()) throw DataError("class index " + std::to_string(index) + " outside the alphabet");
    return codes_[index];
}

std::vector<int> encode_labels(std::span<const int> labels, const Alphabet& alphabet) {
    std::vector<int> out;
    out.reserve(labels.size());
    for (int l : labels) out.push_back(l == kPadLabel && !alphabet.contains(l) ? -1 : alphabet.index_of(l));
    return out;
}

Tensor one_hot(std::span<const int> labels, const Alphabet& alphabet) {
    if (labels.empty()) throw ShapeError("one_hot: empty label sequence");
    if (alphabet.size() == 0) throw ArgumentError("one_hot: empty alphabet");
    const auto idx = encode_labels(labels, alphabet);
    Tensor out({labels.size(), alphabet.size()}, 0.0);
    for (std::size_t t = 0; t < idx.size(); ++t) {
        if (idx[t] >= 0) out.at(t, static_cast<std::size_t>(idx[t])) = 1.0;
    }
    return out;
}

std::vector<int> decode_one_hot(const Tensor& encoded, const Alphabet& alphabet) {
    if (encoded.rank() != 2 || encoded.dim(1) != alphabet.size()) {
        throw ShapeError("decode_one_hot: expected [T x " + std::to_string(alphabet.size()) + "], got " +
                         shape_string(encoded.shape()));
    }
    const std::size_t c = encoded.dim(1);
    std::vector<int> out(encoded.dim(0));
    for (std::size_t t = 0; t < out.size(); ++t) {
        const double* row = encoded.data().data() + t * c;
        out[t] = alphabet.code_of(static_cast<std::size_t>(std::max_element(row, row + c) - row));
    }
    return out;
}

NormStats compute_norm_stats(std::span<const Cycle> train) {
    if (train.empty()) throw ArgumentError("normalization needs a non-empty training split");
    const std::size_t s_count = train.front().sensor_count();
    NormStats stats;
    stats.mean.assign(s_count, 0.0);
    stats.stddev.assign(s_count, 0.0);
    std::size_t n = 0;
    for (const auto& c : train) {
        if (c.sensor_count() != s_count) throw DataError("cycle '" + c.id + "' has a different sensor count");
        for (std::size_t t = 0; t < c.length(); ++t) {
            if (!c.mask.empty() && !c.mask[t]) continue;
            ++n;
            for (std::size_t s = 0; s < s_count; ++s) stats.mean[s] += c.sensors[s * c.length() + t];
        }
    }
    if (n == 0) throw ArgumentError("normalization: training split has no real timesteps");
    for (auto& m : stats.mean) m /= static_cast<double>(n);
    for (const auto& c : train) {
        for (std::size_t t = 0; t < c.length(); ++t) {
            if (!c.mask.empty() && !c.mask[t]) continue;
            for (std::size_t s = 0; s < s_count; ++s) {
                const double d = c.sensors[s * c.length() + t] - stats.mean[s];
                stats.stddev[s] += d * d;
            }
        }
    }
    for (auto& v : stats.stddev) v = std::sqrt(v / static_cast<double>(n));
    return stats;
}

Cycle apply_norm(const Cycle& cycle, const NormStats& stats) {
    const std::size_t s_count = cycle.sensor_count();
    if (stats.mean.size() != s_count || stats.stddev.size() != s_count) {
        throw DataError("cycle '" + cycle.id + "' has " + std::to_string(s_count) + " sensors, statistics cover " +
                        std::to_string(stats.mean.size()));
    }
    Cycle out = cycle;
    const std::size_t steps = cycle.length();
    for (std::size_t s = 0; s < s_count; ++s) {
        double* row = out.sensors.data().data() + s * steps;
        const bool degenerate = stats.stddev[s] < kMinStd;
        for (std::size_t t = 0; t < steps; ++t) {
            row[t] = degenerate ? 0.0 : (row[t] - stats.mean[s]) / stats.stddev[s];
        }
    }
    return out;
}

DatasetSplit zscore_normalize(DatasetSplit split) {
    split.stats = compute_norm_stats(split.train);
    for (auto* part : {&split.train, &split.val, &split.test}) {
        for (auto& c : *part) c = apply_norm(c, split.stats);
    }
    return split;
}

std::size_t round_up(std::size_t value, std::size_t multiple) {
    if (multiple == 0) throw ArgumentError("round_up: multiple must be positive");
    return (value + multiple - 1) / multiple * multiple;
}

Cycle pad_min_value(const Cycle& cycle, std::size_t target_length, std::size_t window_length,
                    std::span<const double> global_minimum) {
    const std::size_t steps = cycle.length();
    if (target_length < steps) {
        throw ArgumentError("pad: target length " + std::to_string(target_length) + " is shorter than cycle '" +
                            cycle.id + "' (" + std::to_string(steps) + ")");
    }
    if (window_length == 0 || target_length % window_length != 0) {
        throw ArgumentError("pad: target length " + std::to_string(target_length) + " is not a multiple of " +
                            std::to_string(window_length));
    }
    const std::size_t s_count = cycle.sensor_count();
    if (!global_minimum.empty() && global_minimum.size() != s_count) {
        throw ArgumentError("pad: global minimum has the wrong sensor count");
    }
    Cycle out = cycle;
    if (out.mask.size() != steps) out.mask.assign(steps, 1);
    if (target_length == steps) return out;

    Tensor sensors({s_count, target_length});
    for (std::size_t s = 0; s < s_count; ++s) {
        const double* src = cycle.sensors.data().data() + s * steps;
        double* dst = sensors.data().data() + s * target_length;
        std::copy(src, src + steps, dst);
        const double fill = global_minimum.empty() ? *std::min_element(src, src + steps) : global_minimum[s];
        std::fill(dst + steps, dst + target_length, fill);
    }
    out.sensors = std::move(sensors);
    out.labels.resize(target_length, kPadLabel);
    out.mask.resize(target_length, 0);
    return out;
}

DatasetSplit split_dataset(std::vector<Cycle> cycles, std::array<double, 3> ratios, std::uint64_t seed) {
    const double total = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(total - 1.0) > 1e-9 || ratios[0] <= 0.0 || ratios[1] < 0.0 || ratios[2] < 0.0) {
        throw ArgumentError("split ratios must be non-negative, with a positive train share, and sum to 1");
    }
    std::size_t parts = 1 + (ratios[1] > 0.0) + (ratios[2] > 0.0);
    if (cycles.size() < parts) {
        throw ArgumentError("cannot split " + std::to_string(cycles.size()) + " cycles into " + std::to_string(parts) +
                            " parts");
    }
    std::set<std::string> ids;
    for (const auto& c : cycles) {
        if (!ids.insert(c.id).second) throw DataError("duplicate cycle id '" + c.id + "'");
    }

    Rng rng(seed);
    for (std::size_t i = cycles.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i - 1)));
        std::swap(cycles[i - 1], cycles[j]);
    }

    const double n = static_cast<double>(cycles.size());
    auto share = [&](double r) -> std::size_t {
        if (r <= 0.0) return 0;
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(n * r + 1e-9)));
    };
    const std::size_t n_val = share(ratios[1]);
    const std::size_t n_test = share(ratios[2]);
    const std::size_t n_train = cycles.size() - n_val - n_test;

    DatasetSplit out;
    out.alphabet = Alphabet::from_cycles(cycles);
    auto it = std::make_move_iterator(cycles.begin());
    out.train.assign(it, it + n_train);
    out.val.assign(it + n_train, it + n_train + n_val);
    out.test.assign(it + n_train + n_val, std::make_move_iterator(cycles.end()));
    return out;
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("manifest '" + path.string() + "' does not exist");
    const std::string text = read_file(path);
    const auto base = path.parent_path();
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (line_no == 1) {
            if (fields.size() != 2 || fields[0] != "path" || fields[1] != "split") {
                throw ParseError(path.string(), line_no, "header must be path,split");
            }
            continue;
        }
        if (fields.size() != 2) throw ParseError(path.string(), line_no, "expected path,split");
        std::string split(fields[1]);
        if (split != "train" && split != "val" && split != "test") {
            throw ParseError(path.string(), line_no, "split must be train, val or test");
        }
        std::filesystem::path p{std::string(fields[0])};
        if (p.is_relative()) p = base / p;
        out.push_back({p, split});
    }
    if (out.empty()) throw DataError("manifest '" + path.string() + "' lists no cycles");
    return out;
}

std::string format_manifest(std::span<const ManifestEntry> entries) {
    std::ostringstream os;
    os << "path,split\n";
    for (const auto& e : entries) os << e.path.generic_string() << ',' << e.split << '\n';
    return os.str();
}

Sample make_sample(const Cycle& cycle, const Alphabet& alphabet, bool mask_padding) {
    Sample s;
    s.id = cycle.id;
    s.sensors = cycle.sensors;
    s.codes = cycle.labels;
    s.classes = encode_labels(cycle.labels, alphabet);
    s.target = one_hot(cycle.labels, alphabet);
    s.mask.assign(cycle.length(), 1);
    if (mask_padding && !cycle.mask.empty()) s.mask = cycle.mask;
    s.weights.assign(s.mask.begin(), s.mask.end());
    return s;
}

PreparedData prepare_dataset(DatasetSplit split, std::size_t window_length, bool mask_padding) {
    if (split.train.empty()) throw ArgumentError("prepare: empty training split");
    split = zscore_normalize(std::move(split));
    std::size_t longest = 0;
    for (const auto* part : {&split.train, &split.val, &split.test}) {
        for (const auto& c : *part) longest = std::max(longest, c.length());
    }
    PreparedData out;
    out.padded_length = round_up(longest, window_length);
    out.stats = split.stats;
    out.alphabet = mask_padding ? split.alphabet : Alphabet([&] {
        auto codes = split.alphabet.codes();
        codes.push_back(kPadLabel);
        return codes;
    }());
    auto encode = [&](const std::vector<Cycle>& part, std::vector<Sample>& dst) {
        for (const auto& c : part) dst.push_back(make_sample(pad_min_value(c, out.padded_length, window_length), out.alphabet, mask_padding));
    };
    encode(split.train, out.train);
    encode(split.val, out.val);
    encode(split.test, out.test);
    return out;
}

}  // namespace prectime
