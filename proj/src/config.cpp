#include "prectime/config.hpp"

#include "prectime/errors.hpp"
#include "prectime/rng.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace prectime {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

// Raised by value converters; the parser attaches source, line and key.
struct BadValue {
    std::string why;
};

std::size_t to_size(std::string_view v) {
    std::size_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue{"expected a non-negative integer"};
    return out;
}

std::uint64_t to_u64(std::string_view v) {
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue{"expected a non-negative integer"};
    return out;
}

int to_int(std::string_view v) {
    int out = 0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue{"expected an integer"};
    return out;
}

double to_double(std::string_view v) {
    double out = 0.0;
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || p != v.data() + v.size()) throw BadValue{"expected a number"};
    return out;
}

bool to_bool(std::string_view v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw BadValue{"expected true or false"};
}

std::vector<std::string_view> split_list(std::string_view v, char sep) {
    std::vector<std::string_view> out;
    while (true) {
        const auto pos = v.find(sep);
        out.push_back(trim(v.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        v.remove_prefix(pos + 1);
    }
    return out;
}

std::vector<std::size_t> to_size_list(std::string_view v) {
    std::vector<std::size_t> out;
    for (auto item : split_list(v, ',')) out.push_back(to_size(item));
    return out;
}

// "2:3, 4:5"
std::vector<std::pair<std::size_t, std::size_t>> to_pairs(std::string_view v) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (trim(v).empty() || trim(v) == "none") return out;
    for (auto item : split_list(v, ',')) {
        auto halves = split_list(item, ':');
        if (halves.size() != 2) throw BadValue{"expected pairs like 2:3,4:5"};
        out.emplace_back(to_size(halves[0]), to_size(halves[1]));
    }
    return out;
}

using Setter = std::function<void(RunConfig&, std::string_view)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["seed"] = [](RunConfig& c, std::string_view v) { c.seed = to_u64(v); };
        t["variant"] = [](RunConfig& c, std::string_view v) {
            try {
                c.variant = parse_variant(v);
            } catch (const ArgumentError&) {
                throw BadValue{"expected full, A1, A2 or A3"};
            }
        };
        t["output_dir"] = [](RunConfig& c, std::string_view v) { c.output_dir = std::string(v); };

        t["model.sensors"] = [](RunConfig& c, std::string_view v) { c.model.sensors = to_size(v); };
        t["model.num_classes"] = [](RunConfig& c, std::string_view v) { c.model.num_classes = to_size(v); };
        t["model.window_length"] = [](RunConfig& c, std::string_view v) { c.model.window_length = to_size(v); };
        t["model.cnn_channels"] = [](RunConfig& c, std::string_view v) { c.model.cnn_channels = to_size(v); };
        t["model.cnn_kernel"] = [](RunConfig& c, std::string_view v) { c.model.cnn_kernel = to_size(v); };
        t["model.dilation_low"] = [](RunConfig& c, std::string_view v) { c.model.dilation_low = to_size(v); };
        t["model.dilation_high"] = [](RunConfig& c, std::string_view v) { c.model.dilation_high = to_size(v); };
        t["model.dropout_p"] = [](RunConfig& c, std::string_view v) { c.model.dropout_p = to_double(v); };
        t["model.pool_m"] = [](RunConfig& c, std::string_view v) { c.model.pool_m = to_size(v); };
        t["model.lstm1_hidden"] = [](RunConfig& c, std::string_view v) { c.model.lstm1_hidden = to_size(v); };
        t["model.lstm2_hidden"] = [](RunConfig& c, std::string_view v) { c.model.lstm2_hidden = to_size(v); };
        t["model.lstm2_merge"] = [](RunConfig& c, std::string_view v) {
            if (v == "sum") c.model.lstm2_merge = ops::Merge::sum;
            else if (v == "concat") c.model.lstm2_merge = ops::Merge::concat;
            else throw BadValue{"expected sum or concat"};
        };
        t["model.refine_channels"] = [](RunConfig& c, std::string_view v) { c.model.refine_channels = to_size(v); };
        t["model.feature_width"] = [](RunConfig& c, std::string_view v) { c.dims.feature_width = to_size(v); };
        t["model.refine_input_channels"] = [](RunConfig& c, std::string_view v) {
            c.dims.refine_input_channels = to_size(v);
        };
        t["model.upsample_factor"] = [](RunConfig& c, std::string_view v) { c.model.upsample_factor = to_size(v); };

        t["train.lr"] = [](RunConfig& c, std::string_view v) { c.train.lr = to_double(v); };
        t["train.max_epochs"] = [](RunConfig& c, std::string_view v) { c.train.max_epochs = to_size(v); };
        t["train.patience"] = [](RunConfig& c, std::string_view v) { c.train.patience = to_size(v); };
        t["train.w_final"] = [](RunConfig& c, std::string_view v) { c.train.w_final = to_double(v); };
        t["train.w_intermediate"] = [](RunConfig& c, std::string_view v) { c.train.w_intermediate = to_double(v); };
        t["train.mask_padding"] = [](RunConfig& c, std::string_view v) { c.train.mask_padding = to_bool(v); };

        t["data.manifest"] = [](RunConfig& c, std::string_view v) { c.data.manifest = std::string(v); };
        t["data.synth"] = [](RunConfig& c, std::string_view v) { c.data.synth = std::string(v); };
        t["data.split"] = [](RunConfig& c, std::string_view v) {
            auto parts = split_list(v, ',');
            if (parts.size() != 3) throw BadValue{"expected three ratios train,val,test"};
            for (std::size_t k = 0; k < 3; ++k) c.data.split[k] = to_double(parts[k]);
        };

        t["synth.sensors"] = [](RunConfig& c, std::string_view v) { c.synth.sensors = to_size(v); };
        t["synth.states"] = [](RunConfig& c, std::string_view v) { c.synth.states = to_size(v); };
        t["synth.mirrored_pairs"] = [](RunConfig& c, std::string_view v) { c.synth.mirrored_pairs = to_pairs(v); };
        t["synth.duration_min"] = [](RunConfig& c, std::string_view v) { c.synth.duration_min = to_size(v); };
        t["synth.duration_max"] = [](RunConfig& c, std::string_view v) { c.synth.duration_max = to_size(v); };
        t["synth.noise_std"] = [](RunConfig& c, std::string_view v) { c.synth.noise_std = to_double(v); };
        t["synth.cycles"] = [](RunConfig& c, std::string_view v) { c.synth.cycles = to_size(v); };
        t["synth.sequence"] = [](RunConfig& c, std::string_view v) { c.synth.sequence = to_size_list(v); };
        t["synth.repeat_prob"] = [](RunConfig& c, std::string_view v) { c.synth.repeat_prob = to_double(v); };
        t["synth.ramp_prob"] = [](RunConfig& c, std::string_view v) { c.synth.ramp_prob = to_double(v); };
        t["synth.sample_rate_hz"] = [](RunConfig& c, std::string_view v) { c.synth.sample_rate_hz = to_double(v); };
        t["synth.label_offset"] = [](RunConfig& c, std::string_view v) { c.synth.label_offset = to_int(v); };
        t["synth.seed"] = [](RunConfig& c, std::string_view v) { c.synth.seed = to_u64(v); };

        t["metrics.tolerance"] = [](RunConfig& c, std::string_view v) {
            c.metrics.tolerance = static_cast<long>(to_size(v));
        };
        t["metrics.matching"] = [](RunConfig& c, std::string_view v) {
            if (v == "existence") c.metrics.matching = Matching::existence;
            else if (v == "exclusive") c.metrics.matching = Matching::exclusive;
            else throw BadValue{"expected existence or exclusive"};
        };
        t["metrics.pooling"] = [](RunConfig& c, std::string_view v) {
            if (v == "micro") c.metrics.pooling = Pooling::micro;
            else if (v == "per_cycle") c.metrics.pooling = Pooling::per_cycle;
            else throw BadValue{"expected micro or per_cycle"};
        };
        t["metrics.absent_class_f1"] = [](RunConfig& c, std::string_view v) {
            c.metrics.absent_class_f1 = to_double(v);
        };
        return t;
    }();
    return table;
}

}  // namespace

std::uint64_t RunConfig::init_seed() const { return derive_seed(seed, "init"); }
std::uint64_t RunConfig::dropout_seed() const { return derive_seed(seed, "dropout"); }
std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, "split"); }
std::uint64_t RunConfig::synth_seed() const { return is_set("synth.seed") ? synth.seed : derive_seed(seed, "synth"); }

void RunConfig::override_seed(std::uint64_t s) { seed = s; }

TrainConfig RunConfig::resolved_train() const {
    TrainConfig t = train;
    t.seed = dropout_seed();
    return t;
}

SynthSpec RunConfig::resolved_synth() const {
    SynthSpec s = synth;
    s.seed = synth_seed();
    return s;
}

RunConfig parse_run_config(std::string_view text, const std::string& source) {
    RunConfig cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto fail = [&](const std::string& what) {
            throw ConfigError(source + ":" + std::to_string(line_no) + ": " + what);
        };
        if (line.front() == '[') {
            if (line.back() != ']') fail("unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section != "model" && section != "train" && section != "data" && section != "synth" &&
                section != "metrics") {
                fail("unknown section [" + section + "]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail("expected 'key = value'");
        const std::string key(trim(line.substr(0, eq)));
        const std::string_view value = trim(line.substr(eq + 1));
        if (key.empty()) fail("missing key before '='");
        const std::string full = section.empty() ? key : section + "." + key;
        const auto it = setters().find(full);
        if (it == setters().end()) fail("unknown key '" + full + "'");
        if (!cfg.explicit_keys.insert(full).second) fail("key '" + full + "' is set twice");
        if (value.empty()) fail("key '" + full + "' has no value");
        try {
            it->second(cfg, value);
        } catch (const BadValue& e) {
            fail("key '" + full + "': " + e.why + ", got '" + std::string(value) + "'");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    RunConfig cfg = parse_run_config(os.str(), path.string());
    cfg.base_dir = path.parent_path();
    return cfg;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
    SynthSpec spec = load_run_config(path).resolved_synth();
    spec.validate();
    return spec;
}

}  // namespace prectime
