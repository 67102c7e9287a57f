#include "prectime/model.hpp"

#include "prectime/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace prectime {

Variant parse_variant(std::string_view text) {
    std::string s(text);
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    if (s == "full") return Variant::full;
    if (s == "a1") return Variant::a1;
    if (s == "a2") return Variant::a2;
    if (s == "a3") return Variant::a3;
    throw ArgumentError("unknown variant '" + std::string(text) + "' (expected full, A1, A2 or A3)");
}

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::full: return "full";
        case Variant::a1: return "A1";
        case Variant::a2: return "A2";
        case Variant::a3: return "A3";
    }
    return "full";
}

void ModelConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("model." + field + ": " + why);
    };
    if (sensors < 1) fail("sensors", "must be >= 1");
    if (num_classes < 2) fail("num_classes", "must be >= 2");
    if (pool_m < 1) fail("pool_m", "must be >= 1");
    if (window_length < pool_m) fail("window_length", "must be >= pool_m");
    if (window_length % pool_m != 0) fail("window_length", "must be divisible by pool_m");
    if (upsample_factor * pooled_length() != window_length) {
        fail("upsample_factor", "upsample_factor * window_length / pool_m must equal window_length");
    }
    if (cnn_channels < 1) fail("cnn_channels", "must be >= 1");
    if (refine_channels < 1) fail("refine_channels", "must be >= 1");
    if (cnn_kernel < 1) fail("cnn_kernel", "must be >= 1");
    if (dilation_low < 1) fail("dilation_low", "must be >= 1");
    if (dilation_high < 1) fail("dilation_high", "must be >= 1");
    if (lstm1_hidden < 1) fail("lstm1_hidden", "must be >= 1");
    if (lstm2_hidden < 1) fail("lstm2_hidden", "must be >= 1");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p", "must be in [0, 1)");
    const std::size_t widest = std::max(dilation_low, dilation_high) * (cnn_kernel - 1) + 1;
    if (widest > pooled_length()) {
        fail("dilation_high", "receptive field " + std::to_string(widest) + " exceeds pooled window length " +
                                  std::to_string(pooled_length()));
    }
}

WindowBatch split_windows(const Tensor& cycle, std::size_t window_length) {
    Tape tape;
    Var w = ops::split_windows(tape, tape.constant(cycle), window_length);
    WindowBatch batch;
    batch.windows = tape.value(w);
    batch.count = batch.windows.dim(0);
    batch.origin_length = cycle.dim(1);
    return batch;
}

Tensor merge_windows(const Tensor& window_preds) {
    if (window_preds.rank() != 3) {
        throw ShapeError("merge_windows: expected [N x L x C], got " + shape_string(window_preds.shape()));
    }
    return window_preds.reshaped({window_preds.dim(0) * window_preds.dim(1), window_preds.dim(2)});
}

namespace {

std::size_t conv_count(std::size_t c_in, std::size_t c_out, std::size_t k) { return k * c_in * c_out + c_out; }
std::size_t dense_count(std::size_t d_in, std::size_t d_out) { return (d_in + 1) * d_out; }
std::size_t lstm_count(std::size_t d_in, std::size_t h) { return 4 * ((d_in + h) * h + h); }

}  // namespace

ParamCount count_params(const ModelConfig& config, Variant variant, const DimensionOverrides& dims) {
    ParamCount out;
    auto add = [&](std::string name, std::size_t n) {
        out.layers.push_back({std::move(name), n});
        out.total += n;
    };
    const std::size_t ch = config.cnn_channels;
    const std::size_t k = config.cnn_kernel;
    std::size_t unflat_channels = config.sensors;
    std::size_t feature_width = config.sensors * config.window_length;
    if (variant != Variant::a1) {
        for (const char* stream : {"stream_a", "stream_b"}) {
            const std::string prefix(stream);
            add(prefix + ".conv0", conv_count(config.sensors, ch, k));
            for (int i = 1; i <= 3; ++i) add(prefix + ".conv" + std::to_string(i), conv_count(ch, ch, k));
        }
        unflat_channels = 2 * ch;
        feature_width = 2 * ch * config.pooled_length();
    }
    if (dims.feature_width) feature_width = *dims.feature_width;

    const std::size_t d_ctx = config.context_width();
    if (variant == Variant::a2) {
        add("context.dense", dense_count(feature_width, d_ctx));
    } else {
        const std::size_t h1 = config.lstm1_hidden;
        const std::size_t h2 = config.lstm2_hidden;
        add("lstm1.forward", lstm_count(feature_width, h1));
        add("lstm1.backward", lstm_count(feature_width, h1));
        add("lstm2.forward", lstm_count(2 * h1, h2));
        add("lstm2.backward", lstm_count(2 * h1, h2));
    }
    add("head_intermediate", dense_count(d_ctx, config.num_classes));
    if (variant != Variant::a3) {
        const std::size_t refine_in = dims.refine_input_channels.value_or(unflat_channels + d_ctx);
        const std::size_t rc = config.refine_channels;
        add("refine.conv0", conv_count(refine_in, rc, k));
        add("refine.conv1", conv_count(rc, rc, k));
        add("head_final", dense_count(rc, config.num_classes));
    }
    return out;
}

PrecTimeModel::PrecTimeModel(ModelConfig config, Variant variant, std::uint64_t seed)
    : config_(config), variant_(variant) {
    config_.validate();
    init_parameters(seed);
}

std::size_t PrecTimeModel::unflat_channels() const {
    return variant_ == Variant::a1 ? config_.sensors : 2 * config_.cnn_channels;
}

std::size_t PrecTimeModel::unflat_length() const {
    return variant_ == Variant::a1 ? config_.window_length : config_.pooled_length();
}

std::size_t PrecTimeModel::feature_width() const { return unflat_channels() * unflat_length(); }

std::size_t PrecTimeModel::effective_upsample() const {
    return variant_ == Variant::a1 ? 1 : config_.upsample_factor;
}

void PrecTimeModel::init_parameters(std::uint64_t seed) {
    Rng rng = Rng(seed).fork("init");
    auto uniform_tensor = [&](Shape shape, double bound) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = rng.uniform(-bound, bound);
        return t;
    };
    auto conv = [&](const std::string& name, std::size_t c_in, std::size_t c_out) {
        const std::size_t k = config_.cnn_kernel;
        const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k + c_out * k));
        params_.add(name + ".weight", uniform_tensor({c_out, c_in, k}, bound));
        params_.add(name + ".bias", Tensor({c_out}, 0.0));
    };
    auto dense = [&](const std::string& name, std::size_t d_in, std::size_t d_out) {
        const double bound = std::sqrt(6.0 / static_cast<double>(d_in + d_out));
        params_.add(name + ".weight", uniform_tensor({d_in, d_out}, bound));
        params_.add(name + ".bias", Tensor({d_out}, 0.0));
    };
    auto lstm = [&](const std::string& name, std::size_t d_in, std::size_t h) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(h));
        params_.add(name + ".wx", uniform_tensor({d_in, 4 * h}, bound));
        params_.add(name + ".wh", uniform_tensor({h, 4 * h}, bound));
        Tensor b = uniform_tensor({4 * h}, bound);
        for (std::size_t q = h; q < 2 * h; ++q) b[q] = 1.0;
        params_.add(name + ".b", std::move(b));
    };

    const std::size_t ch = config_.cnn_channels;
    if (variant_ != Variant::a1) {
        for (const char* stream : {"stream_a", "stream_b"}) {
            const std::string prefix(stream);
            conv(prefix + ".conv0", config_.sensors, ch);
            for (int i = 1; i <= 3; ++i) conv(prefix + ".conv" + std::to_string(i), ch, ch);
        }
    }
    const std::size_t d_f = feature_width();
    const std::size_t d_ctx = context_width();
    if (variant_ == Variant::a2) {
        dense("context.dense", d_f, d_ctx);
    } else {
        lstm("lstm1.forward", d_f, config_.lstm1_hidden);
        lstm("lstm1.backward", d_f, config_.lstm1_hidden);
        lstm("lstm2.forward", 2 * config_.lstm1_hidden, config_.lstm2_hidden);
        lstm("lstm2.backward", 2 * config_.lstm1_hidden, config_.lstm2_hidden);
    }
    dense("head_intermediate", d_ctx, config_.num_classes);
    if (variant_ != Variant::a3) {
        conv("refine.conv0", unflat_channels() + d_ctx, config_.refine_channels);
        conv("refine.conv1", config_.refine_channels, config_.refine_channels);
        dense("head_final", config_.refine_channels, config_.num_classes);
    }
}

namespace {

// Resolves parameter names to tape variables, once per tape.
class Bindings {
public:
    Bindings(Tape& tape, const ParameterSet& params, bool trainable)
        : tape_(tape), params_(params), trainable_(trainable) {}

    Var operator()(const std::string& name) {
        auto it = vars_.find(name);
        if (it != vars_.end()) return it->second;
        const Parameter& p = params_.get(name);
        // Trainable binding is only requested through the non-const forward,
        // which owns the parameter set mutably.
        Var v = trainable_ ? tape_.parameter(const_cast<Parameter&>(p)) : tape_.constant(p.value);
        vars_.emplace(name, v);
        return v;
    }

private:
    Tape& tape_;
    const ParameterSet& params_;
    bool trainable_;
    std::map<std::string, Var> vars_;
};

}  // namespace

Var intermediate_head(Tape& tape, Var context, Var weight, Var bias, std::size_t window_length) {
    Var logits = ops::dense(tape, context, weight, bias);
    Var probs = ops::softmax(tape, logits);
    return ops::repeat_rows(tape, probs, window_length);
}

ForwardVars PrecTimeModel::build(Tape& tape, Var cycle, bool training, Rng* rng, bool trainable) const {
    const ModelConfig& c = config_;
    const Tensor& x = tape.value(cycle);
    if (x.rank() != 2 || x.dim(0) != c.sensors) {
        throw ShapeError("forward: expected cycle [" + std::to_string(c.sensors) + " x T], got " +
                         shape_string(x.shape()));
    }
    const std::size_t total = x.dim(1);
    Bindings bind(tape, params_, trainable);
    ForwardVars out;
    out.windows = ops::split_windows(tape, cycle, c.window_length);
    const std::size_t n = tape.value(out.windows).dim(0);

    auto conv = [&](Var in, const std::string& name, std::size_t dilation) {
        ops::Conv1dOptions opts;
        opts.dilation = dilation;
        return ops::conv1d(tape, in, bind(name + ".weight"), bind(name + ".bias"), opts);
    };
    auto lstm_weights = [&](const std::string& name) {
        return ops::LstmWeights{bind(name + ".wx"), bind(name + ".wh"), bind(name + ".b")};
    };

    // Feature extraction: two dilation streams, concatenated along channels.
    if (variant_ == Variant::a1) {
        out.unflat = out.windows;
    } else {
        auto stream = [&](const std::string& prefix, std::size_t dilation) {
            Var h = ops::relu(tape, conv(out.windows, prefix + ".conv0", dilation));
            h = ops::dropout(tape, h, c.dropout_p, rng, training);
            h = ops::maxpool1d(tape, h, c.pool_m);
            for (int i = 1; i <= 3; ++i) h = ops::relu(tape, conv(h, prefix + ".conv" + std::to_string(i), dilation));
            return h;
        };
        Var a = stream("stream_a", c.dilation_low);
        Var b = stream("stream_b", c.dilation_high);
        out.unflat = ops::concat(tape, a, b, 1);
    }
    out.flat = ops::reshape(tape, out.unflat, {n, feature_width()});

    // Context detection across windows.
    if (variant_ == Variant::a2) {
        out.context = ops::tanh(tape, ops::dense(tape, out.flat, bind("context.dense.weight"),
                                                 bind("context.dense.bias")));
    } else {
        Var h1 = ops::bilstm(tape, out.flat, lstm_weights("lstm1.forward"), lstm_weights("lstm1.backward"),
                             ops::Merge::concat);
        out.context = ops::bilstm(tape, h1, lstm_weights("lstm2.forward"), lstm_weights("lstm2.backward"),
                                  c.lstm2_merge);
    }

    out.intermediate = intermediate_head(tape, out.context, bind("head_intermediate.weight"),
                                         bind("head_intermediate.bias"), c.window_length);

    if (variant_ != Variant::a3) {
        const std::size_t lu = unflat_length();
        Var ctx = ops::broadcast_time(tape, out.context, lu);
        Var h = ops::concat(tape, out.unflat, ctx, 1);
        h = ops::relu(tape, conv(h, "refine.conv0", 1));
        h = ops::upsample_nearest(tape, h, effective_upsample());
        h = ops::relu(tape, conv(h, "refine.conv1", 1));
        h = ops::dropout(tape, h, c.dropout_p, rng, training);
        h = ops::swap_last_axes(tape, h);
        h = ops::dense(tape, h, bind("head_final.weight"), bind("head_final.bias"));
        h = ops::softmax(tape, h);
        out.final = ops::reshape(tape, h, {total, c.num_classes});
    }
    return out;
}

ForwardVars PrecTimeModel::forward(Tape& tape, Var cycle, bool training, Rng* rng) {
    return build(tape, cycle, training, rng, true);
}

ForwardVars PrecTimeModel::forward(Tape& tape, Var cycle) const { return build(tape, cycle, false, nullptr, false); }

DualPrediction PrecTimeModel::predict(const Tensor& cycle) const {
    Tape tape;
    ForwardVars v = forward(tape, tape.constant(cycle));
    DualPrediction out;
    out.intermediate = tape.value(v.intermediate);
    if (v.final.valid()) out.final = tape.value(v.final);
    return out;
}

PrecTimeModel make_ablation(const ModelConfig& config, Variant variant, std::uint64_t seed) {
    if (variant == Variant::full) throw ArgumentError("make_ablation: 'full' is not an ablation variant");
    return PrecTimeModel(config, variant, seed);
}

}  // namespace prectime
