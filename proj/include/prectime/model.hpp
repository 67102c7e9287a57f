#pragma once

#include "prectime/autodiff.hpp"
#include "prectime/ops.hpp"
#include "prectime/rng.hpp"
#include "prectime/tensor.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace prectime {

// full: all three modules. a1: feature extraction replaced by flattening.
// a2: recurrent context replaced by a per-window dense layer. a3: no
// refinement module, only the intermediate head is trained and evaluated.
enum class Variant { full, a1, a2, a3 };

Variant parse_variant(std::string_view text);
std::string variant_name(Variant v);

struct ModelConfig {
    std::size_t sensors = 9;
    std::size_t num_classes = 42;
    std::size_t window_length = 100;
    std::size_t cnn_channels = 128;
    std::size_t cnn_kernel = 5;
    std::size_t dilation_low = 1;
    std::size_t dilation_high = 4;
    double dropout_p = 0.1;
    std::size_t pool_m = 2;
    std::size_t lstm1_hidden = 100;
    std::size_t lstm2_hidden = 200;
    ops::Merge lstm2_merge = ops::Merge::sum;
    std::size_t refine_channels = 128;
    std::size_t upsample_factor = 2;

    // Throws ConfigError naming the offending field.
    void validate() const;

    std::size_t pooled_length() const { return window_length / pool_m; }
    std::size_t context_width() const {
        return lstm2_merge == ops::Merge::sum ? lstm2_hidden : 2 * lstm2_hidden;
    }
};

struct WindowBatch {
    Tensor windows;  // [N x S x L]
    std::size_t count = 0;
    std::size_t origin_length = 0;
};

// Throws ShapeError when T is not a multiple of L.
WindowBatch split_windows(const Tensor& cycle, std::size_t window_length);
// [N x L x C] -> [N*L x C].
Tensor merge_windows(const Tensor& window_preds);

struct DualPrediction {
    Tensor intermediate;          // [T x C], constant within each window
    std::optional<Tensor> final;  // [T x C], absent for a3
};

struct LayerCount {
    std::string layer;
    std::size_t count;
};

struct ParamCount {
    std::vector<LayerCount> layers;
    std::size_t total = 0;
};

// Lets the closed-form count be evaluated under externally given widths
// instead of the ones derived from the window geometry.
struct DimensionOverrides {
    std::optional<std::size_t> feature_width;
    std::optional<std::size_t> refine_input_channels;
};

ParamCount count_params(const ModelConfig& config, Variant variant, const DimensionOverrides& dims = {});

// Named recorded values of one forward pass.
struct ForwardVars {
    Var windows;       // [N x S x L]
    Var unflat;        // [N x C_u x L_u]
    Var flat;          // [N x D_F]
    Var context;       // [N x D_ctx]
    Var intermediate;  // [T x C]
    Var final;         // [T x C], invalid for a3
};

class PrecTimeModel {
public:
    PrecTimeModel(ModelConfig config, Variant variant, std::uint64_t seed);

    const ModelConfig& config() const noexcept { return config_; }
    Variant variant() const noexcept { return variant_; }
    ParameterSet& parameters() noexcept { return params_; }
    const ParameterSet& parameters() const noexcept { return params_; }

    std::size_t unflat_channels() const;
    std::size_t unflat_length() const;
    std::size_t feature_width() const;
    std::size_t context_width() const { return config_.context_width(); }
    std::size_t effective_upsample() const;

    // Records a pass over cycle [S x T] with parameters bound as trainable
    // leaves; backward() accumulates into parameters().
    ForwardVars forward(Tape& tape, Var cycle, bool training, Rng* rng);
    // Same graph with parameters recorded as constants.
    ForwardVars forward(Tape& tape, Var cycle) const;

    // Inference-mode prediction of a cycle [S x T].
    DualPrediction predict(const Tensor& cycle) const;

private:
    ForwardVars build(Tape& tape, Var cycle, bool training, Rng* rng, bool trainable) const;
    void init_parameters(std::uint64_t seed);

    ModelConfig config_;
    Variant variant_;
    ParameterSet params_;
};

PrecTimeModel make_ablation(const ModelConfig& config, Variant variant, std::uint64_t seed);

// Per-window dense head: context [N x D_ctx] -> softmax -> rows repeated L times.
Var intermediate_head(Tape& tape, Var context, Var weight, Var bias, std::size_t window_length);

}  // namespace prectime
