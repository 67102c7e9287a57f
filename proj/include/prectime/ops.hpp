#pragma once

#include "prectime/autodiff.hpp"
#include "prectime/rng.hpp"
#include "prectime/tensor.hpp"

#include <cstddef>
#include <span>

// Differentiable primitives recorded on a Tape. Sequence-shaped ops take
// either [C x L] or a batch [B x C x L]; time is always the trailing axis.
namespace prectime::ops {

enum class Padding {
    same,   // zero padding that keeps the length (stride 1 only)
    zeros,  // explicit symmetric zero padding of `pad` steps (0 = valid)
};

struct Conv1dOptions {
    std::size_t stride = 1;
    std::size_t dilation = 1;
    Padding padding = Padding::same;
    std::size_t pad = 0;
};

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, const Conv1dOptions& opts);

// weight [C_out x C_in x k], bias [C_out].
Var conv1d(Tape& tape, Var input, Var weight, Var bias, const Conv1dOptions& opts = {});

// Disjoint windows of length m; a trailing remainder shorter than m is dropped.
// Ties route the gradient to the first maximal element.
Var maxpool1d(Tape& tape, Var input, std::size_t m);

Var upsample_nearest(Tape& tape, Var input, std::size_t factor);

// Affine map along the trailing axis: weight [D_in x D_out], bias [D_out].
Var dense(Tape& tape, Var input, Var weight, Var bias);

// Inverted dropout. Identity when !training or p == 0; `rng` is only read
// when a mask is drawn.
Var dropout(Tape& tape, Var input, double p, Rng* rng, bool training);

struct LstmWeights {
    Var wx;  // [D_in x 4H], gate blocks ordered input, forget, candidate, output
    Var wh;  // [H x 4H]
    Var b;   // [4H]
};

enum class Merge { concat, sum };

// One LSTM direction over sequence [N x D_in] -> [N x H]. A reverse pass
// consumes the sequence back to front and writes h_t at its original index.
Var lstm(Tape& tape, Var sequence, const LstmWeights& weights, bool reverse);

Var bilstm(Tape& tape, Var sequence, const LstmWeights& forward, const LstmWeights& backward, Merge merge);

// Numerically stable softmax along the trailing axis.
Var softmax(Tape& tape, Var logits);

inline constexpr double kLogClip = 1e-12;

// Weighted mean over rows of -sum_c target*log(max(p, kLogClip)). An empty
// `mask` weights every row 1; rows with weight 0 are excluded entirely.
Var cross_entropy(Tape& tape, Var probs, const Tensor& target, std::span<const double> mask = {});

Var relu(Tape& tape, Var x);
Var tanh(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
Var mul(Tape& tape, Var a, Var b);
Var scale(Tape& tape, Var x, double factor);
Var sum(Tape& tape, Var x);

Var concat(Tape& tape, Var a, Var b, std::size_t axis);
Var reshape(Tape& tape, Var x, Shape shape);

// [N x D] -> [N x D x length], each value repeated along the new time axis.
Var broadcast_time(Tape& tape, Var x, std::size_t length);
// [A x B x C] -> [A x C x B].
Var swap_last_axes(Tape& tape, Var x);
// [N x C] -> [N*times x C], each row repeated `times` times consecutively.
Var repeat_rows(Tape& tape, Var x, std::size_t times);
// [S x T] -> [N x S x L] with window n holding timesteps [n*L, (n+1)*L).
Var split_windows(Tape& tape, Var cycle, std::size_t length);

}  // namespace prectime::ops
