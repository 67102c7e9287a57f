#include "prectime/ops.hpp"

#include "prectime/errors.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace prectime::ops {

namespace {

// View of a sequence tensor as [batch x channels x length].
struct SeqDims {
    std::size_t batch;
    std::size_t channels;
    std::size_t length;
};

SeqDims seq_dims(const Tensor& t, const char* op) {
    if (t.rank() == 2) return {1, t.dim(0), t.dim(1)};
    if (t.rank() == 3) return {t.dim(0), t.dim(1), t.dim(2)};
    throw ShapeError(std::string(op) + ": expected [C x L] or [B x C x L], got " + shape_string(t.shape()));
}

Shape seq_shape(const Tensor& like, std::size_t channels, std::size_t length) {
    if (like.rank() == 2) return {channels, length};
    return {like.dim(0), channels, length};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

// Range of output positions t with 0 <= t*stride + offset < length.
std::pair<std::size_t, std::size_t> valid_range(std::ptrdiff_t offset, std::size_t stride, std::size_t length,
                                                std::size_t out_length) {
    const auto s = static_cast<std::ptrdiff_t>(stride);
    const auto len = static_cast<std::ptrdiff_t>(length);
    std::ptrdiff_t lo = offset < 0 ? (-offset + s - 1) / s : 0;
    if (len - 1 - offset < 0) return {0, 0};
    std::ptrdiff_t hi = (len - 1 - offset) / s + 1;
    hi = std::min<std::ptrdiff_t>(hi, static_cast<std::ptrdiff_t>(out_length));
    if (hi < lo) hi = lo;
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

}  // namespace

std::size_t conv1d_output_length(std::size_t length, std::size_t kernel, const Conv1dOptions& opts) {
    if (opts.stride < 1 || opts.dilation < 1 || kernel < 1) {
        throw ArgumentError("conv1d: stride, dilation and kernel must be >= 1");
    }
    const std::size_t field = opts.dilation * (kernel - 1) + 1;
    if (opts.padding == Padding::same) {
        if (opts.stride != 1) throw ArgumentError("conv1d: 'same' padding requires stride 1");
        return length;
    }
    const std::size_t padded = length + 2 * opts.pad;
    if (field > padded) {
        throw ShapeError("conv1d: receptive field " + std::to_string(field) + " exceeds padded length " +
                         std::to_string(padded));
    }
    return (padded - field) / opts.stride + 1;
}

Var conv1d(Tape& tape, Var input, Var weight, Var bias, const Conv1dOptions& opts) {
    const Tensor& x = tape.value(input);
    const Tensor& w = tape.value(weight);
    const Tensor& b = tape.value(bias);
    const SeqDims d = seq_dims(x, "conv1d");
    if (w.rank() != 3 || w.dim(1) != d.channels) {
        throw ShapeError("conv1d: weight " + shape_string(w.shape()) + " does not match input " +
                         shape_string(x.shape()));
    }
    const std::size_t c_out = w.dim(0);
    const std::size_t k = w.dim(2);
    if (b.rank() != 1 || b.dim(0) != c_out) throw ShapeError("conv1d: bias must be [" + std::to_string(c_out) + "]");
    x.require_finite("conv1d input");

    const std::size_t out_len = conv1d_output_length(d.length, k, opts);
    const std::size_t pad_left =
        opts.padding == Padding::same ? opts.dilation * (k - 1) / 2 : opts.pad;
    const std::size_t stride = opts.stride;
    const std::size_t dil = opts.dilation;
    const std::size_t c_in = d.channels;
    const std::size_t len = d.length;

    Tensor out(seq_shape(x, c_out, out_len));
    const double* xp = x.data().data();
    const double* wp = w.data().data();
    double* op = out.data().data();
    for (std::size_t n = 0; n < d.batch; ++n) {
        for (std::size_t o = 0; o < c_out; ++o) {
            double* orow = op + (n * c_out + o) * out_len;
            std::fill(orow, orow + out_len, b[o]);
            for (std::size_t i = 0; i < c_in; ++i) {
                const double* xrow = xp + (n * c_in + i) * len;
                for (std::size_t j = 0; j < k; ++j) {
                    const double wv = wp[(o * c_in + i) * k + j];
                    const auto off = static_cast<std::ptrdiff_t>(j * dil) - static_cast<std::ptrdiff_t>(pad_left);
                    auto [lo, hi] = valid_range(off, stride, len, out_len);
                    if (stride == 1) {
                        const double* src = xrow + off;
                        for (std::size_t t = lo; t < hi; ++t) orow[t] += wv * src[t];
                    } else {
                        for (std::size_t t = lo; t < hi; ++t) orow[t] += wv * xrow[t * stride + off];
                    }
                }
            }
        }
    }

    return tape.record(std::move(out), {input, weight, bias},
                       [=](Tape& tp, std::size_t self) {
                           const Tensor& dy = tp.out_grad(self);
                           const Tensor& xv = tp.input_value(self, 0);
                           const Tensor& wv = tp.input_value(self, 1);
                           const bool need_x = tp.input_requires_grad(self, 0);
                           const bool need_w = tp.input_requires_grad(self, 1);
                           const bool need_b = tp.input_requires_grad(self, 2);
                           double* dx = need_x ? tp.input_grad(self, 0).data().data() : nullptr;
                           double* dw = need_w ? tp.input_grad(self, 1).data().data() : nullptr;
                           double* db = need_b ? tp.input_grad(self, 2).data().data() : nullptr;
                           const double* dyp = dy.data().data();
                           const double* xp2 = xv.data().data();
                           const double* wp2 = wv.data().data();
                           for (std::size_t n = 0; n < d.batch; ++n) {
                               for (std::size_t o = 0; o < c_out; ++o) {
                                   const double* grow = dyp + (n * c_out + o) * out_len;
                                   if (db) {
                                       double s = 0.0;
                                       for (std::size_t t = 0; t < out_len; ++t) s += grow[t];
                                       db[o] += s;
                                   }
                                   for (std::size_t i = 0; i < c_in; ++i) {
                                       const double* xrow = xp2 + (n * c_in + i) * len;
                                       double* dxrow = dx ? dx + (n * c_in + i) * len : nullptr;
                                       for (std::size_t j = 0; j < k; ++j) {
                                           const std::size_t widx = (o * c_in + i) * k + j;
                                           const auto off = static_cast<std::ptrdiff_t>(j * dil) -
                                                            static_cast<std::ptrdiff_t>(pad_left);
                                           auto [lo, hi] = valid_range(off, stride, len, out_len);
                                           if (dw) {
                                               double s = 0.0;
                                               for (std::size_t t = lo; t < hi; ++t) s += grow[t] * xrow[t * stride + off];
                                               dw[widx] += s;
                                           }
                                           if (dxrow) {
                                               const double wj = wp2[widx];
                                               for (std::size_t t = lo; t < hi; ++t) dxrow[t * stride + off] += wj * grow[t];
                                           }
                                       }
                                   }
                               }
                           }
                       });
}

Var maxpool1d(Tape& tape, Var input, std::size_t m) {
    const Tensor& x = tape.value(input);
    const SeqDims d = seq_dims(x, "maxpool1d");
    if (m < 1) throw ArgumentError("maxpool1d: filter size must be >= 1");
    if (m > d.length) {
        throw ShapeError("maxpool1d: filter size " + std::to_string(m) + " exceeds length " + std::to_string(d.length));
    }
    const std::size_t out_len = d.length / m;
    Tensor out(seq_shape(x, d.channels, out_len));
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const std::size_t rows = d.batch * d.channels;
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xrow = x.data().data() + r * d.length;
        for (std::size_t t = 0; t < out_len; ++t) {
            std::size_t best = t * m;
            for (std::size_t u = t * m + 1; u < (t + 1) * m; ++u) {
                if (xrow[u] > xrow[best]) best = u;
            }
            out[r * out_len + t] = xrow[best];
            (*argmax)[r * out_len + t] = r * d.length + best;
        }
    }
    return tape.record(std::move(out), {input}, [argmax](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[(*argmax)[i]] += dy[i];
    });
}

Var upsample_nearest(Tape& tape, Var input, std::size_t factor) {
    if (factor < 1) throw ArgumentError("upsample_nearest: factor must be >= 1");
    const Tensor& x = tape.value(input);
    const SeqDims d = seq_dims(x, "upsample_nearest");
    if (factor == 1) return input;
    const std::size_t out_len = d.length * factor;
    Tensor out(seq_shape(x, d.channels, out_len));
    const std::size_t rows = d.batch * d.channels;
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t t = 0; t < out_len; ++t) out[r * out_len + t] = x[r * d.length + t / factor];
    }
    return tape.record(std::move(out), {input}, [=](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t t = 0; t < out_len; ++t) dx[r * d.length + t / factor] += dy[r * out_len + t];
        }
    });
}

Var dense(Tape& tape, Var input, Var weight, Var bias) {
    const Tensor& x = tape.value(input);
    const Tensor& w = tape.value(weight);
    const Tensor& b = tape.value(bias);
    if (w.rank() != 2) throw ShapeError("dense: weight must be [D_in x D_out]");
    const std::size_t d_in = w.dim(0);
    const std::size_t d_out = w.dim(1);
    if (x.shape().back() != d_in) {
        throw ShapeError("dense: input " + shape_string(x.shape()) + " does not end in " + std::to_string(d_in));
    }
    if (b.rank() != 1 || b.dim(0) != d_out) throw ShapeError("dense: bias must be [" + std::to_string(d_out) + "]");
    const std::size_t rows = x.size() / d_in;
    Shape out_shape = x.shape();
    out_shape.back() = d_out;
    Tensor out(out_shape);
    const double* xp = x.data().data();
    const double* wp = w.data().data();
    double* op = out.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        double* orow = op + r * d_out;
        std::copy(b.data().begin(), b.data().end(), orow);
        for (std::size_t i = 0; i < d_in; ++i) {
            const double xv = xp[r * d_in + i];
            if (xv == 0.0) continue;
            const double* wrow = wp + i * d_out;
            for (std::size_t o = 0; o < d_out; ++o) orow[o] += xv * wrow[o];
        }
    }
    return tape.record(std::move(out), {input, weight, bias}, [=](Tape& tp, std::size_t self) {
        const double* dy = tp.out_grad(self).data().data();
        const double* xv = tp.input_value(self, 0).data().data();
        const double* wv = tp.input_value(self, 1).data().data();
        if (tp.input_requires_grad(self, 0)) {
            double* dx = tp.input_grad(self, 0).data().data();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t i = 0; i < d_in; ++i) {
                    const double* wrow = wv + i * d_out;
                    const double* grow = dy + r * d_out;
                    double s = 0.0;
                    for (std::size_t o = 0; o < d_out; ++o) s += grow[o] * wrow[o];
                    dx[r * d_in + i] += s;
                }
            }
        }
        if (tp.input_requires_grad(self, 1)) {
            double* dw = tp.input_grad(self, 1).data().data();
            for (std::size_t r = 0; r < rows; ++r) {
                const double* grow = dy + r * d_out;
                for (std::size_t i = 0; i < d_in; ++i) {
                    const double xi = xv[r * d_in + i];
                    if (xi == 0.0) continue;
                    double* dwrow = dw + i * d_out;
                    for (std::size_t o = 0; o < d_out; ++o) dwrow[o] += xi * grow[o];
                }
            }
        }
        if (tp.input_requires_grad(self, 2)) {
            double* db = tp.input_grad(self, 2).data().data();
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t o = 0; o < d_out; ++o) db[o] += dy[r * d_out + o];
            }
        }
    });
}

Var dropout(Tape& tape, Var input, double p, Rng* rng, bool training) {
    if (!(p >= 0.0) || p >= 1.0) throw ArgumentError("dropout: probability must be in [0, 1)");
    if (!training || p == 0.0) return input;
    if (rng == nullptr) throw ArgumentError("dropout: training mode needs a generator");
    const Tensor& x = tape.value(input);
    auto mask = std::make_shared<std::vector<double>>(x.size());
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        (*mask)[i] = rng->uniform() < p ? 0.0 : keep_scale;
        out[i] = x[i] * (*mask)[i];
    }
    return tape.record(std::move(out), {input}, [mask](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (*mask)[i];
    });
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LstmCache {
    std::vector<double> gates;  // [N x 4H] post-activation i, f, g, o
    std::vector<double> cell;   // [N x H]
    std::vector<double> cell_tanh;
    std::vector<std::size_t> order;  // processing order of time indices
};

}  // namespace

Var lstm(Tape& tape, Var sequence, const LstmWeights& weights, bool reverse) {
    const Tensor& x = tape.value(sequence);
    const Tensor& wx = tape.value(weights.wx);
    const Tensor& wh = tape.value(weights.wh);
    const Tensor& b = tape.value(weights.b);
    if (x.rank() != 2) throw ShapeError("lstm: sequence must be [N x D_in], got " + shape_string(x.shape()));
    const std::size_t steps = x.dim(0);
    const std::size_t d_in = x.dim(1);
    if (wh.rank() != 2 || wh.dim(1) % 4 != 0 || wh.dim(0) * 4 != wh.dim(1)) {
        throw ShapeError("lstm: recurrent weight must be [H x 4H], got " + shape_string(wh.shape()));
    }
    const std::size_t h = wh.dim(0);
    const std::size_t g4 = 4 * h;
    if (wx.rank() != 2 || wx.dim(0) != d_in || wx.dim(1) != g4) {
        throw ShapeError("lstm: input weight " + shape_string(wx.shape()) + " does not match input width " +
                         std::to_string(d_in) + " and hidden " + std::to_string(h));
    }
    if (b.rank() != 1 || b.dim(0) != g4) throw ShapeError("lstm: bias must be [4H]");
    x.require_finite("lstm input");

    auto cache = std::make_shared<LstmCache>();
    cache->gates.assign(steps * g4, 0.0);
    cache->cell.assign(steps * h, 0.0);
    cache->cell_tanh.assign(steps * h, 0.0);
    cache->order.resize(steps);
    for (std::size_t s = 0; s < steps; ++s) cache->order[s] = reverse ? steps - 1 - s : s;

    Tensor out({steps, h});
    std::vector<double> z(g4);
    const double* wxp = wx.data().data();
    const double* whp = wh.data().data();
    for (std::size_t s = 0; s < steps; ++s) {
        const std::size_t t = cache->order[s];
        std::copy(b.data().begin(), b.data().end(), z.begin());
        for (std::size_t i = 0; i < d_in; ++i) {
            const double xv = x[t * d_in + i];
            if (xv == 0.0) continue;
            const double* row = wxp + i * g4;
            for (std::size_t q = 0; q < g4; ++q) z[q] += xv * row[q];
        }
        if (s > 0) {
            const std::size_t tp = cache->order[s - 1];
            for (std::size_t i = 0; i < h; ++i) {
                const double hv = out[tp * h + i];
                const double* row = whp + i * g4;
                for (std::size_t q = 0; q < g4; ++q) z[q] += hv * row[q];
            }
        }
        double* gates = cache->gates.data() + t * g4;
        for (std::size_t q = 0; q < h; ++q) {
            const double ig = sigmoid(z[q]);
            const double fg = sigmoid(z[h + q]);
            const double cg = std::tanh(z[2 * h + q]);
            const double og = sigmoid(z[3 * h + q]);
            gates[q] = ig;
            gates[h + q] = fg;
            gates[2 * h + q] = cg;
            gates[3 * h + q] = og;
            const double c_prev = s > 0 ? cache->cell[cache->order[s - 1] * h + q] : 0.0;
            const double c = fg * c_prev + ig * cg;
            const double ct = std::tanh(c);
            cache->cell[t * h + q] = c;
            cache->cell_tanh[t * h + q] = ct;
            out[t * h + q] = og * ct;
        }
    }

    return tape.record(
        std::move(out), {sequence, weights.wx, weights.wh, weights.b},
        [cache, steps, d_in, h, g4](Tape& tp, std::size_t self) {
            const Tensor& dy = tp.out_grad(self);
            const Tensor& xv = tp.input_value(self, 0);
            const Tensor& wxv = tp.input_value(self, 1);
            const Tensor& whv = tp.input_value(self, 2);
            std::vector<double> dz(steps * g4, 0.0);
            std::vector<double> dh_next(h, 0.0);
            std::vector<double> dc_next(h, 0.0);
            const double* whp2 = whv.data().data();
            for (std::size_t s = steps; s-- > 0;) {
                const std::size_t t = cache->order[s];
                const double* gates = cache->gates.data() + t * g4;
                double* dzt = dz.data() + t * g4;
                for (std::size_t q = 0; q < h; ++q) {
                    const double ig = gates[q], fg = gates[h + q], cg = gates[2 * h + q], og = gates[3 * h + q];
                    const double ct = cache->cell_tanh[t * h + q];
                    const double c_prev = s > 0 ? cache->cell[cache->order[s - 1] * h + q] : 0.0;
                    const double dh = dy[t * h + q] + dh_next[q];
                    const double d_o = dh * ct;
                    const double dc = dh * og * (1.0 - ct * ct) + dc_next[q];
                    const double di = dc * cg;
                    const double dg = dc * ig;
                    const double df = dc * c_prev;
                    dc_next[q] = dc * fg;
                    dzt[q] = di * ig * (1.0 - ig);
                    dzt[h + q] = df * fg * (1.0 - fg);
                    dzt[2 * h + q] = dg * (1.0 - cg * cg);
                    dzt[3 * h + q] = d_o * og * (1.0 - og);
                }
                for (std::size_t i = 0; i < h; ++i) {
                    const double* row = whp2 + i * g4;
                    double acc = 0.0;
                    for (std::size_t q = 0; q < g4; ++q) acc += row[q] * dzt[q];
                    dh_next[i] = acc;
                }
            }
            if (tp.input_requires_grad(self, 2)) {
                Tensor& dwh = tp.input_grad(self, 2);
                for (std::size_t s = 1; s < steps; ++s) {
                    const std::size_t t = cache->order[s];
                    const std::size_t tprev = cache->order[s - 1];
                    const double* dzt = dz.data() + t * g4;
                    for (std::size_t i = 0; i < h; ++i) {
                        const double* gprev = cache->gates.data() + tprev * g4;
                        const double hprev = gprev[3 * h + i] * cache->cell_tanh[tprev * h + i];
                        if (hprev == 0.0) continue;
                        double* row = dwh.data().data() + i * g4;
                        for (std::size_t q = 0; q < g4; ++q) row[q] += hprev * dzt[q];
                    }
                }
            }
            if (tp.input_requires_grad(self, 1)) {
                Tensor& dwx = tp.input_grad(self, 1);
                for (std::size_t t = 0; t < steps; ++t) {
                    const double* dzt = dz.data() + t * g4;
                    for (std::size_t i = 0; i < d_in; ++i) {
                        const double xi = xv[t * d_in + i];
                        if (xi == 0.0) continue;
                        double* row = dwx.data().data() + i * g4;
                        for (std::size_t q = 0; q < g4; ++q) row[q] += xi * dzt[q];
                    }
                }
            }
            if (tp.input_requires_grad(self, 3)) {
                Tensor& db = tp.input_grad(self, 3);
                for (std::size_t t = 0; t < steps; ++t) {
                    for (std::size_t q = 0; q < g4; ++q) db[q] += dz[t * g4 + q];
                }
            }
            if (tp.input_requires_grad(self, 0)) {
                Tensor& dx = tp.input_grad(self, 0);
                const double* wxp2 = wxv.data().data();
                for (std::size_t t = 0; t < steps; ++t) {
                    const double* dzt = dz.data() + t * g4;
                    for (std::size_t i = 0; i < d_in; ++i) {
                        const double* row = wxp2 + i * g4;
                        double acc = 0.0;
                        for (std::size_t q = 0; q < g4; ++q) acc += row[q] * dzt[q];
                        dx[t * d_in + i] += acc;
                    }
                }
            }
        });
}

Var bilstm(Tape& tape, Var sequence, const LstmWeights& forward, const LstmWeights& backward, Merge merge) {
    Var fwd = lstm(tape, sequence, forward, false);
    Var bwd = lstm(tape, sequence, backward, true);
    if (merge == Merge::sum) return add(tape, fwd, bwd);
    return concat(tape, fwd, bwd, 1);
}

Var softmax(Tape& tape, Var logits) {
    const Tensor& x = tape.value(logits);
    x.require_finite("softmax logits");
    const std::size_t c = x.shape().back();
    const std::size_t rows = x.size() / c;
    Tensor out(x.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data().data() + r * c;
        double* yr = out.data().data() + r * c;
        const double mx = *std::max_element(xr, xr + c);
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            total += yr[j];
        }
        for (std::size_t j = 0; j < c; ++j) yr[j] /= total;
    }
    auto y = std::make_shared<Tensor>(out);
    return tape.record(std::move(out), {logits}, [y, rows, c](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += dy[r * c + j] * (*y)[r * c + j];
            for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += (*y)[r * c + j] * (dy[r * c + j] - dot);
        }
    });
}

Var cross_entropy(Tape& tape, Var probs, const Tensor& target, std::span<const double> mask) {
    const Tensor& p = tape.value(probs);
    require_same_shape(p, target, "cross_entropy");
    const std::size_t c = p.shape().back();
    const std::size_t rows = p.size() / c;
    if (!mask.empty() && mask.size() != rows) {
        throw ShapeError("cross_entropy: mask has " + std::to_string(mask.size()) + " entries for " +
                         std::to_string(rows) + " rows");
    }
    auto weights = std::make_shared<std::vector<double>>(rows, 1.0);
    if (!mask.empty()) std::copy(mask.begin(), mask.end(), weights->begin());
    double total_weight = 0.0;
    for (double w : *weights) total_weight += w;
    if (!(total_weight > 0.0)) throw ArgumentError("cross_entropy: mask selects no rows");

    double loss = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        const double w = (*weights)[r];
        if (w == 0.0) continue;
        double row = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double y = target[r * c + j];
            if (y != 0.0) row -= y * std::log(std::max(p[r * c + j], kLogClip));
        }
        loss += w * row;
    }
    loss /= total_weight;
    auto tgt = std::make_shared<Tensor>(target);
    return tape.record(Tensor::scalar(loss), {probs}, [tgt, weights, total_weight, rows, c](Tape& tp, std::size_t self) {
        const double g = tp.out_grad(self)[0] / total_weight;
        const Tensor& pv = tp.input_value(self, 0);
        Tensor& dp = tp.input_grad(self, 0);
        for (std::size_t r = 0; r < rows; ++r) {
            const double w = (*weights)[r];
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < c; ++j) {
                const double y = (*tgt)[r * c + j];
                const double pj = pv[r * c + j];
                if (y != 0.0 && pj >= kLogClip) dp[r * c + j] -= g * w * y / pj;
            }
        }
    });
}

Var relu(Tape& tape, Var x) {
    const Tensor& v = tape.value(x);
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : 0.0;
    return tape.record(std::move(out), {x}, [](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        const Tensor& xv = tp.input_value(self, 0);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) {
            if (xv[i] > 0.0) dx[i] += dy[i];
        }
    });
}

Var tanh(Tape& tape, Var x) {
    const Tensor& v = tape.value(x);
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::tanh(v[i]);
    auto y = std::make_shared<Tensor>(out);
    return tape.record(std::move(out), {x}, [y](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * (1.0 - (*y)[i] * (*y)[i]);
    });
}

Var add(Tape& tape, Var a, Var b) {
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    require_same_shape(av, bv, "add");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return tape.record(std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        for (std::size_t k = 0; k < 2; ++k) {
            if (!tp.input_requires_grad(self, k)) continue;
            Tensor& dx = tp.input_grad(self, k);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
    });
}

Var mul(Tape& tape, Var a, Var b) {
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    require_same_shape(av, bv, "mul");
    Tensor out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return tape.record(std::move(out), {a, b}, [](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        for (std::size_t k = 0; k < 2; ++k) {
            if (!tp.input_requires_grad(self, k)) continue;
            const Tensor& other = tp.input_value(self, 1 - k);
            Tensor& dx = tp.input_grad(self, k);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * other[i];
        }
    });
}

Var scale(Tape& tape, Var x, double factor) {
    const Tensor& v = tape.value(x);
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factor;
    return tape.record(std::move(out), {x}, [factor](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * factor;
    });
}

Var sum(Tape& tape, Var x) {
    const Tensor& v = tape.value(x);
    double s = 0.0;
    for (double e : v.data()) s += e;
    return tape.record(Tensor::scalar(s), {x}, [](Tape& tp, std::size_t self) {
        const double g = tp.out_grad(self)[0];
        Tensor& dx = tp.input_grad(self, 0);
        for (auto& e : dx.data()) e += g;
    });
}

Var concat(Tape& tape, Var a, Var b, std::size_t axis) {
    const Tensor& av = tape.value(a);
    const Tensor& bv = tape.value(b);
    if (av.rank() != bv.rank() || axis >= av.rank()) {
        throw ShapeError("concat: incompatible " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
    }
    for (std::size_t i = 0; i < av.rank(); ++i) {
        if (i != axis && av.dim(i) != bv.dim(i)) {
            throw ShapeError("concat: incompatible " + shape_string(av.shape()) + " and " + shape_string(bv.shape()));
        }
    }
    std::size_t outer = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= av.dim(i);
    const std::size_t a_block = av.size() / outer;
    const std::size_t b_block = bv.size() / outer;
    Shape shape = av.shape();
    shape[axis] += bv.dim(axis);
    Tensor out(shape);
    for (std::size_t o = 0; o < outer; ++o) {
        double* dst = out.data().data() + o * (a_block + b_block);
        std::copy_n(av.data().data() + o * a_block, a_block, dst);
        std::copy_n(bv.data().data() + o * b_block, b_block, dst + a_block);
    }
    return tape.record(std::move(out), {a, b}, [outer, a_block, b_block](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        const std::size_t block[2] = {a_block, b_block};
        for (std::size_t k = 0; k < 2; ++k) {
            if (!tp.input_requires_grad(self, k)) continue;
            Tensor& dx = tp.input_grad(self, k);
            const std::size_t skip = k == 0 ? 0 : a_block;
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = dy.data().data() + o * (a_block + b_block) + skip;
                double* dst = dx.data().data() + o * block[k];
                for (std::size_t i = 0; i < block[k]; ++i) dst[i] += src[i];
            }
        }
    });
}

Var reshape(Tape& tape, Var x, Shape shape) {
    Tensor out = tape.value(x).reshaped(std::move(shape));
    return tape.record(std::move(out), {x}, [](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
}

Var broadcast_time(Tape& tape, Var x, std::size_t length) {
    const Tensor& v = tape.value(x);
    if (v.rank() != 2) throw ShapeError("broadcast_time: expected [N x D], got " + shape_string(v.shape()));
    if (length < 1) throw ArgumentError("broadcast_time: length must be >= 1");
    Tensor out({v.dim(0), v.dim(1), length});
    for (std::size_t r = 0; r < v.size(); ++r) std::fill_n(out.data().data() + r * length, length, v[r]);
    return tape.record(std::move(out), {x}, [length](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t r = 0; r < dx.size(); ++r) {
            double s = 0.0;
            for (std::size_t t = 0; t < length; ++t) s += dy[r * length + t];
            dx[r] += s;
        }
    });
}

Var swap_last_axes(Tape& tape, Var x) {
    const Tensor& v = tape.value(x);
    if (v.rank() != 3) throw ShapeError("swap_last_axes: expected rank 3, got " + shape_string(v.shape()));
    const std::size_t a = v.dim(0), b = v.dim(1), c = v.dim(2);
    Tensor out({a, c, b});
    for (std::size_t i = 0; i < a; ++i)
        for (std::size_t j = 0; j < b; ++j)
            for (std::size_t k = 0; k < c; ++k) out[(i * c + k) * b + j] = v[(i * b + j) * c + k];
    return tape.record(std::move(out), {x}, [a, b, c](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t i = 0; i < a; ++i)
            for (std::size_t j = 0; j < b; ++j)
                for (std::size_t k = 0; k < c; ++k) dx[(i * b + j) * c + k] += dy[(i * c + k) * b + j];
    });
}

Var repeat_rows(Tape& tape, Var x, std::size_t times) {
    const Tensor& v = tape.value(x);
    if (v.rank() != 2) throw ShapeError("repeat_rows: expected [N x C], got " + shape_string(v.shape()));
    if (times < 1) throw ArgumentError("repeat_rows: factor must be >= 1");
    const std::size_t n = v.dim(0), c = v.dim(1);
    Tensor out({n * times, c});
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t t = 0; t < times; ++t)
            std::copy_n(v.data().data() + r * c, c, out.data().data() + (r * times + t) * c);
    return tape.record(std::move(out), {x}, [n, c, times](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t t = 0; t < times; ++t)
                for (std::size_t j = 0; j < c; ++j) dx[r * c + j] += dy[(r * times + t) * c + j];
    });
}

Var split_windows(Tape& tape, Var cycle, std::size_t length) {
    const Tensor& v = tape.value(cycle);
    if (v.rank() != 2) throw ShapeError("split_windows: expected [S x T], got " + shape_string(v.shape()));
    if (length < 1) throw ArgumentError("split_windows: window length must be >= 1");
    const std::size_t s = v.dim(0), total = v.dim(1);
    if (total % length != 0) {
        throw ShapeError("split_windows: length " + std::to_string(total) + " is not a multiple of window length " +
                         std::to_string(length) + "; pad the cycle first");
    }
    const std::size_t n = total / length;
    Tensor out({n, s, length});
    for (std::size_t w = 0; w < n; ++w)
        for (std::size_t ch = 0; ch < s; ++ch)
            std::copy_n(v.data().data() + ch * total + w * length, length,
                        out.data().data() + (w * s + ch) * length);
    return tape.record(std::move(out), {cycle}, [n, s, length, total](Tape& tp, std::size_t self) {
        const Tensor& dy = tp.out_grad(self);
        Tensor& dx = tp.input_grad(self, 0);
        for (std::size_t w = 0; w < n; ++w)
            for (std::size_t ch = 0; ch < s; ++ch)
                for (std::size_t t = 0; t < length; ++t)
                    dx[ch * total + w * length + t] += dy[(w * s + ch) * length + t];
    });
}

}  // namespace prectime::ops
