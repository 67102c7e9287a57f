#include <doctest.h>

#include "oracles.hpp"

#include "prectime/errors.hpp"
#include "prectime/ops.hpp"

#include <cmath>
#include <numeric>

using namespace prectime;
using prectime::testing::oracle_conv1d;

namespace {

Tensor eval(const std::function<Var(Tape&)>& f) {
    Tape tape;
    return tape.value(f(tape));
}

Tensor row(std::initializer_list<double> v) { return Tensor({1, v.size()}, std::vector<double>(v)); }

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("conv1d identity kernel") {
    Tensor out = eval([](Tape& t) {
        return ops::conv1d(t, t.constant(row({1, 2, 3, 4})), t.constant(Tensor({1, 1, 1}, 1.0)),
                           t.constant(Tensor({1}, 0.0)));
    });
    CHECK(out == row({1, 2, 3, 4}));
}

TEST_CASE("conv1d valid mode and dilation") {
    ops::Conv1dOptions valid;
    valid.padding = ops::Padding::zeros;
    Tensor out = eval([&](Tape& t) {
        return ops::conv1d(t, t.constant(row({1, 2, 3, 4})), t.constant(Tensor({1, 1, 2}, 1.0)),
                           t.constant(Tensor({1}, 0.0)), valid);
    });
    CHECK(out == row({3, 5, 7}));
    valid.dilation = 2;
    out = eval([&](Tape& t) {
        return ops::conv1d(t, t.constant(row({1, 2, 3, 4, 5})), t.constant(Tensor({1, 1, 2}, 1.0)),
                           t.constant(Tensor({1}, 0.0)), valid);
    });
    CHECK(out == row({4, 6, 8}));
}

TEST_CASE("conv1d matches direct summation") {
    Rng rng(11);
    for (int n = 0; n < 50; ++n) {
        const std::size_t c_in = 1 + n % 3, c_out = 1 + n % 2, k = 1 + n % 4, d = 1 + n % 3;
        const std::size_t len = d * (k - 1) + 1 + static_cast<std::size_t>(n % 7);
        Tensor x = random_tensor(rng, {c_in, len}), w = random_tensor(rng, {c_out, c_in, k}),
               b = random_tensor(rng, {c_out});
        ops::Conv1dOptions opts;
        opts.dilation = d;
        opts.padding = n % 2 ? ops::Padding::same : ops::Padding::zeros;
        opts.stride = opts.padding == ops::Padding::zeros ? 1 + n % 2 : 1;
        opts.pad = opts.padding == ops::Padding::zeros ? static_cast<std::size_t>(n % 3) : 0;
        const std::size_t out_len = ops::conv1d_output_length(len, k, opts);
        const std::size_t pad_left = opts.padding == ops::Padding::same ? d * (k - 1) / 2 : opts.pad;
        Tensor got = eval([&](Tape& t) { return ops::conv1d(t, t.constant(x), t.constant(w), t.constant(b), opts); });
        Tensor want = oracle_conv1d(x, w, b, opts.stride, d, pad_left, out_len);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv1d output length formula") {
    ops::Conv1dOptions o;
    o.padding = ops::Padding::zeros;
    o.pad = 2;
    o.stride = 3;
    o.dilation = 2;
    // floor((10 + 4 - 2*(3-1) - 1)/3) + 1
    CHECK(ops::conv1d_output_length(10, 3, o) == 4);
}

TEST_CASE("conv1d same mode preserves length across the configuration grid") {
    for (std::size_t len = 1; len <= 256; ++len) {
        for (std::size_t k : {1, 3, 5, 7}) {
            for (std::size_t d : {1, 2, 4, 8}) {
                ops::Conv1dOptions o;
                o.dilation = d;
                CHECK(ops::conv1d_output_length(len, k, o) == len);
            }
        }
    }
    // A full pass for a sample of the grid.
    Rng rng(2);
    for (std::size_t len : {1, 7, 64, 256}) {
        for (std::size_t k : {1, 3, 5, 7}) {
            ops::Conv1dOptions o;
            o.dilation = 8;
            Tensor out = eval([&](Tape& t) {
                return ops::conv1d(t, t.constant(random_tensor(rng, {2, len})),
                                   t.constant(random_tensor(rng, {3, 2, k})), t.constant(Tensor({3}, 0.0)), o);
            });
            CHECK(out.dim(1) == len);
        }
    }
}

TEST_CASE("conv1d errors") {
    ops::Conv1dOptions valid;
    valid.padding = ops::Padding::zeros;
    Tape t;
    Var x = t.constant(row({1, 2}));
    CHECK_THROWS_AS(ops::conv1d(t, x, t.constant(Tensor({1, 1, 3}, 1.0)), t.constant(Tensor({1})), valid), ShapeError);
    ops::Conv1dOptions strided;
    strided.stride = 2;
    CHECK_THROWS_AS(ops::conv1d(t, x, t.constant(Tensor({1, 1, 1}, 1.0)), t.constant(Tensor({1})), strided),
                    ArgumentError);
    Var bad = t.constant(row({1, std::nan("")}));
    CHECK_THROWS_AS(ops::conv1d(t, bad, t.constant(Tensor({1, 1, 1}, 1.0)), t.constant(Tensor({1}))), NumericError);
    CHECK_THROWS_AS(ops::conv1d(t, x, t.constant(Tensor({1, 2, 1}, 1.0)), t.constant(Tensor({1}))), ShapeError);
}

TEST_CASE("maxpool1d examples") {
    CHECK(eval([](Tape& t) { return ops::maxpool1d(t, t.constant(row({5, 5, 5, 5})), 2); }) == row({5, 5}));
    CHECK(eval([](Tape& t) { return ops::maxpool1d(t, t.constant(row({1, 3, 2, 5})), 2); }) == row({3, 5}));
    Rng rng(1);
    Tensor x = random_tensor(rng, {3, 7});
    CHECK(eval([&](Tape& t) { return ops::maxpool1d(t, t.constant(x), 1); }) == x);
    CHECK(eval([](Tape& t) { return ops::maxpool1d(t, t.constant(row({1, 2, 3, 4, 9})), 2); }) == row({2, 4}));
    Tape t;
    CHECK_THROWS_AS(ops::maxpool1d(t, t.constant(row({1, 2})), 3), ShapeError);
}

TEST_CASE("maxpool1d routes tied gradients to the first maximum") {
    Tape t;
    Var x = t.variable(row({2, 2, 1, 7}));
    t.backward(ops::sum(t, ops::maxpool1d(t, x, 2)));
    CHECK(t.grad(x) == row({1, 0, 0, 1}));
}

TEST_CASE("upsample_nearest examples") {
    CHECK(eval([](Tape& t) { return ops::upsample_nearest(t, t.constant(row({1, 2})), 3); }) ==
          row({1, 1, 1, 2, 2, 2}));
    Rng rng(4);
    Tensor x = random_tensor(rng, {2, 5});
    CHECK(eval([&](Tape& t) { return ops::upsample_nearest(t, t.constant(x), 1); }) == x);
    Tape t;
    CHECK_THROWS_AS(ops::upsample_nearest(t, t.constant(x), 0), ArgumentError);
}

TEST_CASE("upsample gradient sums the repeated adjoints") {
    Tape t;
    Var x = t.variable(row({1, 2}));
    Var y = ops::upsample_nearest(t, x, 3);
    t.backward(ops::sum(t, ops::mul(t, y, t.constant(row({1, 2, 3, 4, 5, 6})))));
    CHECK(t.grad(x) == row({6, 15}));
}

TEST_CASE("maxpool after upsample is the identity on block-constant input") {
    Rng rng(9);
    for (std::size_t m = 1; m <= 5; ++m) {
        Tensor x = random_tensor(rng, {3, 6});
        Tensor y = eval([&](Tape& t) { return ops::maxpool1d(t, ops::upsample_nearest(t, t.constant(x), m), m); });
        CHECK(y == x);
    }
}

TEST_CASE("dense examples") {
    Tensor out = eval([](Tape& t) {
        return ops::dense(t, t.constant(Tensor::vector({1, 2})), t.constant(Tensor::matrix({{1, 0}, {0, 2}})),
                          t.constant(Tensor::vector({1, 1})));
    });
    CHECK(out == Tensor::vector({2, 5}));
    Rng rng(3);
    Tensor x = random_tensor(rng, {2, 4, 3});
    Tensor eye({3, 3}, 0.0);
    for (std::size_t i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
    CHECK(eval([&](Tape& t) { return ops::dense(t, t.constant(x), t.constant(eye), t.constant(Tensor({3}, 0.0))); }) ==
          x);
    Tape t;
    CHECK_THROWS_AS(ops::dense(t, t.constant(x), t.constant(Tensor({2, 3})), t.constant(Tensor({3}))), ShapeError);
}

TEST_CASE("dropout modes") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {4, 10});
    CHECK(eval([&](Tape& t) { return ops::dropout(t, t.constant(x), 0.0, &rng, true); }) == x);
    CHECK(eval([&](Tape& t) { return ops::dropout(t, t.constant(x), 0.7, &rng, false); }) == x);
    Tape t;
    CHECK_THROWS_AS(ops::dropout(t, t.constant(x), 1.0, &rng, true), ArgumentError);
    CHECK_THROWS_AS(ops::dropout(t, t.constant(x), -0.1, &rng, true), ArgumentError);
}

TEST_CASE("inverted dropout keeps the mean") {
    Rng rng(123);
    Tensor ones({1000000}, 1.0);
    Tensor out = eval([&](Tape& t) { return ops::dropout(t, t.constant(ones), 0.5, &rng, true); });
    const double mean = std::accumulate(out.data().begin(), out.data().end(), 0.0) / 1e6;
    CHECK(mean >= 0.99);
    CHECK(mean <= 1.01);
    for (double v : out.data()) CHECK((v == 0.0 || v == 2.0));
}

TEST_CASE("dropout masks are reproducible from the seed") {
    Tensor x({50}, 1.0);
    Rng a(77), b(77);
    CHECK(eval([&](Tape& t) { return ops::dropout(t, t.constant(x), 0.3, &a, true); }) ==
          eval([&](Tape& t) { return ops::dropout(t, t.constant(x), 0.3, &b, true); }));
}

TEST_CASE("lstm with zero weights stays at zero") {
    Tape t;
    Rng rng(8);
    Var seq = t.constant(random_tensor(rng, {6, 4}));
    ops::LstmWeights w{t.constant(Tensor({4, 12}, 0.0)), t.constant(Tensor({3, 12}, 0.0)),
                       t.constant(Tensor({12}, 0.0))};
    Tensor out = t.value(ops::bilstm(t, seq, w, w, ops::Merge::concat));
    CHECK(out.shape() == Shape{6, 6});
    for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("lstm single step matches the gate equations") {
    // D = 2, H = 2, one timestep, so h_prev = c_prev = 0 and wh plays no role.
    const Tensor x = Tensor::matrix({{0.5, -1.0}});
    Tensor wx({2, 8});
    Tensor b({8});
    for (std::size_t i = 0; i < wx.size(); ++i) wx[i] = 0.1 * static_cast<double>(i) - 0.7;
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.05 * static_cast<double>(i) - 0.2;
    Tensor wh({2, 8}, 0.3);
    Tape t;
    Tensor h = t.value(ops::lstm(t, t.constant(x), {t.constant(wx), t.constant(wh), t.constant(b)}, false));
    auto sigmoid = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    for (std::size_t j = 0; j < 2; ++j) {
        auto pre = [&](std::size_t gate) {
            const std::size_t col = gate * 2 + j;
            return x[0] * wx.at(0, col) + x[1] * wx.at(1, col) + b[col];
        };
        const double i = sigmoid(pre(0)), g = std::tanh(pre(2)), o = sigmoid(pre(3));
        const double c = i * g;  // forget gate multiplies c_prev = 0
        CHECK(h.at(0, j) == doctest::Approx(o * std::tanh(c)).epsilon(1e-14));
    }
}

TEST_CASE("reverse lstm writes outputs at original indices") {
    Rng rng(21);
    Tensor seq = random_tensor(rng, {5, 2});
    Tensor wx = random_tensor(rng, {2, 12}), wh = random_tensor(rng, {3, 12}), b = random_tensor(rng, {12});
    Tensor flipped({5, 2});
    for (std::size_t n = 0; n < 5; ++n) {
        for (std::size_t d = 0; d < 2; ++d) flipped.at(4 - n, d) = seq.at(n, d);
    }
    Tape t;
    ops::LstmWeights w{t.constant(wx), t.constant(wh), t.constant(b)};
    Tensor rev = t.value(ops::lstm(t, t.constant(seq), w, true));
    Tensor fwd = t.value(ops::lstm(t, t.constant(flipped), w, false));
    for (std::size_t n = 0; n < 5; ++n) {
        for (std::size_t j = 0; j < 3; ++j) CHECK(rev.at(n, j) == fwd.at(4 - n, j));
    }
}

TEST_CASE("bilstm merge widths") {
    Rng rng(6);
    Tape t;
    Var seq = t.constant(random_tensor(rng, {3, 4}));
    ops::LstmWeights f{t.constant(random_tensor(rng, {4, 20})), t.constant(random_tensor(rng, {5, 20})),
                       t.constant(random_tensor(rng, {20}))};
    ops::LstmWeights b{t.constant(random_tensor(rng, {4, 20})), t.constant(random_tensor(rng, {5, 20})),
                       t.constant(random_tensor(rng, {20}))};
    Tensor cat = t.value(ops::bilstm(t, seq, f, b, ops::Merge::concat));
    Tensor sum = t.value(ops::bilstm(t, seq, f, b, ops::Merge::sum));
    CHECK(cat.shape() == Shape{3, 10});
    CHECK(sum.shape() == Shape{3, 5});
    for (std::size_t n = 0; n < 3; ++n) {
        for (std::size_t j = 0; j < 5; ++j) CHECK(sum.at(n, j) == doctest::Approx(cat.at(n, j) + cat.at(n, 5 + j)));
    }
}

TEST_CASE("softmax examples") {
    Tensor u = eval([](Tape& t) { return ops::softmax(t, t.constant(Tensor::vector({3, 3, 3, 3}))); });
    for (double v : u.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
    Tensor p = eval([](Tape& t) { return ops::softmax(t, t.constant(Tensor::vector({0.0, std::log(2.0)}))); });
    CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
    CHECK(p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    Tape t;
    CHECK_THROWS_AS(ops::softmax(t, t.constant(Tensor::vector({1.0, INFINITY}))), NumericError);
}

TEST_CASE("softmax is shift invariant and normalized on wide logits") {
    Rng rng(13);
    for (int n = 0; n < 200; ++n) {
        Tensor x = random_tensor(rng, {4, 7}, -50.0, 50.0);
        Tensor shifted = x;
        const double c = rng.uniform(-30.0, 30.0);
        for (auto& v : shifted.data()) v += c;
        Tensor a = eval([&](Tape& t) { return ops::softmax(t, t.constant(x)); });
        Tensor b = eval([&](Tape& t) { return ops::softmax(t, t.constant(shifted)); });
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) {
                s += a.at(r, j);
                CHECK(std::abs(a.at(r, j) - b.at(r, j)) <= 1e-12);
            }
            CHECK(std::abs(s - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("cross_entropy examples") {
    Tensor target = Tensor::matrix({{1, 0, 0, 0}, {0, 0, 1, 0}});
    Tensor perfect = target;
    CHECK(eval([&](Tape& t) { return ops::cross_entropy(t, t.constant(perfect), target); })[0] <= 1e-11);
    Tensor uniform({2, 4}, 0.25);
    CHECK(eval([&](Tape& t) { return ops::cross_entropy(t, t.constant(uniform), target); })[0] ==
          doctest::Approx(std::log(4.0)).epsilon(1e-14));
    // A zero probability on the true class is clipped, not infinite.
    Tensor wrong = Tensor::matrix({{0, 1, 0, 0}, {0, 0, 1, 0}});
    CHECK(eval([&](Tape& t) { return ops::cross_entropy(t, t.constant(wrong), target); })[0] ==
          doctest::Approx(-std::log(ops::kLogClip) / 2.0));
    Tape t;
    CHECK_THROWS_AS(ops::cross_entropy(t, t.constant(Tensor({2, 3}, 0.3)), target), ShapeError);
    std::vector<double> none{0.0, 0.0};
    CHECK_THROWS_AS(ops::cross_entropy(t, t.constant(uniform), target, none), ArgumentError);
}

TEST_CASE("cross_entropy is non-negative and excludes masked rows") {
    Rng rng(17);
    for (int n = 0; n < 100; ++n) {
        Tensor logits = random_tensor(rng, {5, 3}, -4, 4);
        Tensor target({5, 3}, 0.0);
        for (std::size_t r = 0; r < 5; ++r) target.at(r, static_cast<std::size_t>(rng.integer(0, 2))) = 1.0;
        Tape t;
        Var p = ops::softmax(t, t.constant(logits));
        CHECK(t.scalar(ops::cross_entropy(t, p, target)) >= 0.0);
        std::vector<double> mask{1, 1, 0, 0, 0};
        Tensor head({2, 3}), head_target({2, 3});
        for (std::size_t i = 0; i < 6; ++i) {
            head[i] = t.value(p)[i];
            head_target[i] = target[i];
        }
        CHECK(t.scalar(ops::cross_entropy(t, p, target, mask)) ==
              doctest::Approx(t.scalar(ops::cross_entropy(t, t.constant(head), head_target))).epsilon(1e-14));
    }
}

TEST_CASE("shape ops") {
    Tape t;
    Var a = t.constant(Tensor::matrix({{1, 2}, {3, 4}}));
    CHECK(t.value(ops::concat(t, a, a, 0)).shape() == Shape{4, 2});
    CHECK(t.value(ops::concat(t, a, a, 1)) == Tensor::matrix({{1, 2, 1, 2}, {3, 4, 3, 4}}));
    CHECK(t.value(ops::repeat_rows(t, a, 2)) == Tensor::matrix({{1, 2}, {1, 2}, {3, 4}, {3, 4}}));
    Tensor b = t.value(ops::broadcast_time(t, a, 3));
    CHECK(b.shape() == Shape{2, 2, 3});
    CHECK(b.at(1, 0, 2) == 3.0);
    Tensor cube({2, 3, 4});
    std::iota(cube.data().begin(), cube.data().end(), 0.0);
    Tensor sw = t.value(ops::swap_last_axes(t, t.constant(cube)));
    CHECK(sw.shape() == Shape{2, 4, 3});
    CHECK(sw.at(1, 3, 2) == cube.at(1, 2, 3));
    CHECK_THROWS_AS(ops::concat(t, a, t.constant(Tensor({3, 3})), 1), ShapeError);
    CHECK_THROWS_AS(ops::add(t, a, t.constant(Tensor({4}))), ShapeError);
}

TEST_CASE("split_windows needs a multiple of the window length") {
    Tape t;
    Tensor x({2, 10});
    std::iota(x.data().begin(), x.data().end(), 0.0);
    Tensor w = t.value(ops::split_windows(t, t.constant(x), 5));
    CHECK(w.shape() == Shape{2, 2, 5});
    CHECK(w.at(1, 1, 4) == x.at(1, 9));
    CHECK(w.at(0, 1, 0) == x.at(1, 0));
    CHECK_THROWS_WITH_AS(ops::split_windows(t, t.constant(x), 3), doctest::Contains("pad"), ShapeError);
}
