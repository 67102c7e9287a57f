#include "prectime/grad_check.hpp"

#include "prectime/errors.hpp"

#include <algorithm>
#include <cmath>

namespace prectime {

namespace {

double relative_error(double analytic, double numeric) {
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
        throw NumericError("grad_check: non-finite gradient");
    }
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

double checked_value(double v) {
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
}

}  // namespace

double grad_check(const ScalarFn& fn, const Tensor& point, double fd_epsilon) {
    Tensor analytic;
    {
        Tape tape;
        Var x = tape.variable(point);
        Var y = fn(tape, x);
        checked_value(tape.scalar(y));
        tape.backward(y);
        analytic = tape.grad(x);
    }
    auto eval = [&](const Tensor& at) {
        Tape tape;
        Var x = tape.constant(at);
        return checked_value(tape.scalar(fn(tape, x)));
    };

    double worst = 0.0;
    Tensor probe = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        probe[i] = point[i] + fd_epsilon;
        const double up = eval(probe);
        probe[i] = point[i] - fd_epsilon;
        const double down = eval(probe);
        probe[i] = point[i];
        worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * fd_epsilon)));
    }
    return worst;
}

double grad_check_parameters(const std::function<Var(Tape&)>& loss, ParameterSet& params, double fd_epsilon) {
    params.zero_grad();
    {
        Tape tape;
        Var y = loss(tape);
        checked_value(tape.scalar(y));
        tape.backward(y);
    }
    std::vector<Tensor> analytic;
    for (const auto& p : params) analytic.push_back(p.grad);

    auto eval = [&]() {
        Tape tape;
        return checked_value(tape.scalar(loss(tape)));
    };

    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& value = params[k].value;
        for (std::size_t i = 0; i < value.size(); ++i) {
            const double saved = value[i];
            value[i] = saved + fd_epsilon;
            const double up = eval();
            value[i] = saved - fd_epsilon;
            const double down = eval();
            value[i] = saved;
            worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * fd_epsilon)));
        }
    }
    params.zero_grad();
    return worst;
}

}  // namespace prectime
