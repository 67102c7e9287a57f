#include "prectime/optim.hpp"

#include "prectime/errors.hpp"

#include <cmath>

namespace prectime {

AdamState make_adam_state(const ParameterSet& params, double lr) {
    AdamState state;
    state.lr = lr;
    for (const auto& p : params) {
        state.first_moment.emplace_back(p.value.shape(), 0.0);
        state.second_moment.emplace_back(p.value.shape(), 0.0);
    }
    return state;
}

void adam_step(ParameterSet& params, AdamState& state) {
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ShapeError("adam: state tracks " + std::to_string(state.first_moment.size()) + " tensors, model has " +
                         std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Parameter& p = params[k];
        if (p.grad.shape() != p.value.shape() || state.first_moment[k].shape() != p.value.shape() ||
            state.second_moment[k].shape() != p.value.shape()) {
            throw ShapeError("adam: shape mismatch for parameter '" + p.name + "'");
        }
    }

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = params[k];
        auto m = state.first_moment[k].data();
        auto v = state.second_moment[k].data();
        auto w = p.value.data();
        auto g = p.grad.data();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

}  // namespace prectime
