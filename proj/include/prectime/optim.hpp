#pragma once

#include "prectime/autodiff.hpp"

#include <cstdint>
#include <vector>

namespace prectime {

struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<Tensor> first_moment;
    std::vector<Tensor> second_moment;
};

AdamState make_adam_state(const ParameterSet& params, double lr = 0.001);

// One bias-corrected Adam update of every parameter from its accumulated grad.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace prectime
