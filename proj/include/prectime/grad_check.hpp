#pragma once

#include "prectime/autodiff.hpp"

#include <functional>

namespace prectime {

// Builds a scalar on the given tape from the recorded input.
using ScalarFn = std::function<Var(Tape&, Var)>;

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
// numeric gradients from central differences with step fd_epsilon.
double grad_check(const ScalarFn& fn, const Tensor& point, double fd_epsilon = 1e-5);

// Same check over every element of every parameter; `loss` records the
// scalar with the parameters bound via Tape::parameter.
double grad_check_parameters(const std::function<Var(Tape&)>& loss, ParameterSet& params, double fd_epsilon = 1e-5);

}  // namespace prectime
