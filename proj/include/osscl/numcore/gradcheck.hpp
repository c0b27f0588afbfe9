#pragma once

#include <functional>
#include <vector>

#include "osscl/numcore/tape.hpp"

namespace osscl::numcore {

// Builds a scalar loss on `tape` from leaves holding `inputs`.
using LossBuilder = std::function<Var<double>(Tape<double>& tape, const std::vector<Var<double>>& leaves)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    double loss = 0.0;
};

// Compares reverse-mode gradients against central differences with step `h`.
// Relative error per input is ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, 1e-10);
// the maximum over inputs is returned.
GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor<double>>& inputs, double h = 1e-5);

}  // namespace osscl::numcore
