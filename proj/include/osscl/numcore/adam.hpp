#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "osscl/numcore/tensor.hpp"

namespace osscl::numcore {

struct AdamHyper {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// First/second moments for one parameter list. Shapes are fixed at
// construction and checked on every step.
template <class T>
struct AdamState {
    AdamHyper hyper;
    std::vector<Tensor<T>> first_moment;
    std::vector<Tensor<T>> second_moment;
    std::int64_t step = 0;

    AdamState() = default;
    AdamState(AdamHyper h, std::span<const Tensor<T>> params);
};

// One bias-corrected Adam update using state.hyper.learning_rate.
template <class T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params, std::span<const Tensor<T>> grads);

template <class T>
void adam_step(AdamState<T>& state, std::vector<Tensor<T>>& params, const std::vector<Tensor<T>>& grads) {
    adam_step(state, std::span<Tensor<T>>(params), std::span<const Tensor<T>>(grads));
}

}  // namespace osscl::numcore
