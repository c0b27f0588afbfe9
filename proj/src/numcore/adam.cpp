#include "osscl/numcore/adam.hpp"

#include <cmath>
#include <string>

namespace osscl::numcore {

template <class T>
AdamState<T>::AdamState(AdamHyper h, std::span<const Tensor<T>> params) : hyper(h) {
    first_moment.reserve(params.size());
    second_moment.reserve(params.size());
    for (const auto& p : params) {
        first_moment.emplace_back(p.shape(), T{0});
        second_moment.emplace_back(p.shape(), T{0});
    }
}

template <class T>
void adam_step(AdamState<T>& state, std::span<Tensor<T>> params, std::span<const Tensor<T>> grads) {
    if (params.size() != state.first_moment.size() || grads.size() != params.size())
        throw ShapeError("adam_step: expected " + std::to_string(state.first_moment.size()) + " parameters, got " +
                         std::to_string(params.size()) + " parameters and " + std::to_string(grads.size()) + " gradients");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].shape() != state.first_moment[k].shape() || grads[k].shape() != params[k].shape())
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(k));
    }
    ++state.step;
    const auto& h = state.hyper;
    const double correction1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
    const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k].values();
        auto g = grads[k].values();
        auto m = state.first_moment[k].values();
        auto v = state.second_moment[k].values();
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = b1 * m[i] + (T{1} - b1) * g[i];
            v[i] = b2 * v[i] + (T{1} - b2) * g[i] * g[i];
            const double m_hat = static_cast<double>(m[i]) / correction1;
            const double v_hat = static_cast<double>(v[i]) / correction2;
            p[i] = static_cast<T>(static_cast<double>(p[i]) - h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon));
        }
        require_finite<T>(params[k].values(), "adam_step");
    }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(AdamState<float>&, std::span<Tensor<float>>, std::span<const Tensor<float>>);
template void adam_step<double>(AdamState<double>&, std::span<Tensor<double>>, std::span<const Tensor<double>>);

}  // namespace osscl::numcore
