#include "osscl/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace osscl::numcore {

namespace {

double evaluate(const LossBuilder& build, const std::vector<Tensor<double>>& inputs) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (const auto& t : inputs) leaves.push_back(tape.constant(t));
    return build(tape, leaves).value().item();
}

}  // namespace

GradCheckResult check_gradients(const LossBuilder& build, const std::vector<Tensor<double>>& inputs, double h) {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (const auto& t : inputs) leaves.push_back(tape.variable(t));
    const Var<double> loss = build(tape, leaves);
    const Gradients<double> grads = tape.backward(loss);

    GradCheckResult result;
    result.loss = loss.value().item();
    auto perturbed = inputs;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor<double>& analytic = grads.of(leaves[k]);
        double diff_sq = 0.0, a_sq = 0.0, n_sq = 0.0;
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double original = inputs[k][i];
            perturbed[k][i] = original + h;
            const double up = evaluate(build, perturbed);
            perturbed[k][i] = original - h;
            const double down = evaluate(build, perturbed);
            perturbed[k][i] = original;
            const double numeric = (up - down) / (2.0 * h);
            diff_sq += (analytic[i] - numeric) * (analytic[i] - numeric);
            a_sq += analytic[i] * analytic[i];
            n_sq += numeric * numeric;
        }
        const double denom = std::max({std::sqrt(a_sq), std::sqrt(n_sq), 1e-10});
        result.max_relative_error = std::max(result.max_relative_error, std::sqrt(diff_sq) / denom);
    }
    return result;
}

}  // namespace osscl::numcore
