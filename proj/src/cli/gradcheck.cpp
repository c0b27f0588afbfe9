#include "osscl/cli/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "osscl/losses/losses.hpp"
#include "osscl/numcore/gradcheck.hpp"
#include "osscl/numcore/rng.hpp"

namespace osscl::cli {

namespace {

using numcore::Rng;
using numcore::Shape;
using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

Tensor<double> unit_rows(Rng& rng, std::size_t n, std::size_t d) {
    Tensor<double> t(Shape{n, d});
    for (std::size_t r = 0; r < n; ++r) {
        double norm = 0;
        for (std::size_t c = 0; c < d; ++c) {
            t(r, c) = rng.normal();
            norm += t(r, c) * t(r, c);
        }
        for (std::size_t c = 0; c < d; ++c) t(r, c) /= std::sqrt(norm);
    }
    return t;
}

losses::BatchLabels random_labels(Rng& rng, std::size_t n) {
    losses::BatchLabels b;
    for (std::size_t k = 0; k < n; ++k) {
        b.labels.push_back(static_cast<int>(rng.below(4)));
        b.pseudo_flags.push_back(rng.bernoulli(0.25));
    }
    b.current_classes = {0, 1};
    return b;
}

struct Batch {
    Tensor<double> student;
    Tensor<double> teacher;
    Tensor<double> reference;
    losses::BatchLabels labels;
    losses::SupConOptions options;
    double tau = 0.1;
    double tau_teacher = 0.01;
    double tau_student = 0.2;
};

using Builder = std::function<Var<double>(const Batch&, Var<double>, bool flip)>;

}  // namespace

std::vector<GradcheckLine> run_gradcheck(const GradcheckOptions& options) {
    const losses::LossWeights defaults;

    auto supcon = [](const Batch& b, Var<double> z, bool flip) {
        auto loss = losses::asym_supcon_loss(z, b.labels, b.tau, b.options);
        return flip ? numcore::flip_gradient(loss) : loss;
    };
    const std::vector<std::pair<std::string, Builder>> checks{
        {"ntxent", [](const Batch& b, Var<double> z, bool) { return losses::ntxent_loss(z, b.tau); }},
        {"supcon", supcon},
        {"time_distill",
         [&](const Batch& b, Var<double> z, bool) {
             return losses::distillation_loss(b.teacher, z, defaults.tau_teacher, defaults.tau_student);
         }},
        {"reference_distill",
         [](const Batch& b, Var<double> z, bool) {
             return losses::distillation_loss(b.reference, z, b.tau_teacher, b.tau_student);
         }},
        {"combined",
         [&](const Batch& b, Var<double> z, bool flip) {
             return losses::combined_loss<double>(
                 supcon(b, z, flip), losses::distillation_loss(b.teacher, z, defaults.tau_teacher, defaults.tau_student),
                 losses::distillation_loss(b.reference, z, b.tau_teacher, b.tau_student), defaults, 2);
         }},
    };

    std::vector<GradcheckLine> lines;
    for (std::size_t which = 0; which < checks.size(); ++which) {
        const auto& [name, build] = checks[which];
        GradcheckLine line;
        line.loss = name;
        Rng rng = Rng(options.seed).fork(which);
        for (std::size_t n : {2u, 4u, 8u})
            for (std::size_t d : {3u, 8u})
                for (int rep = 0; rep < 4; ++rep) {
                    Batch b;
                    b.student = unit_rows(rng, 2 * n, d);
                    b.teacher = unit_rows(rng, 2 * n, d);
                    b.reference = unit_rows(rng, 2 * n, d);
                    b.labels = random_labels(rng, n);
                    b.options = losses::SupConOptions{rep % 2 == 1, rep < 2};
                    b.tau = 0.1 + 0.4 * rng.uniform();
                    b.tau_teacher = 0.01 + 0.5 * rng.uniform();
                    b.tau_student = 0.1 + 0.5 * rng.uniform();
                    const bool flip = options.flip_supcon;
                    auto result = numcore::check_gradients(
                        [&](Tape<double>&, const std::vector<Var<double>>& x) {
                            // normalizing on the tape keeps perturbed inputs on the sphere
                            return build(b, numcore::l2_normalize_rows(x[0]), flip);
                        },
                        {b.student}, options.step);
                    line.max_relative_error = std::max(line.max_relative_error, result.max_relative_error);
                    ++line.configs;
                }
        line.passed = line.max_relative_error < options.tolerance;
        lines.push_back(line);
    }
    return lines;
}

}  // namespace osscl::cli
