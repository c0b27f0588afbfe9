#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "osscl/losses/losses.hpp"
#include "osscl/numcore/adam.hpp"
#include "osscl/numcore/gradcheck.hpp"
#include "osscl/numcore/rng.hpp"

using namespace osscl;
using namespace osscl::losses;
using numcore::Rng;
using numcore::Shape;
using numcore::Tape;

namespace {

// frozen from tests/oracles/compute_expected.py
constexpr double kPairedExample = 0.551444713932051;    // log(1 + 2/e)
constexpr double kHalfPairedExample = 0.275722356966026;
constexpr double kIdenticalDistill = 4.39444915467244;  // 4 log 3

Tensor<double> rows(std::size_t n, std::size_t d, std::vector<double> v) { return Tensor<double>::matrix(n, d, std::move(v)); }

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

double value_of(const Var<double>& v) { return v.value().item(); }

BatchLabels random_labels(Rng& rng, std::size_t n, int classes, std::vector<int> current, double pseudo_rate) {
    BatchLabels b;
    for (std::size_t k = 0; k < n; ++k) {
        b.labels.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(classes))));
        b.pseudo_flags.push_back(rng.bernoulli(pseudo_rate));
    }
    b.current_classes = std::move(current);
    return b;
}

// Straight-line evaluation of the supervised loss, independent of the tape.
double brute_supcon(const Tensor<double>& z, const BatchLabels& b, double tau, const SupConOptions& o) {
    const std::size_t n = z.rows();
    auto dot = [&](std::size_t i, std::size_t j) {
        double s = 0;
        for (std::size_t c = 0; c < z.cols(); ++c) s += z(i, c) * z(j, c);
        return s / tau;
    };
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = b.labels[i / 2];
        if (!b.is_current(y) || (!o.pseudo_anchor && b.is_pseudo(i / 2))) continue;
        std::vector<std::size_t> pos;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && b.labels[j / 2] == y && (o.pseudo_positive || !b.is_pseudo(j / 2))) pos.push_back(j);
        if (pos.empty()) continue;
        double den = 0;
        for (std::size_t k = 0; k < n; ++k)
            if (k != i) den += std::exp(dot(i, k));
        double term = 0;
        for (std::size_t j : pos) term -= dot(i, j) - std::log(den);
        total += term / static_cast<double>(pos.size());
    }
    return total / static_cast<double>(n);
}

}  // namespace

TEST_CASE("single pair NT-Xent is zero") {
    Tape<double> tape;
    auto z = tape.constant(rows(2, 2, {1, 0, 0.6, 0.8}));
    CHECK(value_of(ntxent_loss(z, 0.5)) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("two pair NT-Xent example") {
    Tape<double> tape;
    auto z = tape.constant(rows(4, 2, {1, 0, 1, 0, 0, 1, 0, 1}));
    CHECK(std::abs(value_of(ntxent_loss(z, 1.0)) - kPairedExample) < 1e-6);
}

TEST_CASE("supervised loss examples") {
    Tape<double> tape;
    auto z = tape.constant(rows(4, 2, {1, 0, 1, 0, 0, 1, 0, 1}));
    BatchLabels b{{0, 1}, {}, {0}};
    CHECK(std::abs(value_of(asym_supcon_loss(z, b, 1.0)) - kHalfPairedExample) < 1e-6);

    b.current_classes = {5};
    CHECK(value_of(asym_supcon_loss(z, b, 1.0)) == 0.0);

    b.current_classes = {0, 1};
    CHECK(std::abs(value_of(asym_supcon_loss(z, b, 1.0)) - kPairedExample) < 1e-6);

    BatchLabels short_labels{{0}, {}, {0}};
    CHECK_THROWS_AS(asym_supcon_loss(z, short_labels, 1.0), InvalidArgument);
}

TEST_CASE("anchorless supervised loss still backpropagates") {
    Tape<double> tape;
    auto z = tape.variable(rows(2, 2, {1, 0, 0, 1}));
    BatchLabels b{{3}, {}, {0}};
    auto loss = asym_supcon_loss(z, b, 0.1);
    CHECK(value_of(loss) == 0.0);
    auto g = tape.backward(loss);
    for (double v : g.of(z).values()) CHECK(v == 0.0);
}

TEST_CASE("supervised loss equals NT-Xent when every source is its own current class") {
    Rng rng(4);
    for (std::size_t n : {2u, 3u, 5u}) {
        Tape<double> tape;
        auto z = tape.constant(unit_rows(rng, 2 * n, 4));
        BatchLabels b;
        for (std::size_t k = 0; k < n; ++k) b.labels.push_back(static_cast<int>(k));
        b.current_classes = b.labels;
        CHECK(value_of(asym_supcon_loss(z, b, 0.3)) == doctest::Approx(value_of(ntxent_loss(z, 0.3))).epsilon(1e-12));
    }
}

TEST_CASE("supervised loss matches a direct evaluation across pseudo-label options") {
    Rng rng(99);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 2 + rng.below(7);
        auto z0 = unit_rows(rng, 2 * n, 3 + rng.below(5));
        auto b = random_labels(rng, n, 4, {0, 2}, 0.3);
        for (bool anchor : {false, true})
            for (bool positive : {false, true}) {
                SupConOptions o{anchor, positive};
                Tape<double> tape;
                const double got = value_of(asym_supcon_loss(tape.constant(z0), b, 0.2, o));
                CHECK(got == doctest::Approx(brute_supcon(z0, b, 0.2, o)).epsilon(1e-10));
            }
    }
}

TEST_CASE("similarity distribution example") {
    auto p = similarity_distribution(rows(3, 2, {1, 0, 1, 0, 0, 1}), 1.0);
    auto v = p.of_view(0);
    REQUIRE(v.size() == 2);
    CHECK(v[0] == doctest::Approx(0.73105857863).epsilon(1e-10));
    CHECK(v[1] == doctest::Approx(0.26894142137).epsilon(1e-10));
    CHECK(p.probabilities(0, 0) == 0.0);
}

TEST_CASE("similarity rows are distributions even at sharp temperature") {
    Rng rng(5);
    auto p = similarity_distribution(unit_rows(rng, 12, 6), 0.01);
    for (std::size_t i = 0; i < 12; ++i) {
        auto v = p.of_view(i);
        double s = std::accumulate(v.begin(), v.end(), 0.0);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
        for (double x : v) CHECK(x >= 0.0);
    }
}

TEST_CASE("identical embeddings distill to 4 log 3") {
    auto same = rows(4, 2, {1, 0, 1, 0, 1, 0, 1, 0});
    Tape<double> tape;
    auto loss = distillation_loss(same, tape.constant(same), 1.0, 1.0);
    CHECK(std::abs(value_of(loss) - kIdenticalDistill) < 1e-6);
}

TEST_CASE("distillation is minimized by the teacher itself at equal temperatures") {
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        auto teacher = unit_rows(rng, 8, 4);
        auto other = unit_rows(rng, 8, 4);
        Tape<double> tape;
        const double self = value_of(distillation_loss(teacher, tape.constant(teacher), 0.5, 0.5));
        const double cross = value_of(distillation_loss(teacher, tape.constant(other), 0.5, 0.5));
        CHECK(cross >= self - 1e-12);  // Gibbs: cross entropy >= entropy
    }
}

TEST_CASE("losses are invariant to a shared rotation") {
    Rng rng(23);
    auto z = unit_rows(rng, 8, 3);
    auto teacher = unit_rows(rng, 8, 3);
    auto rotate = [](Tensor<double> t) {
        const double a = 1.1;
        for (std::size_t r = 0; r < t.rows(); ++r) {
            const double x = t(r, 0), y = t(r, 2);
            t(r, 0) = std::cos(a) * x - std::sin(a) * y;
            t(r, 2) = std::sin(a) * x + std::cos(a) * y;
        }
        return t;
    };
    BatchLabels b{{0, 1, 0, 2}, {}, {0, 1}};
    Tape<double> tape;
    auto zr = rotate(z);
    CHECK(value_of(ntxent_loss(tape.constant(z), 0.1)) ==
          doctest::Approx(value_of(ntxent_loss(tape.constant(zr), 0.1))).epsilon(1e-10));
    CHECK(value_of(asym_supcon_loss(tape.constant(z), b, 0.1)) ==
          doctest::Approx(value_of(asym_supcon_loss(tape.constant(zr), b, 0.1))).epsilon(1e-10));
    CHECK(value_of(distillation_loss(teacher, tape.constant(z), 0.01, 0.2)) ==
          doctest::Approx(value_of(distillation_loss(rotate(teacher), tape.constant(zr), 0.01, 0.2))).epsilon(1e-10));
}

TEST_CASE("NT-Xent is invariant to reordering sources") {
    Rng rng(31);
    const std::size_t n = 5;
    auto z = unit_rows(rng, 2 * n, 4);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm.begin(), perm.end());
    Tensor<double> permuted(Shape{2 * n, 4});
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t v = 0; v < 2; ++v)
            for (std::size_t c = 0; c < 4; ++c) permuted(2 * k + v, c) = z(2 * perm[k] + v, c);
    Tape<double> tape;
    CHECK(value_of(ntxent_loss(tape.constant(z), 0.2)) ==
          doctest::Approx(value_of(ntxent_loss(tape.constant(permuted), 0.2))).epsilon(1e-12));
}

TEST_CASE("combined loss weighting") {
    Tape<double> tape;
    auto sup = tape.constant(Tensor<double>::scalar(2.0));
    auto td = tape.constant(Tensor<double>::scalar(3.0));
    auto kd = tape.constant(Tensor<double>::scalar(5.0));
    LossWeights w;
    CHECK(value_of(combined_loss<double>(sup, td, kd, w, 2)) == doctest::Approx(2.0 + 0.2 * 3.0 + 0.2 * 5.0));
    CHECK(value_of(combined_loss<double>(sup, td, kd, w, 1)) == doctest::Approx(2.0 + 0.2 * 5.0));
    w.gamma = w.lambda = 0.0;
    CHECK(value_of(combined_loss<double>(sup, td, kd, w, 3)) == 2.0);
    CHECK(value_of(combined_loss<double>(std::nullopt, std::nullopt, kd, LossWeights{}, 1)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(combined_loss<double>(std::nullopt, std::nullopt, std::nullopt, w, 1), InvalidArgument);
}

TEST_CASE("loss weight validation") {
    LossWeights w;
    CHECK_NOTHROW(w.validate());
    w.tau = 0;
    CHECK_THROWS_AS(w.validate(), InvalidArgument);
    w = {};
    w.gamma = -1;
    CHECK_THROWS_AS(w.validate(), InvalidArgument);
}

TEST_CASE("loss gradients agree with finite differences") {
    Rng rng(2024);
    int configs = 0;
    for (std::size_t n : {2u, 4u, 8u})
        for (std::size_t d : {3u, 8u}) {
            for (int rep = 0; rep < 4; ++rep, ++configs) {
                // raw inputs are normalized on the tape so perturbations stay on the sphere
                std::vector<Tensor<double>> inputs{unit_rows(rng, 2 * n, d), unit_rows(rng, 2 * n, d)};
                auto labels = random_labels(rng, n, 3, {0, 1}, 0.25);
                const double tau = 0.1 + 0.4 * rng.uniform();
                auto normalized = [](Tape<double>&, const Var<double>& v) { return numcore::l2_normalize_rows(v); };

                auto r1 = numcore::check_gradients(
                    [&](Tape<double>& t, const std::vector<Var<double>>& x) { return ntxent_loss(normalized(t, x[0]), tau); },
                    {inputs[0]});
                CHECK(r1.max_relative_error < 1e-4);

                auto r2 = numcore::check_gradients(
                    [&](Tape<double>& t, const std::vector<Var<double>>& x) {
                        return asym_supcon_loss(normalized(t, x[0]), labels, tau, SupConOptions{rep % 2 == 1, rep < 2});
                    },
                    {inputs[0]});
                CHECK(r2.max_relative_error < 1e-4);

                auto r3 = numcore::check_gradients(
                    [&](Tape<double>& t, const std::vector<Var<double>>& x) {
                        return distillation_loss(inputs[1], normalized(t, x[0]), 0.05, 0.2);
                    },
                    {inputs[0]});
                CHECK(r3.max_relative_error < 1e-4);

                auto r4 = numcore::check_gradients(
                    [&](Tape<double>& t, const std::vector<Var<double>>& x) {
                        auto z = normalized(t, x[0]);
                        return combined_loss<double>(asym_supcon_loss(z, labels, tau), distillation_loss(inputs[1], z, 0.05, 0.2),
                                                     distillation_loss(inputs[1], z, 0.5, 0.2), LossWeights{}, 2);
                    },
                    {inputs[0]});
                CHECK(r4.max_relative_error < 1e-4);
            }
        }
    CHECK(configs >= 20);
}

TEST_CASE("gradient descent lowers NT-Xent") {
    Rng rng(8);
    Tensor<double> x(Shape{16, 5});
    for (auto& v : x.values()) v = rng.normal();
    std::vector<Tensor<double>> params{x};
    numcore::AdamState<double> adam(numcore::AdamHyper{0.05}, params);
    double first = 0, last = 0;
    for (int step = 0; step < 60; ++step) {
        Tape<double> tape;
        auto leaf = tape.variable(params[0]);
        auto loss = ntxent_loss(numcore::l2_normalize_rows(leaf), 0.2);
        if (step == 0) first = value_of(loss);
        last = value_of(loss);
        auto g = tape.backward(loss);
        std::vector<Tensor<double>> grads{g.of(leaf)};
        numcore::adam_step(adam, params, grads);
    }
    CHECK(last < first * 0.5);
}
