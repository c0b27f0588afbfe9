#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>

#include "osscl/segregate/segregate.hpp"

using namespace osscl;
using namespace osscl::segregate;
using numcore::Rng;
using numcore::Shape;
using scenario::SampleOrigin;
using scenario::SealedProvenance;

namespace {

Tensor<float> unit(std::vector<float> v) {
    double n = 0;
    for (float x : v) n += double(x) * x;
    for (auto& x : v) x = static_cast<float>(x / std::sqrt(n));
    const std::size_t d = v.size();
    return Tensor<float>::matrix(1, d, std::move(v));
}

PrototypeSet axis_prototypes() {
    return prototypes_from_embeddings(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}), std::vector<int>{0, 1}, std::vector<int>{0, 1});
}

UnlabeledPool pool_with(std::vector<SampleOrigin> origins) {
    UnlabeledPool p;
    p.x = Tensor<float>(Shape{origins.size(), 2});
    for (std::size_t i = 0; i < origins.size(); ++i) p.ids.push_back(i);
    p.provenance = SealedProvenance(std::move(origins));
    return p;
}

}  // namespace

TEST_CASE("prototype of two orthogonal embeddings") {
    auto p = prototypes_from_embeddings(Tensor<double>::matrix(2, 2, {1, 0, 0, 1}), std::vector<int>{3, 3},
                                        std::vector<int>{3});
    REQUIRE(p.size() == 1);
    CHECK(p.class_ids[0] == 3);
    CHECK(p.prototypes(0, 0) == doctest::Approx(0.70710678).epsilon(1e-8));
    CHECK(p.prototypes(0, 1) == doctest::Approx(0.70710678).epsilon(1e-8));
}

TEST_CASE("prototype errors") {
    CHECK_THROWS_AS(prototypes_from_embeddings(Tensor<double>::matrix(1, 2, {1, 0}), std::vector<int>{0}, std::vector<int>{0, 1}),
                    EmptyClass);
    CHECK_THROWS_AS(
        prototypes_from_embeddings(Tensor<double>::matrix(2, 2, {1, 0, -1, 0}), std::vector<int>{0, 0}, std::vector<int>{0}),
        DegenerateCentroid);
}

TEST_CASE("identity augmentation with one view reproduces the sample embedding") {
    nets::Architecture arch;
    arch.input_dim = 4;
    nets::EncoderProjector<float> net(arch, 3);
    scenario::LabeledSet one(4);
    const float row[4] = {0.5f, -1.f, 2.f, 0.1f};
    one.append_row(row, 2, 77);
    Rng rng(1);
    auto protos = build_prototypes(net, one, std::vector<int>{2}, scenario::Augmenter::vector({0, 0}), 1, rng);
    auto z = nets::embed(net, one.x);
    for (std::size_t c = 0; c < z.cols(); ++c) CHECK(protos.prototypes(0, c) == doctest::Approx(z(0, c)).epsilon(1e-6));
}

TEST_CASE("random prototypes are unit norm") {
    nets::Architecture arch;
    arch.input_dim = 6;
    nets::EncoderProjector<float> net(arch, 9);
    scenario::LabeledSet data(6);
    Rng rng(4);
    for (int i = 0; i < 40; ++i) {
        float row[6];
        for (auto& v : row) v = static_cast<float>(rng.normal());
        data.append_row(row, i % 4, i);
    }
    auto protos = build_prototypes(net, data, std::vector<int>{0, 1, 2, 3}, scenario::Augmenter::vector(), 2, rng);
    for (std::size_t k = 0; k < protos.size(); ++k) {
        double n = 0;
        for (std::size_t c = 0; c < protos.dim(); ++c) n += protos.prototypes(k, c) * protos.prototypes(k, c);
        CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("score examples") {
    auto p = axis_prototypes();
    CHECK(score(p, std::vector<float>{1, 0}) == doctest::Approx(1.0));
    CHECK(score(p, std::vector<float>{0.6f, 0.8f}) == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(best_match(p, std::vector<float>{0.6f, 0.8f}).label == 1);

    auto q = prototypes_from_embeddings(Tensor<double>::matrix(1, 3, {1, 0, 0}), std::vector<int>{0}, std::vector<int>{0});
    CHECK(score(q, std::vector<float>{0, 0, 1}) == 0.0);
    CHECK_THROWS_AS(score(PrototypeSet{}, std::vector<float>{1}), InvalidArgument);
}

TEST_CASE("threshold examples") {
    const std::vector<double> s{0.5, 0.7};
    auto st = compute_thresholds(s, -4, -2);
    CHECK(st.mean == doctest::Approx(0.6));
    CHECK(st.variance == doctest::Approx(0.01));
    CHECK(st.tau_id == doctest::Approx(0.56));
    CHECK(st.tau_pl == doctest::Approx(0.58));
    CHECK(compute_thresholds(s, 0, 0).tau_id == doctest::Approx(0.6));
    auto sd = compute_thresholds(s, -4, -2, ThresholdSpread::stddev);
    CHECK(sd.tau_id == doctest::Approx(0.6 - 4 * 0.1));
    CHECK_THROWS_AS(compute_thresholds(std::vector<double>{0.5}, -4, -2), InvalidArgument);
}

TEST_CASE("thresholds increase with eta when scores vary") {
    const std::vector<double> s{0.2, 0.9, 0.4};
    double prev = -1e9;
    for (double eta = -5; eta <= 5; eta += 0.5) {
        const double tau = compute_thresholds(s, eta, eta).tau_id;
        CHECK(tau > prev);
        prev = tau;
    }
}

TEST_CASE("everything below threshold yields empty sets") {
    auto p = axis_prototypes();
    ScoreStats st = compute_thresholds(std::vector<double>{0.99, 1.0}, 0, 0);
    auto out = segregate_embeddings(p, st, unit({1, 1}));
    CHECK(out.in_distribution.empty());
    CHECK(out.pseudo_labeled.empty());
}

TEST_CASE("segregation equals a brute-force oracle") {
    nets::Architecture arch;
    arch.input_dim = 8;
    arch.embed_dim = 6;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        nets::EncoderProjector<float> net(arch, seed + 100);
        const std::size_t n = 200 + rng.below(301);
        scenario::UnlabeledPool pool;
        pool.x = Tensor<float>(Shape{n, 8});
        for (auto& v : pool.x.values()) v = static_cast<float>(rng.normal());
        pool.ids.resize(n);
        pool.provenance = SealedProvenance(std::vector<SampleOrigin>(n));

        scenario::LabeledSet lab(8);
        for (int i = 0; i < 30; ++i) {
            float row[8];
            for (auto& v : row) v = static_cast<float>(rng.normal());
            lab.append_row(row, i % 5, 10000 + i);
        }
        auto protos = build_prototypes(net, lab, std::vector<int>{0, 1, 2, 3, 4}, scenario::Augmenter::vector(), 2, rng);
        auto lab_scores = embedding_scores(protos, nets::embed(net, lab.x));
        auto stats = compute_thresholds(lab_scores, -4, -2, ThresholdSpread::stddev);
        auto out = segregate::segregate(net, protos, stats, pool);

        // oracle: exhaustive max over prototypes, then filter
        auto z = nets::embed(net, pool.x);
        std::vector<std::size_t> want_in;
        std::vector<std::pair<std::size_t, int>> want_pl;
        for (std::size_t i = 0; i < n; ++i) {
            double best = -2;
            int arg = -1;
            for (std::size_t k = 0; k < protos.size(); ++k) {
                double dot = 0;
                for (std::size_t c = 0; c < z.cols(); ++c) dot += protos.prototypes(k, c) * double(z(i, c));
                if (dot > best) best = dot, arg = protos.class_ids[k];
            }
            CHECK(out.scores[i] == best);
            if (best > stats.tau_id) want_in.push_back(i);
            if (best > stats.tau_pl) want_pl.emplace_back(i, arg);
        }
        CHECK(out.in_distribution == want_in);
        REQUIRE(out.pseudo_labeled.size() == want_pl.size());
        std::set<std::size_t> in_set(out.in_distribution.begin(), out.in_distribution.end());
        for (std::size_t k = 0; k < want_pl.size(); ++k) {
            CHECK(out.pseudo_labeled[k].index == want_pl[k].first);
            CHECK(out.pseudo_labeled[k].label == want_pl[k].second);
            CHECK(in_set.count(want_pl[k].first) == 1);
            // the pseudo label's prototype attains the score
            const auto row = std::find(protos.class_ids.begin(), protos.class_ids.end(), want_pl[k].second) -
                             protos.class_ids.begin();
            double dot = 0;
            for (std::size_t c = 0; c < z.cols(); ++c)
                dot += protos.prototypes(static_cast<std::size_t>(row), c) * double(z(want_pl[k].first, c));
            CHECK(dot == out.scores[want_pl[k].first]);
        }
    }
}

TEST_CASE("auroc examples") {
    CHECK(*auroc(std::vector<double>{0.9, 0.7}, std::vector<double>{0.8, 0.1}) == doctest::Approx(0.75));
    CHECK(*auroc(std::vector<double>{0.9, 0.8}, std::vector<double>{0.1, 0.2}) == 1.0);
    CHECK(*auroc(std::vector<double>{0.3, 0.5, 0.5}, std::vector<double>{0.5, 0.3, 0.5}) == doctest::Approx(0.5));
    CHECK_FALSE(auroc(std::vector<double>{0.1}, std::vector<double>{}).has_value());
}

TEST_CASE("auroc agrees with pair counting") {
    Rng rng(6);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> pos(5 + rng.below(40)), neg(5 + rng.below(40));
        // coarse grid forces ties
        for (auto& v : pos) v = std::round(rng.uniform() * 10) / 10;
        for (auto& v : neg) v = std::round(rng.uniform() * 8) / 10;
        double wins = 0;
        for (double p : pos)
            for (double q : neg) wins += p > q ? 1.0 : (p == q ? 0.5 : 0.0);
        CHECK(*auroc(pos, neg) == doctest::Approx(wins / double(pos.size() * neg.size())).epsilon(1e-12));
    }
}

TEST_CASE("ood metrics from provenance") {
    auto pool = pool_with({{true, 0, 0}, {true, 1, 0}, {false, -1, 1}, {false, -1, 1}});
    SegregationOutput out;
    out.scores = {0.9, 0.7, 0.8, 0.1};
    out.in_distribution = {0, 1, 2};
    out.pseudo_labeled = {{0, 0}, {2, 1}};
    auto m = ood_metrics(out, pool);
    CHECK(*m.auroc == doctest::Approx(0.75));
    CHECK(m.precision == doctest::Approx(2.0 / 3.0));
    CHECK(*m.pseudo_accuracy == doctest::Approx(0.5));

    out.in_distribution.clear();
    out.pseudo_labeled.clear();
    m = ood_metrics(out, pool);
    CHECK(m.precision == 1.0);
    CHECK_FALSE(m.pseudo_accuracy.has_value());

    auto rows = score_table(out, pool);
    REQUIRE(rows.size() == 4);
    CHECK(rows[2].related == false);
    CHECK(rows[1].true_class == 1);
}
