#include "osscl/segregate/segregate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace osscl::segregate {

// Defined here only, so evaluation code in this file is the sole reader of
// sample provenance.
struct ProvenanceReader {
    static const std::vector<scenario::SampleOrigin>& origins(const scenario::SealedProvenance& p) { return p.origins_; }
};

using numcore::Shape;

namespace {

constexpr double kCentroidEpsilon = 1e-12;
constexpr std::size_t kEmbedChunk = 512;

Tensor<float> embed_in_chunks(const nets::EncoderProjector<float>& net, const Tensor<float>& x) {
    const std::size_t n = x.rows(), d = x.cols();
    if (n == 0) return Tensor<float>(Shape{0, net.architecture().embed_dim});
    std::vector<float> out;
    out.reserve(n * net.architecture().embed_dim);
    for (std::size_t start = 0; start < n; start += kEmbedChunk) {
        const std::size_t m = std::min(kEmbedChunk, n - start);
        Tensor<float> chunk(Shape{m, d}, std::vector<float>(x.values().begin() + start * d, x.values().begin() + (start + m) * d));
        auto z = nets::embed(net, chunk);
        out.insert(out.end(), z.values().begin(), z.values().end());
    }
    return Tensor<float>(Shape{n, net.architecture().embed_dim}, std::move(out));
}

}  // namespace

PrototypeSet prototypes_from_embeddings(const Tensor<double>& embeddings, std::span<const int> labels,
                                        std::span<const int> observed_classes) {
    if (embeddings.rows() != labels.size())
        throw ShapeError("prototype construction got " + std::to_string(embeddings.rows()) + " embeddings for " +
                         std::to_string(labels.size()) + " labels");
    std::vector<int> classes(observed_classes.begin(), observed_classes.end());
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

    const std::size_t d = embeddings.cols();
    PrototypeSet out{Tensor<double>(Shape{classes.size(), d}, 0.0), classes};
    std::vector<std::size_t> counts(classes.size(), 0);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto it = std::lower_bound(classes.begin(), classes.end(), labels[i]);
        if (it == classes.end() || *it != labels[i]) continue;
        const auto k = static_cast<std::size_t>(it - classes.begin());
        for (std::size_t c = 0; c < d; ++c) out.prototypes(k, c) += embeddings(i, c);
        ++counts[k];
    }
    for (std::size_t k = 0; k < classes.size(); ++k) {
        if (counts[k] == 0) throw EmptyClass("observed class " + std::to_string(classes[k]) + " has no labeled sample");
        double norm = 0;
        for (std::size_t c = 0; c < d; ++c) {
            out.prototypes(k, c) /= static_cast<double>(counts[k]);
            norm += out.prototypes(k, c) * out.prototypes(k, c);
        }
        norm = std::sqrt(norm);
        if (norm < kCentroidEpsilon)
            throw DegenerateCentroid("centroid of class " + std::to_string(classes[k]) + " has norm " + std::to_string(norm));
        for (std::size_t c = 0; c < d; ++c) out.prototypes(k, c) /= norm;
    }
    return out;
}

PrototypeSet build_prototypes(const nets::EncoderProjector<float>& reference, const LabeledSet& labeled,
                              std::span<const int> observed_classes, const scenario::Augmenter& augmenter,
                              std::size_t n_aug, numcore::Rng& rng) {
    if (n_aug == 0) throw InvalidArgument("prototype construction needs at least one view per sample");
    const std::size_t n = labeled.size();
    const std::size_t d = reference.architecture().embed_dim;
    Tensor<double> emb(Shape{n * n_aug, d});
    std::vector<int> labels;
    labels.reserve(n * n_aug);
    for (std::size_t v = 0; v < n_aug; ++v) {
        auto z = embed_in_chunks(reference, augmenter.apply(labeled.x, rng));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t c = 0; c < d; ++c) emb(v * n + i, c) = z(i, c);
            labels.push_back(labeled.y[i]);
        }
    }
    return prototypes_from_embeddings(emb, labels, observed_classes);
}

Match best_match(const PrototypeSet& protos, std::span<const float> z) {
    if (protos.size() == 0) throw InvalidArgument("cannot score against an empty prototype set");
    if (z.size() != protos.dim())
        throw ShapeError("embedding width " + std::to_string(z.size()) + " does not match prototypes " +
                         std::to_string(protos.dim()));
    Match best{-std::numeric_limits<double>::infinity(), -1};
    for (std::size_t k = 0; k < protos.size(); ++k) {
        double dot = 0;
        for (std::size_t c = 0; c < z.size(); ++c) dot += protos.prototypes(k, c) * static_cast<double>(z[c]);
        if (dot > best.score) best = {dot, protos.class_ids[k]};
    }
    return best;
}

double score(const PrototypeSet& protos, std::span<const float> z) { return best_match(protos, z).score; }

std::string to_string(ThresholdSpread s) { return s == ThresholdSpread::variance ? "variance" : "stddev"; }

ThresholdSpread parse_threshold_spread(const std::string& name) {
    if (name == "variance") return ThresholdSpread::variance;
    if (name == "stddev") return ThresholdSpread::stddev;
    throw InvalidArgument("unknown threshold spread '" + name + "'");
}

ScoreStats compute_thresholds(std::span<const double> labeled_scores, double eta_id, double eta_pl, ThresholdSpread spread) {
    if (labeled_scores.size() < 2)
        throw InvalidArgument("thresholds need at least 2 labeled scores, got " + std::to_string(labeled_scores.size()));
    ScoreStats s;
    s.labeled_scores.assign(labeled_scores.begin(), labeled_scores.end());
    const double n = static_cast<double>(labeled_scores.size());
    s.mean = std::accumulate(labeled_scores.begin(), labeled_scores.end(), 0.0) / n;
    double sq = 0;
    for (double v : labeled_scores) sq += (v - s.mean) * (v - s.mean);
    s.variance = sq / n;
    s.eta_id = eta_id;
    s.eta_pl = eta_pl;
    s.spread = spread;
    const double term = spread == ThresholdSpread::variance ? s.variance : std::sqrt(s.variance);
    s.tau_id = s.mean + eta_id * term;
    s.tau_pl = s.mean + eta_pl * term;
    return s;
}

std::vector<double> embedding_scores(const PrototypeSet& protos, const Tensor<float>& embeddings) {
    std::vector<double> out(embeddings.rows());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = score(protos, embeddings.row(i));
    return out;
}

SegregationOutput segregate_embeddings(const PrototypeSet& protos, const ScoreStats& stats, const Tensor<float>& embeddings) {
    SegregationOutput out;
    out.scores.reserve(embeddings.rows());
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        const Match m = best_match(protos, embeddings.row(i));
        out.scores.push_back(m.score);
        if (m.score > stats.tau_id) out.in_distribution.push_back(i);
        if (m.score > stats.tau_pl) out.pseudo_labeled.push_back({i, m.label});
    }
    if (stats.eta_pl >= stats.eta_id) {
        // threshold ordering guarantees the pseudo-labeled set is inside the in-distribution set
        std::size_t j = 0;
        for (const auto& p : out.pseudo_labeled) {
            while (j < out.in_distribution.size() && out.in_distribution[j] < p.index) ++j;
            if (j == out.in_distribution.size() || out.in_distribution[j] != p.index)
                throw std::logic_error("pseudo-labeled sample " + std::to_string(p.index) + " is not in-distribution");
        }
    }
    return out;
}

SegregationOutput segregate(const nets::EncoderProjector<float>& reference, const PrototypeSet& protos,
                            const ScoreStats& stats, const UnlabeledPool& pool) {
    return segregate_embeddings(protos, stats, embed_in_chunks(reference, pool.x));
}

std::optional<double> auroc(std::span<const double> positive, std::span<const double> negative) {
    if (positive.empty() || negative.empty()) return std::nullopt;
    struct Entry {
        double score;
        bool positive;
    };
    std::vector<Entry> all;
    all.reserve(positive.size() + negative.size());
    for (double s : positive) all.push_back({s, true});
    for (double s : negative) all.push_back({s, false});
    std::sort(all.begin(), all.end(), [](const Entry& a, const Entry& b) { return a.score < b.score; });
    double rank_sum = 0;
    for (std::size_t i = 0; i < all.size();) {
        std::size_t j = i;
        while (j < all.size() && all[j].score == all[i].score) ++j;
        const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k)
            if (all[k].positive) rank_sum += avg_rank;
        i = j;
    }
    const double np = static_cast<double>(positive.size()), nn = static_cast<double>(negative.size());
    return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

OodMetrics ood_metrics(const SegregationOutput& output, const UnlabeledPool& pool) {
    const auto& origins = ProvenanceReader::origins(pool.provenance);
    if (origins.size() != output.scores.size())
        throw ShapeError("segregation output has " + std::to_string(output.scores.size()) + " scores for a pool of " +
                         std::to_string(origins.size()));
    OodMetrics m;
    std::vector<double> related, unrelated;
    for (std::size_t i = 0; i < origins.size(); ++i) (origins[i].related ? related : unrelated).push_back(output.scores[i]);
    m.auroc = auroc(related, unrelated);

    m.in_distribution = output.in_distribution.size();
    if (!output.in_distribution.empty()) {
        std::size_t hits = 0;
        for (std::size_t i : output.in_distribution) hits += origins[i].related ? 1 : 0;
        m.precision = static_cast<double>(hits) / static_cast<double>(output.in_distribution.size());
    }
    m.pseudo_labeled = output.pseudo_labeled.size();
    if (!output.pseudo_labeled.empty()) {
        std::size_t correct = 0;
        for (const auto& p : output.pseudo_labeled) correct += origins[p.index].true_class == p.label ? 1 : 0;
        m.pseudo_accuracy = static_cast<double>(correct) / static_cast<double>(output.pseudo_labeled.size());
    }
    return m;
}

std::vector<ScoredSample> score_table(const SegregationOutput& output, const UnlabeledPool& pool) {
    const auto& origins = ProvenanceReader::origins(pool.provenance);
    if (origins.size() != output.scores.size()) throw ShapeError("segregation output does not match the pool");
    std::vector<ScoredSample> rows(origins.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        rows[i] = {i, pool.ids[i], output.scores[i], origins[i].related, origins[i].true_class, false, -1};
    for (std::size_t i : output.in_distribution) rows[i].in_distribution = true;
    for (const auto& p : output.pseudo_labeled) rows[p.index].pseudo_label = p.label;
    return rows;
}

}  // namespace osscl::segregate
