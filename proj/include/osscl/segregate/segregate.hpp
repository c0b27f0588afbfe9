#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osscl/nets/encoder_projector.hpp"
#include "osscl/numcore/rng.hpp"
#include "osscl/scenario/augment.hpp"
#include "osscl/scenario/stream.hpp"

namespace osscl::segregate {

using numcore::Tensor;
using scenario::LabeledSet;
using scenario::UnlabeledPool;

// Unit-norm class centroids, one row per observed class.
struct PrototypeSet {
    Tensor<double> prototypes;  // [classes x d]
    std::vector<int> class_ids;  // class of each row, ascending

    std::size_t size() const { return class_ids.size(); }
    std::size_t dim() const { return prototypes.cols(); }
};

// Centroid of each class's embeddings projected to the unit sphere.
// Throws EmptyClass when an observed class has no row and
// DegenerateCentroid when a centroid norm is below 1e-12.
PrototypeSet prototypes_from_embeddings(const Tensor<double>& embeddings, std::span<const int> labels,
                                        std::span<const int> observed_classes);

// Embeds `n_aug` augmented views of every labeled sample with the reference
// network and averages per class.
PrototypeSet build_prototypes(const nets::EncoderProjector<float>& reference, const LabeledSet& labeled,
                              std::span<const int> observed_classes, const scenario::Augmenter& augmenter,
                              std::size_t n_aug, numcore::Rng& rng);

struct Match {
    double score = 0.0;  // max cosine over prototypes
    int label = -1;      // class of the best prototype, lowest id on ties
};

// z must be unit norm. Dot products accumulate in double, coordinate order.
Match best_match(const PrototypeSet& protos, std::span<const float> z);
double score(const PrototypeSet& protos, std::span<const float> z);

enum class ThresholdSpread { variance, stddev };

std::string to_string(ThresholdSpread s);
ThresholdSpread parse_threshold_spread(const std::string& name);

struct ScoreStats {
    std::vector<double> labeled_scores;
    double mean = 0.0;
    double variance = 0.0;  // population variance
    double eta_id = -4.0;
    double eta_pl = -2.0;
    ThresholdSpread spread = ThresholdSpread::variance;
    double tau_id = 0.0;  // mean + eta_id * spread term
    double tau_pl = 0.0;
};

// Throws InvalidArgument with fewer than two scores.
ScoreStats compute_thresholds(std::span<const double> labeled_scores, double eta_id, double eta_pl,
                              ThresholdSpread spread = ThresholdSpread::variance);

// Scores of unaugmented reference embeddings.
std::vector<double> embedding_scores(const PrototypeSet& protos, const Tensor<float>& embeddings);

struct PseudoLabel {
    std::size_t index;  // row of the unlabeled pool
    int label;
};

struct SegregationOutput {
    std::vector<double> scores;                 // one per pool sample
    std::vector<std::size_t> in_distribution;   // score > tau_id, ascending
    std::vector<PseudoLabel> pseudo_labeled;    // score > tau_pl, ascending index
};

SegregationOutput segregate_embeddings(const PrototypeSet& protos, const ScoreStats& stats, const Tensor<float>& embeddings);

SegregationOutput segregate(const nets::EncoderProjector<float>& reference, const PrototypeSet& protos,
                            const ScoreStats& stats, const UnlabeledPool& pool);

// Area under the ROC curve of `positive` scored above `negative`, ties
// counted half (average ranks). Empty when either side is empty.
std::optional<double> auroc(std::span<const double> positive, std::span<const double> negative);

struct OodMetrics {
    std::optional<double> auroc;            // related vs. unrelated by score
    double precision = 1.0;                 // related share of the in-distribution set
    std::optional<double> pseudo_accuracy;  // correct pseudo labels; empty with no pseudo labels
    std::size_t in_distribution = 0;
    std::size_t pseudo_labeled = 0;
};

OodMetrics ood_metrics(const SegregationOutput& output, const UnlabeledPool& pool);

// Per-sample evaluation rows for reports.
struct ScoredSample {
    std::size_t index;
    std::uint64_t id;
    double score;
    bool related;
    int true_class;
    bool in_distribution;
    int pseudo_label;  // -1 when not pseudo-labeled
};

std::vector<ScoredSample> score_table(const SegregationOutput& output, const UnlabeledPool& pool);

}  // namespace osscl::segregate
