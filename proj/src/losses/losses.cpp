#include "osscl/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace osscl::losses {

using numcore::Mask;
using numcore::Shape;

void LossWeights::validate() const {
    if (!(tau > 0) || !(tau_teacher > 0) || !(tau_student > 0))
        throw InvalidArgument("loss temperatures must be positive");
    if (!(gamma >= 0) || !(lambda >= 0)) throw InvalidArgument("loss weights gamma and lambda must be non-negative");
}

bool BatchLabels::is_current(int label) const {
    return std::find(current_classes.begin(), current_classes.end(), label) != current_classes.end();
}

template <class T>
void ViewBatch<T>::validate() const {
    if (views.rank() != 2 || views.rows() % 2 != 0)
        throw InvalidArgument("view batch needs an even number of rows, got " + numcore::shape_string(views.shape()));
    if (labels) {
        if (labels->labels.size() != source_count())
            throw InvalidArgument("view batch has " + std::to_string(source_count()) + " sources but " +
                                  std::to_string(labels->labels.size()) + " labels");
        if (!labels->pseudo_flags.empty() && labels->pseudo_flags.size() != source_count())
            throw InvalidArgument("pseudo flag count does not match source count");
    }
}

namespace {

template <class T>
void require_paired_embeddings(Var<T> embeddings, const char* who) {
    const auto& z = embeddings.value();
    if (z.rank() != 2 || z.rows() == 0 || z.rows() % 2 != 0)
        throw InvalidArgument(std::string(who) + ": expected 2N >= 2 paired embedding rows, got " +
                              numcore::shape_string(z.shape()));
}

// log p_{i,j} for every ordered pair, self excluded.
template <class T>
Var<T> log_similarity(Var<T> embeddings, double tau) {
    auto sim = numcore::pairwise_cosine(embeddings, embeddings);
    return numcore::row_log_softmax(numcore::scale(sim, static_cast<T>(1.0 / tau)),
                                    Mask::off_diagonal(embeddings.value().rows()));
}

}  // namespace

template <class T>
Var<T> ntxent_loss(Var<T> embeddings, double tau) {
    require_paired_embeddings(embeddings, "ntxent_loss");
    if (!(tau > 0)) throw InvalidArgument("ntxent_loss: temperature must be positive");
    const std::size_t views = embeddings.value().rows();
    Tensor<T> weights(Shape{views, views}, T{0});
    const T w = static_cast<T>(-1.0 / static_cast<double>(views));
    for (std::size_t i = 0; i < views; ++i) weights(i, twin_view(i)) = w;
    return numcore::weighted_sum(log_similarity(embeddings, tau), weights);
}

template <class T>
Var<T> asym_supcon_loss(Var<T> embeddings, const BatchLabels& labels, double tau, const SupConOptions& options) {
    require_paired_embeddings(embeddings, "asym_supcon_loss");
    if (!(tau > 0)) throw InvalidArgument("asym_supcon_loss: temperature must be positive");
    const std::size_t views = embeddings.value().rows();
    if (labels.labels.size() * 2 != views)
        throw InvalidArgument("asym_supcon_loss: missing labels (" + std::to_string(labels.labels.size()) +
                              " labels for " + std::to_string(views) + " views)");
    if (!labels.pseudo_flags.empty() && labels.pseudo_flags.size() != labels.labels.size())
        throw InvalidArgument("asym_supcon_loss: pseudo flag count does not match label count");

    auto label_of = [&](std::size_t view) { return labels.labels[view / 2]; };
    auto pseudo_of = [&](std::size_t view) { return labels.is_pseudo(view / 2); };

    Tensor<T> weights(Shape{views, views}, T{0});
    bool any_anchor = false;
    const double norm = 1.0 / static_cast<double>(views);
    for (std::size_t i = 0; i < views; ++i) {
        if (!labels.is_current(label_of(i))) continue;
        if (!options.pseudo_anchor && pseudo_of(i)) continue;
        std::size_t positives = 0;
        for (std::size_t j = 0; j < views; ++j)
            if (j != i && label_of(j) == label_of(i) && (options.pseudo_positive || !pseudo_of(j))) ++positives;
        if (positives == 0) continue;
        any_anchor = true;
        const T w = static_cast<T>(-norm / static_cast<double>(positives));
        for (std::size_t j = 0; j < views; ++j)
            if (j != i && label_of(j) == label_of(i) && (options.pseudo_positive || !pseudo_of(j))) weights(i, j) = w;
    }
    if (!any_anchor) {
        // keep the result attached to the graph so callers can always backprop
        return numcore::scale(numcore::sum(embeddings), T{0});
    }
    return numcore::weighted_sum(log_similarity(embeddings, tau), weights);
}

template <class T>
std::vector<T> SimilarityDistribution<T>::of_view(std::size_t i) const {
    std::vector<T> out;
    out.reserve(probabilities.cols() - 1);
    for (std::size_t j = 0; j < probabilities.cols(); ++j)
        if (j != i) out.push_back(probabilities(i, j));
    return out;
}

template <class T>
SimilarityDistribution<T> similarity_distribution(const Tensor<T>& embeddings, double tau) {
    if (embeddings.rank() != 2 || embeddings.rows() < 2)
        throw InvalidArgument("similarity_distribution: needs at least 2 views, got " +
                              numcore::shape_string(embeddings.shape()));
    if (!(tau > 0)) throw InvalidArgument("similarity_distribution: temperature must be positive");
    const std::size_t n = embeddings.rows(), d = embeddings.cols();
    SimilarityDistribution<T> out{Tensor<T>(Shape{n, n}, T{0})};
    std::vector<double> logits(n);
    for (std::size_t i = 0; i < n; ++i) {
        double hi = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double dot = 0.0;
            for (std::size_t k = 0; k < d; ++k)
                dot += static_cast<double>(embeddings(i, k)) * static_cast<double>(embeddings(j, k));
            logits[j] = dot / tau;
            hi = std::max(hi, logits[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) total += std::exp(logits[j] - hi);
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) out.probabilities(i, j) = static_cast<T>(std::exp(logits[j] - hi) / total);
    }
    return out;
}

template <class T>
Var<T> distillation_loss(const Tensor<T>& teacher_embeddings, Var<T> student_embeddings, double tau_teacher,
                         double tau_student) {
    const auto& student = student_embeddings.value();
    if (teacher_embeddings.rank() != 2 || student.rank() != 2 || teacher_embeddings.rows() != student.rows())
        throw InvalidArgument("distillation_loss: teacher " + numcore::shape_string(teacher_embeddings.shape()) +
                              " and student " + numcore::shape_string(student.shape()) + " view counts differ");
    if (!(tau_student > 0)) throw InvalidArgument("distillation_loss: temperature must be positive");
    const auto teacher = similarity_distribution(teacher_embeddings, tau_teacher);
    Tensor<T> weights = teacher.probabilities;
    for (auto& w : weights.values()) w = -w;
    // exact zeros (underflow) are skipped by weighted_sum, which is the correct limit
    return numcore::weighted_sum(log_similarity(student_embeddings, tau_student), weights);
}

template <class T>
Var<T> combined_loss(std::optional<Var<T>> supervised, std::optional<Var<T>> time_distill,
                     std::optional<Var<T>> reference_distill, const LossWeights& weights, int time_step) {
    std::optional<Var<T>> total = supervised;
    auto accumulate = [&total](Var<T> term, double weight) {
        Var<T> scaled = numcore::scale(term, static_cast<T>(weight));
        total = total ? numcore::add(*total, scaled) : scaled;
    };
    if (time_distill && time_step > 1) accumulate(*time_distill, weights.gamma);
    if (reference_distill) accumulate(*reference_distill, weights.lambda);
    if (!total) throw InvalidArgument("combined_loss: no loss term supplied");
    return *total;
}

#define OSSCL_INSTANTIATE_LOSSES(T)                                                                              \
    template struct ViewBatch<T>;                                                                                \
    template struct SimilarityDistribution<T>;                                                                   \
    template Var<T> ntxent_loss<T>(Var<T>, double);                                                              \
    template Var<T> asym_supcon_loss<T>(Var<T>, const BatchLabels&, double, const SupConOptions&);               \
    template SimilarityDistribution<T> similarity_distribution<T>(const Tensor<T>&, double);                     \
    template Var<T> distillation_loss<T>(const Tensor<T>&, Var<T>, double, double);                              \
    template Var<T> combined_loss<T>(std::optional<Var<T>>, std::optional<Var<T>>, std::optional<Var<T>>,        \
                                     const LossWeights&, int);

OSSCL_INSTANTIATE_LOSSES(float)
OSSCL_INSTANTIATE_LOSSES(double)

#undef OSSCL_INSTANTIATE_LOSSES

}  // namespace osscl::losses
