#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "osscl/numcore/ops.hpp"
#include "osscl/numcore/tape.hpp"

namespace osscl::losses {

using numcore::Tensor;
using numcore::Var;

// Temperatures and term weights of the learner objective.
struct LossWeights {
    double tau = 0.1;           // contrastive temperature
    double tau_teacher = 0.01;  // teacher side of the distillation terms
    double tau_student = 0.2;   // student side of the distillation terms
    double gamma = 0.2;         // time-distillation weight
    double lambda = 0.2;        // reference-distillation weight

    void validate() const;
};

// Per-source supervision for a batch of paired views. Sources are indexed
// k = 0..N-1; their views are rows 2k and 2k+1.
struct BatchLabels {
    std::vector<int> labels;
    std::vector<bool> pseudo_flags;    // empty = no pseudo-labeled sources
    std::vector<int> current_classes;  // classes introduced at the current step

    std::size_t source_count() const { return labels.size(); }
    bool is_pseudo(std::size_t source) const { return !pseudo_flags.empty() && pseudo_flags[source]; }
    bool is_current(int label) const;
};

// Augmented views of N sources. Rows 2k and 2k+1 are the two views of source k.
template <class T>
struct ViewBatch {
    Tensor<T> views;
    std::optional<BatchLabels> labels;

    std::size_t view_count() const { return views.rows(); }
    std::size_t source_count() const { return views.rows() / 2; }
    // Throws InvalidArgument when the row count is odd or label lengths differ from N.
    void validate() const;
};

// Index of the other view of the same source.
inline std::size_t twin_view(std::size_t view) { return view ^ std::size_t{1}; }

struct SupConOptions {
    bool pseudo_anchor = false;   // pseudo-labeled views may act as anchors
    bool pseudo_positive = true;  // pseudo-labeled views may be positives
};

// Normalized temperature-scaled cross entropy over paired unit embeddings
// [2N x d], averaged over all 2N views; self-similarity is excluded.
template <class T>
Var<T> ntxent_loss(Var<T> embeddings, double tau);

// Asymmetric supervised contrastive loss. Anchors are views labeled with a
// current class; an anchor's positives are the other views with its label.
// Anchors without positives contribute zero; the sum is divided by 2N.
template <class T>
Var<T> asym_supcon_loss(Var<T> embeddings, const BatchLabels& labels, double tau, const SupConOptions& options = {});

// Row i holds p_{i,j} = softmax_j(z_i . z_j / tau) over j != i; the
// diagonal is zero.
template <class T>
struct SimilarityDistribution {
    Tensor<T> probabilities;  // [2N x 2N]

    // The 2N-1 probabilities of view i, in view order, self omitted.
    std::vector<T> of_view(std::size_t i) const;
};

template <class T>
SimilarityDistribution<T> similarity_distribution(const Tensor<T>& embeddings, double tau);

// sum_i -p(i; teacher, tau_teacher) . log p(i; student, tau_student).
// The teacher side is constant; gradients reach the student only.
template <class T>
Var<T> distillation_loss(const Tensor<T>& teacher_embeddings, Var<T> student_embeddings, double tau_teacher,
                         double tau_student);

// L = L_sup + gamma * L_TD + lambda * L_KD with absent terms contributing 0.
// The time-distillation term is dropped at time_step <= 1.
template <class T>
Var<T> combined_loss(std::optional<Var<T>> supervised, std::optional<Var<T>> time_distill,
                     std::optional<Var<T>> reference_distill, const LossWeights& weights, int time_step);

}  // namespace osscl::losses
