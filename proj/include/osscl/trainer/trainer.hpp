#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "osscl/losses/losses.hpp"
#include "osscl/nets/classifier.hpp"
#include "osscl/nets/encoder_projector.hpp"
#include "osscl/numcore/adam.hpp"
#include "osscl/numcore/rng.hpp"
#include "osscl/scenario/augment.hpp"
#include "osscl/scenario/memory.hpp"
#include "osscl/scenario/stream.hpp"
#include "osscl/segregate/segregate.hpp"

namespace osscl::trainer {

using numcore::Tensor;
using scenario::LabeledSet;

enum class Method { ursl, co2l, co2l_j, co2l_p };

// Data sources of the two learner batches:
//   v1 = (T u M ; T u M u U)        v2 = (T u M ; T u M u U_in)
//   v3 = (T u M u T_pl ; T u M u U) v4 = (T u M u T_pl ; T u M u U_in)
// where U_in is the in-distribution subset and T_pl the pseudo-labeled subset.
enum class SegregationVariant { v1, v2, v3, v4 };

std::string to_string(Method m);
Method parse_method(const std::string& name);
std::string to_string(SegregationVariant v);
SegregationVariant parse_segregation_variant(const std::string& name);

struct MethodConfig {
    Method method = Method::ursl;
    bool use_sup = true;
    bool use_td = true;
    bool use_kd = true;
    SegregationVariant variant = SegregationVariant::v4;
    bool pretrain_reference = false;
    losses::SupConOptions supcon;
    losses::LossWeights weights;
    double eta_id = -4.0;
    double eta_pl = -2.0;
    segregate::ThresholdSpread spread = segregate::ThresholdSpread::variance;
    std::size_t prototype_views = 2;

    std::size_t reference_epochs_first = 100;
    std::size_t reference_epochs_later = 25;
    std::size_t learner_epochs = 50;
    std::size_t batch_size = 128;
    double learning_rate = 0.01;
    double min_learning_rate = 1e-4;
    double unsupervised_weight = 1.0;  // co2l_j only

    std::size_t memory_capacity = 48;
    scenario::MemoryPolicy memory_policy = scenario::MemoryPolicy::random;

    std::size_t classifier_epochs = 100;
    std::size_t classifier_batch = 32;
    double classifier_learning_rate = 1e-3;

    // Throws InvalidArgument on contradictory settings.
    void validate() const;

    bool trains_reference() const { return method == Method::ursl || method == Method::co2l_p; }
    bool uses_segregation() const { return method == Method::ursl; }
    bool kd_active() const { return method == Method::ursl && use_kd; }
};

struct RunState {
    nets::EncoderProjector<float> reference;
    nets::EncoderProjector<float> learner;
    std::optional<nets::ParamSnapshot<float>> previous_learner;
    scenario::MemoryBuffer memory;
    std::size_t step = 0;
    std::uint64_t seed = 0;
    bool reference_enabled = true;

    RunState(const nets::Architecture& arch, const MethodConfig& config, std::uint64_t seed);
};

// Independent random stream for one phase of one step.
enum class Phase : std::uint64_t { reference = 1, learner = 2, prototypes = 3, memory = 4, classifier = 5, pretrain = 6 };
numcore::Rng phase_rng(std::uint64_t seed, std::size_t step, Phase phase);

struct PhaseTimes {
    double reference = 0, segregation = 0, learner = 0, memory = 0, classifier = 0;
};

struct TaskRecord {
    std::size_t step = 0;
    std::vector<int> classes;
    double accuracy = 0.0;  // final-model accuracy on this task's classes
    std::size_t unlabeled = 0;
    std::size_t in_distribution = 0;
    std::size_t pseudo_labeled = 0;
    std::optional<segregate::OodMetrics> ood;
    std::optional<segregate::ScoreStats> thresholds;  // labeled_scores cleared
    std::vector<double> reference_losses;  // mean per epoch
    std::vector<double> learner_losses;    // mean per epoch
    std::vector<double> learner_step_losses;
    std::size_t memory_size = 0;
};

struct RunReport {
    std::string method;
    std::uint64_t seed = 0;
    double final_accuracy = 0.0;
    std::vector<TaskRecord> tasks;
    PhaseTimes seconds;
};

// Mean NT-Xent per epoch.
std::vector<double> train_reference(nets::EncoderProjector<float>& reference, const Tensor<float>& unlabeled,
                                    std::size_t epochs, const scenario::Augmenter& augmenter,
                                    const MethodConfig& config, numcore::Rng& rng);

// Outcome of prototype scoring at one step.
struct SegregationResult {
    segregate::PrototypeSet prototypes;
    segregate::ScoreStats stats;
    segregate::SegregationOutput output;
};

SegregationResult segregate_step(const nets::EncoderProjector<float>& reference, const LabeledSet& labeled,
                                 const scenario::UnlabeledPool& pool, const scenario::Augmenter& augmenter,
                                 const MethodConfig& config, numcore::Rng& rng);

struct LearnerInputs {
    const LabeledSet* current = nullptr;                    // T_t
    const LabeledSet* memory = nullptr;                     // M
    const scenario::UnlabeledPool* unlabeled = nullptr;     // U_t
    const segregate::SegregationOutput* segregation = nullptr;
    const nets::EncoderProjector<float>* reference = nullptr;  // KD teacher
};

// Per-step training losses of the learner for one time step.
std::vector<double> train_learner_task(RunState& state, const LearnerInputs& inputs, const scenario::Augmenter& augmenter,
                                       const MethodConfig& config, numcore::Rng& rng);

// Linear head over `num_classes` outputs on frozen encoder features, trained
// with class-balanced sampling. Throws InvalidArgument when a class of
// `required_classes` has no sample in `data`.
nets::LinearClassifier<float> fit_classifier(const nets::EncoderProjector<float>& learner, const LabeledSet& data,
                                             std::size_t num_classes, const std::vector<int>& required_classes,
                                             const MethodConfig& config, numcore::Rng& rng);

// Sampling weight per row: inverse frequency of its class.
std::vector<double> inverse_frequency_weights(const std::vector<int>& labels);

struct Evaluation {
    double accuracy = 0.0;
    std::vector<double> per_task;
};

Evaluation evaluate(const nets::LinearClassifier<float>& head, const nets::EncoderProjector<float>& learner,
                    const LabeledSet& test, const std::vector<std::vector<int>>& task_classes);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);

// Optional hook after every time step (used by tests to inspect state).
using StepObserver = std::function<void(const RunState&, const TaskRecord&)>;

RunReport run_continual(const MethodConfig& config, const nets::Architecture& arch, const scenario::Stream& stream,
                        const scenario::Augmenter& augmenter, std::size_t num_classes, std::uint64_t seed,
                        const StepObserver& observer = {});

// Reference training, segregation and memory updates without a learner.
// Phases draw from the same random streams as run_continual, so the
// segregation outputs equal those of a full run with the same seed.
struct SegregationStep {
    std::size_t step = 0;
    SegregationResult result;
    segregate::OodMetrics ood;
    std::vector<double> reference_losses;
};

std::vector<SegregationStep> run_segregation_only(const MethodConfig& config, const nets::Architecture& arch,
                                                  const scenario::Stream& stream, const scenario::Augmenter& augmenter,
                                                  std::uint64_t seed);

}  // namespace osscl::trainer
