#include "osscl/trainer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "osscl/numcore/schedule.hpp"

namespace osscl::trainer {

using numcore::Rng;
using numcore::Shape;
using numcore::Tape;
using numcore::Var;
using scenario::TrainingPool;

std::string to_string(Method m) {
    switch (m) {
        case Method::ursl: return "ursl";
        case Method::co2l: return "co2l";
        case Method::co2l_j: return "co2l_j";
        case Method::co2l_p: return "co2l_p";
    }
    return "?";
}

Method parse_method(const std::string& name) {
    for (auto m : {Method::ursl, Method::co2l, Method::co2l_j, Method::co2l_p})
        if (to_string(m) == name) return m;
    throw InvalidArgument("unknown method '" + name + "'");
}

std::string to_string(SegregationVariant v) {
    switch (v) {
        case SegregationVariant::v1: return "v1";
        case SegregationVariant::v2: return "v2";
        case SegregationVariant::v3: return "v3";
        case SegregationVariant::v4: return "v4";
    }
    return "?";
}

SegregationVariant parse_segregation_variant(const std::string& name) {
    for (auto v : {SegregationVariant::v1, SegregationVariant::v2, SegregationVariant::v3, SegregationVariant::v4})
        if (to_string(v) == name) return v;
    throw InvalidArgument("unknown segregation variant '" + name + "'");
}

void MethodConfig::validate() const {
    weights.validate();
    if (!use_sup && !use_td && !kd_active() && method != Method::co2l_j)
        throw InvalidArgument("at least one learner loss must be enabled");
    if (batch_size == 0 || classifier_batch == 0) throw InvalidArgument("batch sizes must be positive");
    if (prototype_views == 0) throw InvalidArgument("prototype_views must be positive");
    if (!(learning_rate > 0) || min_learning_rate < 0 || min_learning_rate > learning_rate)
        throw InvalidArgument("learning rates must satisfy 0 <= min <= initial, initial > 0");
    if (!(classifier_learning_rate > 0)) throw InvalidArgument("classifier learning rate must be positive");
    if (memory_policy != scenario::MemoryPolicy::random && !uses_segregation())
        throw InvalidArgument("confidence-based memory policies need the reference network (method ursl)");
    if (pretrain_reference && method != Method::ursl) throw InvalidArgument("pretrain_reference applies to ursl only");
}

namespace {

constexpr std::uint64_t kReferenceInit = 0x5245464552454e43ULL;
constexpr std::uint64_t kLearnerInit = 0x4c4541524e455221ULL;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// Rows 2k and 2k+1 are two independent augmentations of x[rows[k]].
Tensor<float> paired_views(const Tensor<float>& x, const std::vector<std::size_t>& rows,
                           const scenario::Augmenter& augmenter, Rng& rng) {
    const std::size_t d = x.cols();
    Tensor<float> out(Shape{2 * rows.size(), d});
    for (std::size_t k = 0; k < rows.size(); ++k)
        for (std::size_t v = 0; v < 2; ++v) augmenter.apply(x.row(rows[k]), out.row(2 * k + v), rng);
    return out;
}

// Endless sequence of batches over [0, n), reshuffled after every pass.
class BatchCursor {
public:
    BatchCursor(std::size_t n, std::size_t batch, Rng rng) : n_(n), batch_(batch), rng_(std::move(rng)) {}

    std::vector<std::size_t> next() {
        if (pending_.empty()) {
            auto batches = scenario::epoch_batches(n_, batch_, rng_);
            pending_.assign(batches.rbegin(), batches.rend());
        }
        auto out = std::move(pending_.back());
        pending_.pop_back();
        return out;
    }

private:
    std::size_t n_, batch_;
    Rng rng_;
    std::vector<std::vector<std::size_t>> pending_;
};

void apply_gradients(nets::EncoderProjector<float>& net, const nets::BoundNetwork<float>& bound,
                     const numcore::Gradients<float>& grads, numcore::AdamState<float>& adam) {
    std::vector<Tensor<float>> g;
    g.reserve(bound.parameter_vars().size());
    for (auto v : bound.parameter_vars()) g.push_back(grads.of(v));
    numcore::adam_step(adam, net.parameters(), g);
}

double epoch_lr(const MethodConfig& config, std::size_t epoch, std::size_t epochs) {
    return numcore::cosine_lr_at({config.learning_rate, config.min_learning_rate, static_cast<int>(epochs)},
                                 static_cast<int>(epoch));
}

LabeledSet union_of(const LabeledSet& a, const LabeledSet& b) {
    TrainingPool pool;
    pool.add(a, false);
    pool.add(b, false);
    return pool.samples;
}

Tensor<float> embed_rows(const nets::EncoderProjector<float>& net, const Tensor<float>& x) {
    return x.rows() == 0 ? Tensor<float>(Shape{0, net.architecture().embed_dim}) : nets::embed(net, x);
}

}  // namespace

RunState::RunState(const nets::Architecture& arch, const MethodConfig& config, std::uint64_t s)
    : reference(arch, numcore::Rng::mix(s ^ kReferenceInit)),
      learner(arch, numcore::Rng::mix(s ^ kLearnerInit)),
      memory{config.memory_capacity, config.memory_policy, {}},
      seed(s),
      reference_enabled(config.trains_reference()) {}

Rng phase_rng(std::uint64_t seed, std::size_t step, Phase phase) {
    return Rng(seed).fork((static_cast<std::uint64_t>(step) << 8) | static_cast<std::uint64_t>(phase));
}

std::vector<double> train_reference(nets::EncoderProjector<float>& reference, const Tensor<float>& unlabeled,
                                    std::size_t epochs, const scenario::Augmenter& augmenter,
                                    const MethodConfig& config, Rng& rng) {
    std::vector<double> curve;
    if (epochs == 0) return curve;
    if (unlabeled.rows() == 0) throw InvalidArgument("reference training needs a non-empty unlabeled pool");
    numcore::AdamState<float> adam({config.learning_rate}, reference.parameters());
    for (std::size_t e = 0; e < epochs; ++e) {
        adam.hyper.learning_rate = epoch_lr(config, e, epochs);
        double total = 0;
        std::size_t count = 0;
        for (const auto& batch : scenario::epoch_batches(unlabeled.rows(), config.batch_size, rng)) {
            Tape<float> tape;
            nets::BoundNetwork<float> bound(reference, tape, true);
            auto z = bound.embed(tape.constant(paired_views(unlabeled, batch, augmenter, rng)));
            auto loss = losses::ntxent_loss(z, config.weights.tau);
            apply_gradients(reference, bound, tape.backward(loss), adam);
            total += loss.value().item();
            ++count;
        }
        curve.push_back(total / static_cast<double>(count));
    }
    return curve;
}

SegregationResult segregate_step(const nets::EncoderProjector<float>& reference, const LabeledSet& labeled,
                                 const scenario::UnlabeledPool& pool, const scenario::Augmenter& augmenter,
                                 const MethodConfig& config, Rng& rng) {
    std::vector<int> observed(labeled.y.begin(), labeled.y.end());
    std::sort(observed.begin(), observed.end());
    observed.erase(std::unique(observed.begin(), observed.end()), observed.end());
    SegregationResult r;
    r.prototypes = segregate::build_prototypes(reference, labeled, observed, augmenter, config.prototype_views, rng);
    const auto scores = segregate::embedding_scores(r.prototypes, embed_rows(reference, labeled.x));
    r.stats = segregate::compute_thresholds(scores, config.eta_id, config.eta_pl, config.spread);
    r.output = segregate::segregate(reference, r.prototypes, r.stats, pool);
    return r;
}

std::vector<double> train_learner_task(RunState& state, const LearnerInputs& in, const scenario::Augmenter& augmenter,
                                       const MethodConfig& config, Rng& rng) {
    if (!in.current || !in.memory) throw InvalidArgument("learner training needs the current task and the memory");
    const bool segregated = config.uses_segregation() && in.segregation && in.unlabeled;
    const bool with_pseudo = segregated && (config.variant == SegregationVariant::v3 || config.variant == SegregationVariant::v4);
    const bool kd_in_only = config.variant == SegregationVariant::v2 || config.variant == SegregationVariant::v4;
    const bool kd = config.kd_active() && in.reference && in.unlabeled;
    const bool unsup = config.method == Method::co2l_j && in.unlabeled && in.unlabeled->size() > 0;
    if (config.kd_active() && !kd) throw InvalidArgument("reference distillation needs the reference network and U_t");

    TrainingPool sup;
    sup.add(*in.current, false);
    sup.add(*in.memory, false);
    if (with_pseudo) {
        LabeledSet pseudo(in.unlabeled->x.cols());
        for (const auto& p : in.segregation->pseudo_labeled)
            pseudo.append_row(in.unlabeled->x.row(p.index), p.label, in.unlabeled->ids[p.index]);
        sup.add(pseudo, true);
    }
    if (sup.size() == 0) throw InvalidArgument("supervised training union is empty");

    LabeledSet kd_pool;
    if (kd) {
        kd_pool = union_of(*in.current, *in.memory);
        LabeledSet extra(in.unlabeled->x.cols());
        if (segregated && kd_in_only) {
            for (std::size_t i : in.segregation->in_distribution)
                extra.append_row(in.unlabeled->x.row(i), -1, in.unlabeled->ids[i]);
        } else {
            for (std::size_t i = 0; i < in.unlabeled->size(); ++i)
                extra.append_row(in.unlabeled->x.row(i), -1, in.unlabeled->ids[i]);
        }
        kd_pool = union_of(kd_pool, extra);
    }

    const std::size_t t = state.step + 1;
    const bool td = config.use_td && t > 1 && state.previous_learner.has_value();
    if (!config.use_sup && !td && !kd && !unsup) return {};

    BatchCursor kd_batches(kd_pool.size(), config.batch_size, rng.fork(11));
    BatchCursor unsup_batches(in.unlabeled ? in.unlabeled->size() : 0, config.batch_size, rng.fork(12));

    losses::BatchLabels labels;
    labels.current_classes = {in.current->y.begin(), in.current->y.end()};
    std::sort(labels.current_classes.begin(), labels.current_classes.end());
    labels.current_classes.erase(std::unique(labels.current_classes.begin(), labels.current_classes.end()),
                                 labels.current_classes.end());

    const auto& w = config.weights;
    numcore::AdamState<float> adam({config.learning_rate}, state.learner.parameters());
    std::vector<double> step_losses;
    for (std::size_t e = 0; e < config.learner_epochs; ++e) {
        adam.hyper.learning_rate = epoch_lr(config, e, config.learner_epochs);
        for (const auto& batch : scenario::epoch_batches(sup.size(), config.batch_size, rng)) {
            Tape<float> tape;
            nets::BoundNetwork<float> bound(state.learner, tape, true);
            const Tensor<float> views = paired_views(sup.samples.x, batch, augmenter, rng);
            auto z = bound.embed(tape.constant(views));

            std::optional<Var<float>> sup_term, td_term, kd_term;
            if (config.use_sup) {
                labels.labels.clear();
                labels.pseudo_flags.clear();
                for (std::size_t i : batch) {
                    labels.labels.push_back(sup.samples.y[i]);
                    labels.pseudo_flags.push_back(sup.pseudo[i]);
                }
                sup_term = losses::asym_supcon_loss(z, labels, w.tau, config.supcon);
            }
            if (td) td_term = losses::distillation_loss(state.previous_learner->embed(views), z, w.tau_teacher, w.tau_student);
            if (kd) {
                const Tensor<float> kd_views = paired_views(kd_pool.x, kd_batches.next(), augmenter, rng);
                auto zk = bound.embed(tape.constant(kd_views));
                kd_term = losses::distillation_loss(nets::embed(*in.reference, kd_views), zk, w.tau_teacher, w.tau_student);
            }
            std::optional<Var<float>> total;
            if (sup_term || td_term || kd_term) total = losses::combined_loss<float>(sup_term, td_term, kd_term, w, static_cast<int>(t));
            if (unsup) {
                const Tensor<float> u_views = paired_views(in.unlabeled->x, unsup_batches.next(), augmenter, rng);
                auto u_term = numcore::scale(losses::ntxent_loss(bound.embed(tape.constant(u_views)), w.tau),
                                             static_cast<float>(config.unsupervised_weight));
                total = total ? numcore::add(*total, u_term) : u_term;
            }
            apply_gradients(state.learner, bound, tape.backward(*total), adam);
            step_losses.push_back(total->value().item());
        }
    }
    return step_losses;
}

std::vector<double> inverse_frequency_weights(const std::vector<int>& labels) {
    std::vector<std::size_t> counts;
    for (int y : labels) {
        if (y < 0) throw InvalidArgument("negative class label in classifier data");
        if (static_cast<std::size_t>(y) >= counts.size()) counts.resize(y + 1, 0);
        ++counts[y];
    }
    std::vector<double> w;
    w.reserve(labels.size());
    for (int y : labels) w.push_back(1.0 / static_cast<double>(counts[y]));
    return w;
}

nets::LinearClassifier<float> fit_classifier(const nets::EncoderProjector<float>& learner, const LabeledSet& data,
                                             std::size_t num_classes, const std::vector<int>& required_classes,
                                             const MethodConfig& config, Rng& rng) {
    std::unordered_set<int> present(data.y.begin(), data.y.end());
    for (int c : required_classes)
        if (!present.count(c)) throw InvalidArgument("classifier data has no sample of class " + std::to_string(c));
    for (int y : data.y)
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw InvalidArgument("class label " + std::to_string(y) + " outside the classifier's range");

    const Tensor<float> features = nets::encoder_features(learner, data.x);
    nets::LinearClassifier<float> head(learner.feature_dim(), num_classes);
    std::vector<Tensor<float>> params{head.weight, head.bias};
    numcore::AdamState<float> adam({config.classifier_learning_rate}, params);

    const auto weights = inverse_frequency_weights(data.y);
    std::vector<double> cumulative(weights.size());
    std::partial_sum(weights.begin(), weights.end(), cumulative.begin());
    const std::size_t n = data.size(), f = features.cols();

    for (std::size_t e = 0; e < config.classifier_epochs; ++e) {
        std::vector<std::size_t> draws(n);
        for (auto& d : draws) {
            const double u = rng.uniform() * cumulative.back();
            d = std::min<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin(), n - 1);
        }
        for (std::size_t start = 0; start < n; start += config.classifier_batch) {
            const std::size_t m = std::min(config.classifier_batch, n - start);
            Tensor<float> xb(Shape{m, f});
            Tensor<float> target(Shape{m, num_classes}, 0.0f);
            for (std::size_t k = 0; k < m; ++k) {
                const std::size_t r = draws[start + k];
                std::copy_n(features.row(r).begin(), f, xb.row(k).begin());
                target(k, static_cast<std::size_t>(data.y[r])) = -1.0f / static_cast<float>(m);
            }
            Tape<float> tape;
            auto wv = tape.variable(params[0]);
            auto bv = tape.variable(params[1]);
            auto logits = numcore::affine(tape.constant(std::move(xb)), wv, bv);
            auto loss = numcore::weighted_sum(numcore::row_log_softmax(logits, numcore::Mask::none(m, num_classes)), target);
            auto grads = tape.backward(loss);
            numcore::adam_step(adam, params, std::vector<Tensor<float>>{grads.of(wv), grads.of(bv)});
        }
    }
    head.weight = params[0];
    head.bias = params[1];
    return head;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
    if (predicted.size() != truth.size()) throw ShapeError("prediction and label counts differ");
    if (truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

Evaluation evaluate(const nets::LinearClassifier<float>& head, const nets::EncoderProjector<float>& learner,
                    const LabeledSet& test, const std::vector<std::vector<int>>& task_classes) {
    Evaluation ev;
    if (test.empty()) return ev;
    const auto predicted = nets::predict(head, nets::encoder_features(learner, test.x));
    ev.accuracy = accuracy(predicted, test.y);
    for (const auto& classes : task_classes) {
        std::vector<int> p, y;
        for (std::size_t i = 0; i < test.size(); ++i)
            if (std::find(classes.begin(), classes.end(), test.y[i]) != classes.end()) {
                p.push_back(predicted[i]);
                y.push_back(test.y[i]);
            }
        ev.per_task.push_back(accuracy(p, y));
    }
    return ev;
}

namespace {

std::vector<double> epoch_means(const std::vector<double>& steps, std::size_t epochs) {
    std::vector<double> out;
    if (epochs == 0 || steps.empty()) return out;
    const std::size_t per = steps.size() / epochs;
    for (std::size_t e = 0; e < epochs && per > 0; ++e) {
        double s = 0;
        for (std::size_t k = 0; k < per; ++k) s += steps[e * per + k];
        out.push_back(s / static_cast<double>(per));
    }
    return out;
}


void pretrain_if_requested(RunState& state, const MethodConfig& config, const nets::Architecture& arch,
                           const scenario::Stream& stream, const scenario::Augmenter& augmenter) {
    if (!config.pretrain_reference) return;
    std::vector<float> values;
    std::size_t rows = 0;
    for (const auto& s : stream.steps) {
        values.insert(values.end(), s.unlabeled.x.values().begin(), s.unlabeled.x.values().end());
        rows += s.unlabeled.size();
    }
    const Tensor<float> all(Shape{rows, arch.input_dim}, std::move(values));
    Rng rng = phase_rng(state.seed, 0, Phase::pretrain);
    train_reference(state.reference, all, config.reference_epochs_first, augmenter, config, rng);
    state.reference_enabled = false;
}

std::vector<double> reference_phase(RunState& state, const scenario::StreamStep& step, const MethodConfig& config,
                                    const scenario::Augmenter& augmenter) {
    if (!state.reference_enabled) return {};
    const std::size_t t = state.step + 1;
    Rng rng = phase_rng(state.seed, t, Phase::reference);
    const std::size_t epochs = t == 1 ? config.reference_epochs_first : config.reference_epochs_later;
    return train_reference(state.reference, step.unlabeled.x, epochs, augmenter, config, rng);
}

SegregationResult segregation_phase(const RunState& state, const scenario::StreamStep& step,
                                    const MethodConfig& config, const scenario::Augmenter& augmenter) {
    Rng rng = phase_rng(state.seed, state.step + 1, Phase::prototypes);
    return segregate_step(state.reference, union_of(step.labeled, state.memory.items), step.unlabeled, augmenter,
                          config, rng);
}

void memory_phase(RunState& state, const scenario::StreamStep& step, const SegregationResult* seg) {
    scenario::ConfidenceFn confidence;
    if (seg) {
        confidence = [&](const Tensor<float>& x) {
            return segregate::embedding_scores(seg->prototypes, embed_rows(state.reference, x));
        };
    }
    Rng rng = phase_rng(state.seed, state.step + 1, Phase::memory);
    scenario::memory_update(state.memory, step.labeled, confidence, rng);
}

}  // namespace

RunReport run_continual(const MethodConfig& config, const nets::Architecture& arch, const scenario::Stream& stream,
                        const scenario::Augmenter& augmenter, std::size_t num_classes, std::uint64_t seed,
                        const StepObserver& observer) {
    config.validate();
    if (stream.steps.empty()) throw InvalidArgument("cannot run on an empty stream");

    RunState state(arch, config, seed);
    RunReport report;
    report.method = to_string(config.method);
    report.seed = seed;

    auto start = Clock::now();
    pretrain_if_requested(state, config, arch, stream, augmenter);
    report.seconds.reference += seconds_since(start);

    for (const auto& step : stream.steps) {
        const std::size_t t = state.step + 1;
        TaskRecord rec;
        rec.step = t;
        rec.classes = step.classes;
        rec.unlabeled = step.unlabeled.size();

        start = Clock::now();
        rec.reference_losses = reference_phase(state, step, config, augmenter);
        if (config.method == Method::co2l_p && state.reference_enabled) {
            state.learner = state.reference;
            state.reference_enabled = false;
        }
        report.seconds.reference += seconds_since(start);

        start = Clock::now();
        std::optional<SegregationResult> seg;
        if (config.uses_segregation()) {
            seg = segregation_phase(state, step, config, augmenter);
            rec.ood = segregate::ood_metrics(seg->output, step.unlabeled);
            rec.in_distribution = seg->output.in_distribution.size();
            rec.pseudo_labeled = seg->output.pseudo_labeled.size();
            rec.thresholds = seg->stats;
            rec.thresholds->labeled_scores.clear();
        }
        report.seconds.segregation += seconds_since(start);

        start = Clock::now();
        state.previous_learner = nets::snapshot(state.learner);
        LearnerInputs inputs{&step.labeled, &state.memory.items, &step.unlabeled, seg ? &seg->output : nullptr,
                             config.kd_active() ? &state.reference : nullptr};
        Rng learner_rng = phase_rng(seed, t, Phase::learner);
        rec.learner_step_losses = train_learner_task(state, inputs, augmenter, config, learner_rng);
        rec.learner_losses = epoch_means(rec.learner_step_losses, config.learner_epochs);
        report.seconds.learner += seconds_since(start);

        start = Clock::now();
        memory_phase(state, step, seg ? &*seg : nullptr);
        rec.memory_size = state.memory.size();
        report.seconds.memory += seconds_since(start);

        state.step = t;
        if (observer) observer(state, rec);
        report.tasks.push_back(std::move(rec));
    }

    start = Clock::now();
    const LabeledSet final_data = union_of(stream.steps.back().labeled, state.memory.items);
    Rng head_rng = phase_rng(seed, stream.steps.size() + 1, Phase::classifier);
    const auto head = fit_classifier(state.learner, final_data, num_classes, stream.classes_up_to(stream.steps.size()),
                                     config, head_rng);
    const auto ev = evaluate(head, state.learner, stream.test, stream.task_classes);
    report.final_accuracy = ev.accuracy;
    for (std::size_t i = 0; i < report.tasks.size() && i < ev.per_task.size(); ++i) report.tasks[i].accuracy = ev.per_task[i];
    report.seconds.classifier += seconds_since(start);
    return report;
}

std::vector<SegregationStep> run_segregation_only(const MethodConfig& config, const nets::Architecture& arch,
                                                  const scenario::Stream& stream, const scenario::Augmenter& augmenter,
                                                  std::uint64_t seed) {
    config.validate();
    if (!config.uses_segregation()) throw InvalidArgument("segregation needs the reference network (method ursl)");
    RunState state(arch, config, seed);
    pretrain_if_requested(state, config, arch, stream, augmenter);
    std::vector<SegregationStep> out;
    for (const auto& step : stream.steps) {
        SegregationStep rec;
        rec.step = state.step + 1;
        rec.reference_losses = reference_phase(state, step, config, augmenter);
        rec.result = segregation_phase(state, step, config, augmenter);
        rec.ood = segregate::ood_metrics(rec.result.output, step.unlabeled);
        memory_phase(state, step, &rec.result);
        state.step = rec.step;
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace osscl::trainer
