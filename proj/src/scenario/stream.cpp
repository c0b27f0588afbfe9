#include "osscl/scenario/stream.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "osscl/numcore/rng.hpp"

namespace osscl::scenario {

using numcore::Rng;
using numcore::Shape;

std::string to_string(StreamVariant v) {
    switch (v) {
        case StreamVariant::standard: return "standard";
        case StreamVariant::after: return "after";
        case StreamVariant::before: return "before";
        case StreamVariant::only_related: return "only_related";
        case StreamVariant::only_unrelated: return "only_unrelated";
        case StreamVariant::non_iid: return "non_iid";
    }
    return "?";
}

StreamVariant parse_stream_variant(const std::string& name) {
    for (auto v : {StreamVariant::standard, StreamVariant::after, StreamVariant::before, StreamVariant::only_related,
                   StreamVariant::only_unrelated, StreamVariant::non_iid})
        if (to_string(v) == name) return v;
    throw InvalidArgument("unknown stream variant '" + name + "'");
}

void ScenarioConfig::validate(std::size_t main_classes) const {
    if (tasks == 0 || classes_per_task == 0) throw InvalidArgument("task count and classes per task must be positive");
    if (tasks * classes_per_task > main_classes)
        throw InvalidArgument("tasks x classes_per_task = " + std::to_string(tasks * classes_per_task) +
                              " exceeds the " + std::to_string(main_classes) + " main classes");
    if (!(labeled_fraction > 0) || labeled_fraction > 1) throw InvalidArgument("labeled fraction must be in (0, 1]");
    if (variant == StreamVariant::non_iid && (!(non_iid_fraction > 0) || non_iid_fraction > 1))
        throw InvalidArgument("non-iid fraction must be in (0, 1]");
}

Tensor<float> UnlabeledPool::rows(const std::vector<std::size_t>& which) const {
    Tensor<float> out(Shape{which.size(), x.cols()});
    for (std::size_t i = 0; i < which.size(); ++i) std::copy_n(x.row(which[i]).begin(), x.cols(), out.row(i).begin());
    return out;
}

std::vector<int> Stream::classes_up_to(std::size_t step) const {
    std::vector<int> out;
    for (std::size_t t = 0; t < step && t < task_classes.size(); ++t)
        out.insert(out.end(), task_classes[t].begin(), task_classes[t].end());
    return out;
}

namespace {

// First `count` entries of a seeded shuffle of `pool`.
std::vector<std::size_t> draw(std::vector<std::size_t> pool, std::size_t count, Rng& rng, const std::string& what) {
    if (count > pool.size())
        throw PoolExhausted(what + ": requested " + std::to_string(count) + " samples but only " +
                            std::to_string(pool.size()) + " are available");
    for (std::size_t i = 0; i < count; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    pool.resize(count);
    return pool;
}

}  // namespace

Stream build_stream(const ScenarioConfig& config, const Dataset& main, const std::vector<const Dataset*>& peripherals) {
    config.validate(main.num_classes);
    for (const Dataset* p : peripherals)
        if (p->dim() != main.dim())
            throw InvalidArgument("peripheral '" + p->name + "' has width " + std::to_string(p->dim()) +
                                  " but the main dataset has " + std::to_string(main.dim()));

    Rng rng(config.seed);
    Rng split_rng = rng.fork(1), pool_rng = rng.fork(2);

    std::vector<int> order(main.num_classes);
    std::iota(order.begin(), order.end(), 0);
    split_rng.shuffle(order.begin(), order.end());

    Stream stream;
    std::vector<int> task_of(main.num_classes, -1);
    for (std::size_t t = 0; t < config.tasks; ++t) {
        std::vector<int> cls(order.begin() + t * config.classes_per_task, order.begin() + (t + 1) * config.classes_per_task);
        std::sort(cls.begin(), cls.end());
        for (int c : cls) task_of[c] = static_cast<int>(t);
        stream.task_classes.push_back(std::move(cls));
    }

    // per class: labeled subset and the related remainder
    std::vector<std::vector<std::size_t>> by_class(main.num_classes);
    for (std::size_t i = 0; i < main.train.size(); ++i) by_class[main.train.y[i]].push_back(i);
    std::vector<std::vector<std::size_t>> labeled(main.num_classes), related(main.num_classes);
    for (std::size_t c = 0; c < main.num_classes; ++c) {
        if (task_of[c] < 0) continue;
        auto rows = by_class[c];
        const auto n_lab = static_cast<std::size_t>(std::floor(config.labeled_fraction * rows.size() + 1e-9));
        if (n_lab == 0)
            throw InvalidArgument("class " + std::to_string(c) + " has " + std::to_string(rows.size()) +
                                  " samples; the labeled fraction leaves none labeled");
        split_rng.shuffle(rows.begin(), rows.end());
        labeled[c].assign(rows.begin(), rows.begin() + n_lab);
        std::sort(labeled[c].begin(), labeled[c].end());
        related[c].assign(rows.begin() + n_lab, rows.end());
        std::sort(related[c].begin(), related[c].end());
    }

    std::vector<std::size_t> test_rows;
    for (std::size_t i = 0; i < main.test.size(); ++i)
        if (task_of[main.test.y[i]] >= 0) test_rows.push_back(i);
    stream.test = main.test.subset(test_rows);

    const bool drop_unrelated = config.variant == StreamVariant::after || config.variant == StreamVariant::before ||
                                config.variant == StreamVariant::only_related;
    const std::size_t n_related = config.variant == StreamVariant::only_unrelated ? 0 : config.n_related;
    const std::size_t n_unrelated = drop_unrelated ? 0 : config.n_unrelated;
    const std::size_t streamed = config.tasks * config.classes_per_task;

    for (std::size_t t = 0; t < config.tasks; ++t) {
        StreamStep step;
        step.step = t + 1;
        step.classes = stream.task_classes[t];

        std::vector<std::size_t> lab_rows;
        for (int c : step.classes) lab_rows.insert(lab_rows.end(), labeled[c].begin(), labeled[c].end());
        step.labeled = main.train.subset(lab_rows);

        std::vector<int> eligible;
        for (std::size_t c = 0; c < main.num_classes; ++c) {
            const int task = task_of[c];
            if (task < 0) continue;
            if (config.variant == StreamVariant::after && task < static_cast<int>(t)) continue;
            if (config.variant == StreamVariant::before && task > static_cast<int>(t)) continue;
            eligible.push_back(static_cast<int>(c));
        }
        if (config.variant == StreamVariant::non_iid) {
            const auto keep = static_cast<std::size_t>(std::ceil(config.non_iid_fraction * streamed - 1e-9));
            pool_rng.shuffle(eligible.begin(), eligible.end());
            eligible.resize(std::max<std::size_t>(1, std::min(keep, eligible.size())));
            std::sort(eligible.begin(), eligible.end());
        }

        std::vector<std::size_t> related_pool;
        for (int c : eligible) related_pool.insert(related_pool.end(), related[c].begin(), related[c].end());

        struct Pick {
            const Dataset* from;
            std::size_t row;
            SampleOrigin origin;
        };
        std::vector<Pick> picks;
        for (std::size_t r : draw(related_pool, n_related, pool_rng, "related pool at step " + std::to_string(t + 1)))
            picks.push_back({&main, r, SampleOrigin{true, main.train.y[r], 0}});
        for (std::size_t p = 0; p < peripherals.size(); ++p) {
            std::vector<std::size_t> all(peripherals[p]->train.size());
            std::iota(all.begin(), all.end(), 0);
            for (std::size_t r : draw(std::move(all), n_unrelated, pool_rng,
                                      "peripheral '" + peripherals[p]->name + "' at step " + std::to_string(t + 1)))
                picks.push_back({peripherals[p], r, SampleOrigin{false, -1, p + 1}});
        }
        pool_rng.shuffle(picks.begin(), picks.end());

        std::vector<float> values;
        values.reserve(picks.size() * main.dim());
        std::vector<SampleOrigin> origins;
        for (const auto& pick : picks) {
            auto row = pick.from->train.x.row(pick.row);
            values.insert(values.end(), row.begin(), row.end());
            step.unlabeled.ids.push_back(pick.from->train.ids[pick.row]);
            origins.push_back(pick.origin);
        }
        step.unlabeled.x = Tensor<float>(Shape{picks.size(), main.dim()}, std::move(values));
        step.unlabeled.provenance = SealedProvenance(std::move(origins));
        stream.steps.push_back(std::move(step));
    }
    return stream;
}

}  // namespace osscl::scenario
