#include "osscl/scenario/memory.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_set>

namespace osscl::scenario {

std::string to_string(MemoryPolicy p) {
    switch (p) {
        case MemoryPolicy::random: return "random";
        case MemoryPolicy::low_confidence: return "low_confidence";
        case MemoryPolicy::high_confidence: return "high_confidence";
        case MemoryPolicy::rainbow: return "rainbow";
    }
    return "?";
}

MemoryPolicy parse_memory_policy(const std::string& name) {
    for (auto p : {MemoryPolicy::random, MemoryPolicy::low_confidence, MemoryPolicy::high_confidence, MemoryPolicy::rainbow})
        if (to_string(p) == name) return p;
    throw InvalidArgument("unknown memory policy '" + name + "'");
}

std::vector<int> MemoryBuffer::classes() const {
    std::vector<int> out(items.y.begin(), items.y.end());
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::size_t MemoryBuffer::count_of(int label) const {
    return static_cast<std::size_t>(std::count(items.y.begin(), items.y.end(), label));
}

std::vector<std::size_t> class_quotas(std::size_t capacity, std::size_t n_classes) {
    if (n_classes == 0) return {};
    std::vector<std::size_t> q(n_classes, capacity / n_classes);
    for (std::size_t i = 0; i < capacity % n_classes; ++i) ++q[i];
    return q;
}

namespace {

// Positions (into `candidates`) to keep, in ascending candidate order.
std::vector<std::size_t> select(MemoryPolicy policy, std::size_t n, std::size_t quota, const std::vector<double>& conf,
                                numcore::Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (quota >= n) return idx;
    if (policy == MemoryPolicy::random) {
        for (std::size_t i = 0; i < quota; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
        idx.resize(quota);
    } else {
        std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return conf[a] < conf[b]; });
        std::vector<std::size_t> keep;
        if (policy == MemoryPolicy::low_confidence) {
            keep.assign(idx.begin(), idx.begin() + quota);
        } else if (policy == MemoryPolicy::high_confidence) {
            keep.assign(idx.end() - quota, idx.end());
        } else {
            // evenly spaced ranks across the whole confidence range
            for (std::size_t i = 0; i < quota; ++i) keep.push_back(idx[(2 * i + 1) * n / (2 * quota)]);
        }
        idx = std::move(keep);
    }
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

void memory_update(MemoryBuffer& buffer, const LabeledSet& incoming, const ConfidenceFn& confidence, numcore::Rng& rng) {
    if (buffer.capacity == 0) return;
    LabeledSet pool = buffer.items;
    pool.append(incoming);

    std::map<int, std::vector<std::size_t>> by_class;
    std::unordered_set<std::uint64_t> seen;
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (seen.insert(pool.ids[i]).second) by_class[pool.y[i]].push_back(i);

    if (buffer.capacity < by_class.size())
        throw CapacityError("memory capacity " + std::to_string(buffer.capacity) + " cannot hold one exemplar for each of " +
                            std::to_string(by_class.size()) + " classes");
    if (buffer.policy != MemoryPolicy::random && !confidence)
        throw InvalidArgument("memory policy '" + to_string(buffer.policy) + "' needs a confidence function");

    const auto quotas = class_quotas(buffer.capacity, by_class.size());
    std::vector<std::size_t> kept;
    std::size_t k = 0;
    for (const auto& [label, rows] : by_class) {
        std::vector<double> conf;
        if (buffer.policy != MemoryPolicy::random && rows.size() > quotas[k]) {
            conf = confidence(pool.subset(rows).x);
            if (conf.size() != rows.size()) throw ShapeError("confidence function returned the wrong number of values");
        }
        for (std::size_t pos : select(buffer.policy, rows.size(), quotas[k], conf, rng)) kept.push_back(rows[pos]);
        ++k;
    }
    buffer.items = pool.subset(kept);
}

void TrainingPool::add(const LabeledSet& rows, bool pseudo_labeled) {
    std::unordered_set<std::uint64_t> present(samples.ids.begin(), samples.ids.end());
    std::vector<std::size_t> fresh;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (present.insert(rows.ids[i]).second) fresh.push_back(i);
    samples.append(rows.subset(fresh));
    pseudo.insert(pseudo.end(), fresh.size(), pseudo_labeled);
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, numcore::Rng& rng) {
    if (batch_size == 0) throw InvalidArgument("batch size must be positive");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size)
        out.emplace_back(order.begin() + start, order.begin() + std::min(n, start + batch_size));
    return out;
}

}  // namespace osscl::scenario
