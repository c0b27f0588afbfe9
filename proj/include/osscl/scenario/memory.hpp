#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "osscl/numcore/rng.hpp"
#include "osscl/scenario/dataset.hpp"

namespace osscl::scenario {

enum class MemoryPolicy { random, low_confidence, high_confidence, rainbow };

std::string to_string(MemoryPolicy p);
MemoryPolicy parse_memory_policy(const std::string& name);

// Scores a batch of samples; one value per row, larger means more confident.
using ConfidenceFn = std::function<std::vector<double>(const Tensor<float>& rows)>;

// Class-balanced exemplar store. Capacity 0 disables the memory.
struct MemoryBuffer {
    std::size_t capacity = 0;
    MemoryPolicy policy = MemoryPolicy::random;
    LabeledSet items;

    std::size_t size() const { return items.size(); }
    std::vector<int> classes() const;
    std::size_t count_of(int label) const;
};

// floor(capacity / n) per class, the remainder going to the first classes.
std::vector<std::size_t> class_quotas(std::size_t capacity, std::size_t n_classes);

// Rebalances the buffer over every class seen so far and admits samples of
// `incoming`. A class with fewer candidates than its quota keeps all of them.
// Throws CapacityError when capacity is below the number of seen classes and
// InvalidArgument when a confidence policy is used without `confidence`.
void memory_update(MemoryBuffer& buffer, const LabeledSet& incoming, const ConfidenceFn& confidence, numcore::Rng& rng);

// Samples drawn for contrastive training, with pseudo-labeled rows flagged.
struct TrainingPool {
    LabeledSet samples;
    std::vector<bool> pseudo;

    std::size_t size() const { return samples.size(); }
    // Appends rows; ids already present are skipped.
    void add(const LabeledSet& rows, bool pseudo_labeled);
};

// One epoch of index batches: a seeded shuffle of [0, n) cut into batches of
// `batch_size`; the final batch may be smaller.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, numcore::Rng& rng);

}  // namespace osscl::scenario
