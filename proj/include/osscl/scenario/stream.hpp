#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "osscl/scenario/dataset.hpp"

namespace osscl::segregate {
struct ProvenanceReader;
}

namespace osscl::scenario {

enum class StreamVariant { standard, after, before, only_related, only_unrelated, non_iid };

std::string to_string(StreamVariant v);
StreamVariant parse_stream_variant(const std::string& name);

struct ScenarioConfig {
    std::size_t tasks = 4;                  // T
    std::size_t classes_per_task = 2;       // K
    double labeled_fraction = 0.05;         // P
    std::size_t n_related = 900;            // drawn from the main dataset per step
    std::size_t n_unrelated = 900;          // drawn from each peripheral per step
    StreamVariant variant = StreamVariant::standard;
    double non_iid_fraction = 0.5;          // used by StreamVariant::non_iid
    std::uint64_t seed = 0;

    // Throws InvalidArgument on violated invariants given the main class count.
    void validate(std::size_t main_classes) const;
};

// Ground truth for one unlabeled sample. Only evaluation code can read it.
struct SampleOrigin {
    bool related = false;
    int true_class = -1;      // main-dataset class, -1 for peripheral samples
    std::size_t source = 0;   // 0 = main dataset, 1.. = peripheral index + 1
};

class SealedProvenance {
public:
    SealedProvenance() = default;
    explicit SealedProvenance(std::vector<SampleOrigin> origins) : origins_(std::move(origins)) {}

    std::size_t size() const { return origins_.size(); }

private:
    friend struct osscl::segregate::ProvenanceReader;
    std::vector<SampleOrigin> origins_;
};

struct UnlabeledPool {
    Tensor<float> x;
    std::vector<std::uint64_t> ids;
    SealedProvenance provenance;

    std::size_t size() const { return ids.size(); }
    // Rows of x selected by index, in the given order.
    Tensor<float> rows(const std::vector<std::size_t>& which) const;
};

struct StreamStep {
    std::size_t step = 1;              // 1-based time step t
    std::vector<int> classes;          // classes introduced at this step
    LabeledSet labeled;                // T_t
    UnlabeledPool unlabeled;           // U_t
};

struct Stream {
    std::vector<std::vector<int>> task_classes;
    std::vector<StreamStep> steps;
    LabeledSet test;  // held-out samples of every streamed class

    std::vector<int> classes_up_to(std::size_t step) const;
};

// Builds the task sequence. Related samples are drawn without replacement
// inside a step and independently across steps.
Stream build_stream(const ScenarioConfig& config, const Dataset& main, const std::vector<const Dataset*>& peripherals);

}  // namespace osscl::scenario
