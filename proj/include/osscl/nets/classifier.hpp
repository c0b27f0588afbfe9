#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "osscl/numcore/tape.hpp"

namespace osscl::nets {

using numcore::Tensor;
using numcore::Var;

// Linear head over encoder features: logits = features * weight + bias.
template <class T>
struct LinearClassifier {
    Tensor<T> weight;  // [feature_dim x num_classes]
    Tensor<T> bias;    // [num_classes]

    LinearClassifier(std::size_t feature_dim, std::size_t num_classes);
    // Kaiming-uniform fan-in initialization.
    LinearClassifier(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed);

    std::size_t feature_dim() const { return weight.rows(); }
    std::size_t num_classes() const { return weight.cols(); }
};

template <class T>
Tensor<T> classify(const LinearClassifier<T>& head, const Tensor<T>& features);

// Index of the largest logit per row (lowest index wins ties).
template <class T>
std::vector<int> predict(const LinearClassifier<T>& head, const Tensor<T>& features);

}  // namespace osscl::nets
