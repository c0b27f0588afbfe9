#include "osscl/nets/classifier.hpp"

#include <cmath>
#include <string>

#include "osscl/numcore/ops.hpp"
#include "osscl/numcore/rng.hpp"

namespace osscl::nets {

using numcore::Shape;
using numcore::Tape;

template <class T>
LinearClassifier<T>::LinearClassifier(std::size_t feature_dim, std::size_t num_classes)
    : weight(Shape{feature_dim, num_classes}, T{0}), bias(Shape{num_classes}, T{0}) {
    if (feature_dim == 0 || num_classes == 0) throw InvalidArgument("classifier dimensions must be positive");
}

template <class T>
LinearClassifier<T>::LinearClassifier(std::size_t feature_dim, std::size_t num_classes, std::uint64_t seed)
    : LinearClassifier(feature_dim, num_classes) {
    numcore::Rng rng(seed);
    const double bound = std::sqrt(6.0 / static_cast<double>(feature_dim));
    for (auto& v : weight.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
Tensor<T> classify(const LinearClassifier<T>& head, const Tensor<T>& features) {
    if (features.rank() != 2 || features.cols() != head.feature_dim())
        throw ShapeError("classifier expects features of width " + std::to_string(head.feature_dim()) + ", got " +
                         numcore::shape_string(features.shape()));
    Tape<T> tape;
    return numcore::affine(tape.constant(features), tape.constant(head.weight), tape.constant(head.bias)).value();
}

template <class T>
std::vector<int> predict(const LinearClassifier<T>& head, const Tensor<T>& features) {
    const Tensor<T> logits = classify(head, features);
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

template struct LinearClassifier<float>;
template struct LinearClassifier<double>;
template Tensor<float> classify<float>(const LinearClassifier<float>&, const Tensor<float>&);
template Tensor<double> classify<double>(const LinearClassifier<double>&, const Tensor<double>&);
template std::vector<int> predict<float>(const LinearClassifier<float>&, const Tensor<float>&);
template std::vector<int> predict<double>(const LinearClassifier<double>&, const Tensor<double>&);

}  // namespace osscl::nets
