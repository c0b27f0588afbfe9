#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "osscl/numcore/ops.hpp"
#include "osscl/numcore/tape.hpp"

namespace osscl::nets {

using numcore::Tape;
using numcore::Tensor;
using numcore::Var;

// Layer sizes of the embedding map. With `conv_stem` the input must be a
// 3x32x32 channel-major image; two stride-2 convolutions (3->8->16 channels)
// precede the dense encoder.
struct Architecture {
    std::size_t input_dim = 16;
    std::vector<std::size_t> encoder_widths{64, 64};
    std::size_t projector_hidden = 32;
    std::size_t embed_dim = 16;
    bool conv_stem = false;

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

// Encoder f (dense + ReLU stack) followed by projector g (affine, ReLU,
// affine) and projection onto the unit sphere.
template <class T>
class EncoderProjector {
public:
    // Kaiming-uniform fan-in weights, zero biases.
    EncoderProjector(const Architecture& arch, std::uint64_t seed);

    const Architecture& architecture() const { return arch_; }
    std::size_t feature_dim() const { return arch_.encoder_widths.back(); }

    // Flat list: [stem kernels/biases], encoder weights/biases, projector weights/biases.
    std::vector<Tensor<T>>& parameters() { return params_; }
    const std::vector<Tensor<T>>& parameters() const { return params_; }

    // FNV-1a over the raw parameter bytes.
    std::uint64_t digest() const;

private:
    Architecture arch_;
    std::vector<Tensor<T>> params_;
};

// Network parameters placed on a tape for one forward/backward pass.
template <class T>
class BoundNetwork {
public:
    BoundNetwork(const EncoderProjector<T>& net, Tape<T>& tape, bool trainable);

    // Encoder output (post-ReLU), no normalization.
    Var<T> features(Var<T> inputs) const;
    // l2_normalize_rows(projector(encoder(inputs))).
    Var<T> embed(Var<T> inputs) const;

    const std::vector<Var<T>>& parameter_vars() const { return vars_; }

private:
    const EncoderProjector<T>* net_;
    std::vector<Var<T>> vars_;
    std::size_t stem_params_ = 0;
};

// Forward passes without gradient tracking.
template <class T>
Tensor<T> embed(const EncoderProjector<T>& net, const Tensor<T>& inputs);
template <class T>
Tensor<T> encoder_features(const EncoderProjector<T>& net, const Tensor<T>& inputs);

// Read-only copy of a network's parameters, shared between readers.
template <class T>
class ParamSnapshot {
public:
    explicit ParamSnapshot(std::shared_ptr<const EncoderProjector<T>> net) : net_(std::move(net)) {}

    const EncoderProjector<T>& network() const { return *net_; }
    Tensor<T> embed(const Tensor<T>& inputs) const { return nets::embed(*net_, inputs); }
    std::uint64_t digest() const { return net_->digest(); }

private:
    std::shared_ptr<const EncoderProjector<T>> net_;
};

template <class T>
ParamSnapshot<T> snapshot(const EncoderProjector<T>& net) {
    return ParamSnapshot<T>(std::make_shared<const EncoderProjector<T>>(net));
}

template <class T>
ParamSnapshot<T> snapshot(const ParamSnapshot<T>& snap) {
    return snap;
}

std::vector<numcore::ConvGeometry> conv_stem_geometry();

}  // namespace osscl::nets
