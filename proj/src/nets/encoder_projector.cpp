#include "osscl/nets/encoder_projector.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "osscl/numcore/rng.hpp"

namespace osscl::nets {

using numcore::ConvGeometry;
using numcore::Shape;

std::vector<ConvGeometry> conv_stem_geometry() {
    return {ConvGeometry{3, 32, 32, 8, 3, 2, 1}, ConvGeometry{8, 16, 16, 16, 3, 2, 1}};
}

namespace {

template <class T>
Tensor<T> kaiming_uniform(numcore::Rng& rng, Shape shape, std::size_t fan_in) {
    Tensor<T> t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
    return t;
}

}  // namespace

template <class T>
EncoderProjector<T>::EncoderProjector(const Architecture& arch, std::uint64_t seed) : arch_(arch) {
    if (arch.encoder_widths.empty()) throw InvalidArgument("encoder needs at least one hidden layer");
    for (std::size_t w : arch.encoder_widths)
        if (w == 0) throw InvalidArgument("encoder layer width must be positive");
    if (arch.input_dim == 0 || arch.projector_hidden == 0 || arch.embed_dim == 0)
        throw InvalidArgument("input, projector and embedding widths must be positive");

    numcore::Rng rng(seed);
    std::size_t width = arch.input_dim;
    if (arch.conv_stem) {
        const auto stem = conv_stem_geometry();
        if (arch.input_dim != stem.front().in_features())
            throw InvalidArgument("conv stem expects 3x32x32 input (3072 values), got " + std::to_string(arch.input_dim));
        for (const auto& geo : stem) {
            const std::size_t fan_in = geo.in_channels * geo.kernel * geo.kernel;
            params_.push_back(kaiming_uniform<T>(rng, Shape{geo.out_channels, fan_in}, fan_in));
            params_.emplace_back(Shape{geo.out_channels}, T{0});
        }
        width = stem.back().out_features();
    }
    auto dense = [&](std::size_t in, std::size_t out) {
        params_.push_back(kaiming_uniform<T>(rng, Shape{in, out}, in));
        params_.emplace_back(Shape{out}, T{0});
    };
    for (std::size_t w : arch.encoder_widths) {
        dense(width, w);
        width = w;
    }
    dense(width, arch.projector_hidden);
    dense(arch.projector_hidden, arch.embed_dim);
}

template <class T>
std::uint64_t EncoderProjector<T>::digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(p.values().data());
        for (std::size_t i = 0; i < p.size() * sizeof(T); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

template <class T>
BoundNetwork<T>::BoundNetwork(const EncoderProjector<T>& net, Tape<T>& tape, bool trainable) : net_(&net) {
    vars_.reserve(net.parameters().size());
    for (const auto& p : net.parameters()) {
        Tensor<T> copy = p;
        copy.set_requires_grad(trainable);
        vars_.push_back(tape.leaf(std::move(copy)));
    }
    stem_params_ = net.architecture().conv_stem ? 4 : 0;
}

template <class T>
Var<T> BoundNetwork<T>::features(Var<T> inputs) const {
    const Architecture& arch = net_->architecture();
    if (inputs.value().rank() != 2 || inputs.value().cols() != arch.input_dim)
        throw ShapeError("network expects inputs of width " + std::to_string(arch.input_dim) + ", got " +
                         numcore::shape_string(inputs.value().shape()));
    Var<T> h = inputs;
    std::size_t k = 0;
    if (arch.conv_stem) {
        for (const auto& geo : conv_stem_geometry()) {
            h = numcore::relu(numcore::conv2d(h, vars_[k], vars_[k + 1], geo));
            k += 2;
        }
    }
    for (std::size_t layer = 0; layer < arch.encoder_widths.size(); ++layer, k += 2)
        h = numcore::relu(numcore::affine(h, vars_[k], vars_[k + 1]));
    return h;
}

template <class T>
Var<T> BoundNetwork<T>::embed(Var<T> inputs) const {
    const std::size_t k = vars_.size() - 4;
    Var<T> h = features(inputs);
    h = numcore::relu(numcore::affine(h, vars_[k], vars_[k + 1]));
    h = numcore::affine(h, vars_[k + 2], vars_[k + 3]);
    return numcore::l2_normalize_rows(h);
}

template <class T>
Tensor<T> embed(const EncoderProjector<T>& net, const Tensor<T>& inputs) {
    Tape<T> tape;
    BoundNetwork<T> bound(net, tape, false);
    return bound.embed(tape.constant(inputs)).value();
}

template <class T>
Tensor<T> encoder_features(const EncoderProjector<T>& net, const Tensor<T>& inputs) {
    Tape<T> tape;
    BoundNetwork<T> bound(net, tape, false);
    return bound.features(tape.constant(inputs)).value();
}

template class EncoderProjector<float>;
template class EncoderProjector<double>;
template class BoundNetwork<float>;
template class BoundNetwork<double>;
template Tensor<float> embed<float>(const EncoderProjector<float>&, const Tensor<float>&);
template Tensor<double> embed<double>(const EncoderProjector<double>&, const Tensor<double>&);
template Tensor<float> encoder_features<float>(const EncoderProjector<float>&, const Tensor<float>&);
template Tensor<double> encoder_features<double>(const EncoderProjector<double>&, const Tensor<double>&);

}  // namespace osscl::nets
