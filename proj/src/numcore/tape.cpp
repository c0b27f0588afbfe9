#include "osscl/numcore/tape.hpp"

#include <cmath>
#include <sstream>

namespace osscl::numcore {

std::string shape_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    out << ']';
    return out.str();
}

template <class T>
void require_finite(std::span<const T> values, const char* where) {
    for (const T v : values) {
        if (!std::isfinite(v)) throw NonFiniteValue(std::string("non-finite value produced by ") + where);
    }
}

template <class T>
const Tensor<T>& Gradients<T>::of(Var<T> leaf) const {
    return by_node_.at(leaf.id);
}

template <class T>
bool Gradients<T>::has(Var<T> leaf) const {
    return leaf.id < present_.size() && present_[leaf.id];
}

template <class T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
    Node node;
    node.requires_grad = value.requires_grad();
    node.is_leaf = true;
    node.value = std::move(value);
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
}

template <class T>
Var<T> Tape<T>::record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn<T> backward) {
    Node node;
    for (const std::size_t p : parents) {
        if (p >= nodes_.size()) throw InvalidArgument("tape parent index out of range");
        node.requires_grad = node.requires_grad || nodes_[p].requires_grad;
    }
    node.value = std::move(value);
    node.parents = std::move(parents);
    node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<T>{this, nodes_.size() - 1};
}

namespace {

template <class T>
class SlotSink final : public GradSink<T> {
public:
    SlotSink(std::vector<std::vector<T>>& grads, const std::vector<std::size_t>& parents,
             const std::vector<std::size_t>& sizes, const std::vector<bool>& needs)
        : grads_(grads), parents_(parents), sizes_(sizes), needs_(needs) {}

    std::span<T> parent(std::size_t k) override {
        const std::size_t id = parents_[k];
        if (!needs_[id]) return {};
        auto& g = grads_[id];
        if (g.empty()) g.assign(sizes_[id], T{0});
        return g;
    }

private:
    std::vector<std::vector<T>>& grads_;
    const std::vector<std::size_t>& parents_;
    const std::vector<std::size_t>& sizes_;
    const std::vector<bool>& needs_;
};

}  // namespace

template <class T>
Gradients<T> Tape<T>::backward(Var<T> loss) const {
    if (loss.tape != this) throw InvalidArgument("backward: loss belongs to a different tape");
    const Node& root = nodes_.at(loss.id);
    if (root.value.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_string(root.value.shape()));

    const std::size_t n = loss.id + 1;
    std::vector<std::size_t> sizes(n);
    std::vector<bool> needs(n);
    for (std::size_t i = 0; i < n; ++i) {
        sizes[i] = nodes_[i].value.size();
        needs[i] = nodes_[i].requires_grad;
    }

    std::vector<std::vector<T>> grads(n);
    grads[loss.id].assign(1, T{1});
    for (std::size_t i = n; i-- > 0;) {
        const Node& node = nodes_[i];
        if (node.is_leaf || !node.requires_grad || grads[i].empty()) continue;
        SlotSink<T> sink(grads, node.parents, sizes, needs);
        node.backward(grads[i], sink);
        // interior buffers are no longer needed once propagated
        std::vector<T>().swap(grads[i]);
    }

    Gradients<T> out;
    out.by_node_.resize(n);
    out.present_.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        const Node& node = nodes_[i];
        if (!node.is_leaf || !node.requires_grad) continue;
        out.present_[i] = true;
        if (grads[i].empty())
            out.by_node_[i] = Tensor<T>(node.value.shape(), T{0});
        else
            out.by_node_[i] = Tensor<T>(node.value.shape(), std::move(grads[i]));
    }
    return out;
}

template void require_finite<float>(std::span<const float>, const char*);
template void require_finite<double>(std::span<const double>, const char*);
template class Gradients<float>;
template class Gradients<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace osscl::numcore
