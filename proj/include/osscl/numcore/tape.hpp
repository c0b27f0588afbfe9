#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "osscl/numcore/tensor.hpp"

namespace osscl::numcore {

template <class T>
class Tape;

// Handle to a node recorded on a tape.
template <class T>
struct Var {
    Tape<T>* tape = nullptr;
    std::size_t id = 0;

    const Tensor<T>& value() const { return tape->value(id); }
    const Shape& shape() const { return value().shape(); }
};

// Gradient buffers handed to a node's backward function: one slot per parent.
// `parent(k)` is empty when parent k does not need a gradient.
template <class T>
class GradSink {
public:
    virtual ~GradSink() = default;
    virtual std::span<T> parent(std::size_t k) = 0;
};

template <class T>
using BackwardFn = std::function<void(std::span<const T> out_grad, GradSink<T>& sink)>;

// Gradients of a scalar with respect to every leaf that requires them.
template <class T>
class Gradients {
public:
    // Zero tensor when the leaf received no gradient.
    const Tensor<T>& of(Var<T> leaf) const;
    bool has(Var<T> leaf) const;

private:
    friend class Tape<T>;
    std::vector<Tensor<T>> by_node_;
    std::vector<bool> present_;
};

// Reverse-mode record of primitive operations in creation (topological)
// order. Nodes are never removed; a tape is discarded after use.
template <class T>
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf whose gradient is tracked iff value.requires_grad().
    Var<T> leaf(Tensor<T> value);
    Var<T> variable(Tensor<T> value) { return leaf(std::move(value.set_requires_grad(true))); }
    Var<T> constant(Tensor<T> value) { return leaf(std::move(value.set_requires_grad(false))); }

    Var<T> record(Tensor<T> value, std::vector<std::size_t> parents, BackwardFn<T> backward);

    const Tensor<T>& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Pure function of the recorded graph: may be called repeatedly.
    Gradients<T> backward(Var<T> loss) const;

private:
    struct Node {
        Tensor<T> value;
        std::vector<std::size_t> parents;
        BackwardFn<T> backward;
        bool requires_grad = false;
        bool is_leaf = false;
    };
    // deque keeps references returned by value() valid while recording
    std::deque<Node> nodes_;
};

}  // namespace osscl::numcore
