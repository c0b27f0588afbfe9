#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "osscl/numcore/error.hpp"

namespace osscl::numcore {

using Shape = std::vector<std::size_t>;

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape);

// Dense row-major array. Rank 0 is a scalar, rank 2 a matrix.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() : shape_{0}, values_{} {}

    explicit Tensor(Shape shape, T fill = T{})
        : shape_(std::move(shape)), values_(element_count(shape_), fill) {}

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
        if (values_.size() != element_count(shape_))
            throw ShapeError("tensor value count " + std::to_string(values_.size()) +
                             " does not match shape " + shape_string(shape_));
    }

    static Tensor scalar(T value) { return Tensor(Shape{}, std::vector<T>{value}); }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
        return Tensor(Shape{rows, cols}, std::move(values));
    }

    static Tensor vector(std::vector<T> values) {
        const std::size_t n = values.size();
        return Tensor(Shape{n}, std::move(values));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return values_.size(); }

    std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

    std::span<T> values() { return values_; }
    std::span<const T> values() const { return values_; }
    std::vector<T>& storage() { return values_; }
    const std::vector<T>& storage() const { return values_; }

    T& operator[](std::size_t i) { return values_[i]; }
    const T& operator[](std::size_t i) const { return values_[i]; }

    T& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    std::span<T> row(std::size_t r) { return std::span<T>(values_).subspan(r * cols(), cols()); }
    std::span<const T> row(std::size_t r) const {
        return std::span<const T>(values_).subspan(r * cols(), cols());
    }

    T item() const {
        if (values_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
        return values_[0];
    }

    bool requires_grad() const { return requires_grad_; }
    Tensor& set_requires_grad(bool flag) {
        requires_grad_ = flag;
        return *this;
    }

    template <class U>
    Tensor<U> cast() const {
        std::vector<U> out(values_.begin(), values_.end());
        return Tensor<U>(shape_, std::move(out));
    }

    friend bool operator==(const Tensor& a, const Tensor& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<T> values_;
    bool requires_grad_ = false;
};

// Throws NonFiniteValue naming `where` if any entry is NaN or infinite.
template <class T>
void require_finite(std::span<const T> values, const char* where);

}  // namespace osscl::numcore
