#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "osscl/numcore/tape.hpp"

namespace osscl::numcore {

// Row norms below this are rejected by l2_normalize_rows.
inline constexpr double kNormEpsilon = 1e-12;

// Entries excluded from a row-wise softmax normalizer. `excluded` is row-major
// with one byte per entry (non-zero = excluded).
struct Mask {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> excluded;

    static Mask none(std::size_t rows, std::size_t cols) { return {rows, cols, std::vector<std::uint8_t>(rows * cols, 0)}; }
    // Square mask excluding the diagonal (self-similarity).
    static Mask off_diagonal(std::size_t n);

    bool is_excluded(std::size_t r, std::size_t c) const { return excluded[r * cols + c] != 0; }
};

// Geometry of a 2-D convolution over channel-major images stored one per row.
struct ConvGeometry {
    std::size_t in_channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t out_channels = 0;
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t padding = 0;

    std::size_t out_height() const { return (height + 2 * padding - kernel) / stride + 1; }
    std::size_t out_width() const { return (width + 2 * padding - kernel) / stride + 1; }
    std::size_t in_features() const { return in_channels * height * width; }
    std::size_t out_features() const { return out_channels * out_height() * out_width(); }
};

// out[b,o] = sum_i input[b,i] * weight[i,o] + bias[o]
template <class T>
Var<T> affine(Var<T> input, Var<T> weight, Var<T> bias);

template <class T>
Var<T> relu(Var<T> input);

// Each row divided by its Euclidean norm. Throws DegenerateNorm for rows
// with norm < kNormEpsilon.
template <class T>
Var<T> l2_normalize_rows(Var<T> input);

// out = a * b^T. Inputs may be the same node.
template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b);

// matmul_nt for unit-norm rows; in debug builds rows are checked to be unit.
template <class T>
Var<T> pairwise_cosine(Var<T> a, Var<T> b);

// Row-wise log-softmax over non-excluded entries. Excluded entries hold
// -infinity and receive no gradient. Throws AllMaskedRow.
template <class T>
Var<T> row_log_softmax(Var<T> logits, const Mask& mask);

// sum_ij weights[i,j] * input[i,j] with weights held constant. Entries with a
// zero weight are skipped so -infinity sentinels never reach the sum.
template <class T>
Var<T> weighted_sum(Var<T> input, const Tensor<T>& weights);

template <class T>
Var<T> scale(Var<T> input, T factor);

template <class T>
Var<T> add(Var<T> a, Var<T> b);

template <class T>
Var<T> mul(Var<T> a, Var<T> b);

template <class T>
Var<T> sum(Var<T> input);

// Identity forward, negated gradient backward. Only used to inject faults
// into the gradient checker.
template <class T>
Var<T> flip_gradient(Var<T> input);

// Input [B x Cin*H*W], kernel [Cout x Cin*k*k], bias [Cout] ->
// [B x Cout*Ho*Wo], zero padding.
template <class T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, const ConvGeometry& geometry);

}  // namespace osscl::numcore
