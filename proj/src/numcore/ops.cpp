#include "osscl/numcore/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace osscl::numcore {

Mask Mask::off_diagonal(std::size_t n) {
    Mask m = none(n, n);
    for (std::size_t i = 0; i < n; ++i) m.excluded[i * n + i] = 1;
    return m;
}

namespace {

template <class T>
void require_matrix(const Tensor<T>& t, const char* what) {
    if (t.rank() != 2) throw ShapeError(std::string(what) + ": expected a matrix, got " + shape_string(t.shape()));
}

template <class T>
void require_same_tape(Var<T> a, Var<T> b) {
    if (a.tape != b.tape || a.tape == nullptr) throw InvalidArgument("operands live on different tapes");
}

}  // namespace

template <class T>
Var<T> affine(Var<T> input, Var<T> weight, Var<T> bias) {
    require_same_tape(input, weight);
    require_same_tape(input, bias);
    const Tensor<T>& x = input.value();
    const Tensor<T>& w = weight.value();
    const Tensor<T>& b = bias.value();
    require_matrix(x, "affine input");
    require_matrix(w, "affine weight");
    const std::size_t batch = x.rows(), in = x.cols(), out_dim = w.cols();
    if (w.rows() != in || b.size() != out_dim)
        throw ShapeError("affine: input " + shape_string(x.shape()) + ", weight " + shape_string(w.shape()) +
                         ", bias " + shape_string(b.shape()) + " do not conform");

    Tensor<T> out(Shape{batch, out_dim});
    const T* xp = x.values().data();
    const T* wp = w.values().data();
    const T* bp = b.values().data();
    T* op = out.values().data();
    for (std::size_t r = 0; r < batch; ++r) {
        T* orow = op + r * out_dim;
        std::copy(bp, bp + out_dim, orow);
        for (std::size_t i = 0; i < in; ++i) {
            const T xv = xp[r * in + i];
            if (xv == T{0}) continue;
            const T* wrow = wp + i * out_dim;
            for (std::size_t o = 0; o < out_dim; ++o) orow[o] += xv * wrow[o];
        }
    }
    require_finite<T>(out.values(), "affine");

    Tape<T>* tape = input.tape;
    const std::size_t xi = input.id, wi = weight.id;
    return tape->record(std::move(out), {input.id, weight.id, bias.id},
                        [tape, xi, wi, batch, in, out_dim](std::span<const T> g, GradSink<T>& sink) {
                            const T* xp = tape->value(xi).values().data();
                            const T* wp = tape->value(wi).values().data();
                            if (auto dx = sink.parent(0); !dx.empty()) {
                                for (std::size_t r = 0; r < batch; ++r) {
                                    const T* grow = g.data() + r * out_dim;
                                    for (std::size_t i = 0; i < in; ++i) {
                                        const T* wrow = wp + i * out_dim;
                                        T acc{0};
                                        for (std::size_t o = 0; o < out_dim; ++o) acc += grow[o] * wrow[o];
                                        dx[r * in + i] += acc;
                                    }
                                }
                            }
                            if (auto dw = sink.parent(1); !dw.empty()) {
                                for (std::size_t r = 0; r < batch; ++r) {
                                    const T* grow = g.data() + r * out_dim;
                                    for (std::size_t i = 0; i < in; ++i) {
                                        const T xv = xp[r * in + i];
                                        if (xv == T{0}) continue;
                                        T* dwrow = dw.data() + i * out_dim;
                                        for (std::size_t o = 0; o < out_dim; ++o) dwrow[o] += xv * grow[o];
                                    }
                                }
                            }
                            if (auto db = sink.parent(2); !db.empty()) {
                                for (std::size_t r = 0; r < batch; ++r)
                                    for (std::size_t o = 0; o < out_dim; ++o) db[o] += g[r * out_dim + o];
                            }
                        });
}

template <class T>
Var<T> relu(Var<T> input) {
    const Tensor<T>& x = input.value();
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
    Tape<T>* tape = input.tape;
    const std::size_t xi = input.id;
    return tape->record(std::move(out), {input.id}, [tape, xi](std::span<const T> g, GradSink<T>& sink) {
        auto dx = sink.parent(0);
        if (dx.empty()) return;
        const auto& x = tape->value(xi);
        // subgradient at exactly zero is zero
        for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > T{0}) dx[i] += g[i];
    });
}

template <class T>
Var<T> l2_normalize_rows(Var<T> input) {
    const Tensor<T>& x = input.value();
    require_matrix(x, "l2_normalize_rows");
    const std::size_t rows = x.rows(), cols = x.cols();
    Tensor<T> out(x.shape());
    std::vector<T> norms(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < cols; ++c) sq += static_cast<double>(x(r, c)) * static_cast<double>(x(r, c));
        const double norm = std::sqrt(sq);
        if (!(norm >= kNormEpsilon))
            throw DegenerateNorm("l2_normalize_rows: row " + std::to_string(r) + " has norm " + std::to_string(norm));
        norms[r] = static_cast<T>(norm);
        for (std::size_t c = 0; c < cols; ++c) out(r, c) = static_cast<T>(x(r, c) / norm);
    }
    Tape<T>* tape = input.tape;
    const std::size_t self = tape->size();
    return tape->record(std::move(out), {input.id},
                        [tape, self, norms = std::move(norms), rows, cols](std::span<const T> g, GradSink<T>& sink) {
                            auto dx = sink.parent(0);
                            if (dx.empty()) return;
                            const auto& y = tape->value(self);
                            for (std::size_t r = 0; r < rows; ++r) {
                                T dot{0};
                                for (std::size_t c = 0; c < cols; ++c) dot += y(r, c) * g[r * cols + c];
                                const T inv = T{1} / norms[r];
                                for (std::size_t c = 0; c < cols; ++c)
                                    dx[r * cols + c] += (g[r * cols + c] - y(r, c) * dot) * inv;
                            }
                        });
}

template <class T>
Var<T> matmul_nt(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    require_matrix(av, "matmul_nt lhs");
    require_matrix(bv, "matmul_nt rhs");
    if (av.cols() != bv.cols())
        throw ShapeError("matmul_nt: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    const std::size_t n = av.rows(), m = bv.rows(), d = av.cols();
    Tensor<T> out(Shape{n, m});
    for (std::size_t i = 0; i < n; ++i) {
        const T* ar = av.values().data() + i * d;
        for (std::size_t j = 0; j < m; ++j) {
            const T* br = bv.values().data() + j * d;
            T acc{0};
            for (std::size_t k = 0; k < d; ++k) acc += ar[k] * br[k];
            out(i, j) = acc;
        }
    }
    require_finite<T>(out.values(), "matmul_nt");
    Tape<T>* tape = a.tape;
    const std::size_t ai = a.id, bi = b.id;
    return tape->record(std::move(out), {a.id, b.id}, [tape, ai, bi, n, m, d](std::span<const T> g, GradSink<T>& sink) {
        const T* ap = tape->value(ai).values().data();
        const T* bp = tape->value(bi).values().data();
        if (auto da = sink.parent(0); !da.empty()) {
            for (std::size_t i = 0; i < n; ++i) {
                T* dar = da.data() + i * d;
                for (std::size_t j = 0; j < m; ++j) {
                    const T gij = g[i * m + j];
                    if (gij == T{0}) continue;
                    const T* br = bp + j * d;
                    for (std::size_t k = 0; k < d; ++k) dar[k] += gij * br[k];
                }
            }
        }
        if (auto db = sink.parent(1); !db.empty()) {
            for (std::size_t i = 0; i < n; ++i) {
                const T* ar = ap + i * d;
                for (std::size_t j = 0; j < m; ++j) {
                    const T gij = g[i * m + j];
                    if (gij == T{0}) continue;
                    T* dbr = db.data() + j * d;
                    for (std::size_t k = 0; k < d; ++k) dbr[k] += gij * ar[k];
                }
            }
        }
    });
}

template <class T>
Var<T> pairwise_cosine(Var<T> a, Var<T> b) {
#ifndef NDEBUG
    for (const Var<T>* v : {&a, &b}) {
        const Tensor<T>& t = v->value();
        for (std::size_t r = 0; r < t.rows(); ++r) {
            double sq = 0.0;
            for (const T x : t.row(r)) sq += static_cast<double>(x) * static_cast<double>(x);
            if (std::abs(std::sqrt(sq) - 1.0) > 1e-4)
                throw InvalidArgument("pairwise_cosine: row " + std::to_string(r) + " is not unit-norm");
        }
    }
#endif
    return matmul_nt(a, b);
}

template <class T>
Var<T> row_log_softmax(Var<T> logits, const Mask& mask) {
    const Tensor<T>& x = logits.value();
    require_matrix(x, "row_log_softmax");
    const std::size_t rows = x.rows(), cols = x.cols();
    if (mask.rows != rows || mask.cols != cols || mask.excluded.size() != rows * cols)
        throw ShapeError("row_log_softmax: mask shape does not match logits " + shape_string(x.shape()));
    Tensor<T> out(x.shape());
    constexpr T kExcluded = -std::numeric_limits<T>::infinity();
    for (std::size_t r = 0; r < rows; ++r) {
        T hi = kExcluded;
        bool any = false;
        for (std::size_t c = 0; c < cols; ++c) {
            if (mask.is_excluded(r, c)) continue;
            hi = any ? std::max(hi, x(r, c)) : x(r, c);
            any = true;
        }
        if (!any) throw AllMaskedRow("row_log_softmax: row " + std::to_string(r) + " has no unmasked entry");
        T total{0};
        for (std::size_t c = 0; c < cols; ++c)
            if (!mask.is_excluded(r, c)) total += std::exp(x(r, c) - hi);
        const T lse = hi + std::log(total);
        for (std::size_t c = 0; c < cols; ++c) {
            if (mask.is_excluded(r, c)) {
                out(r, c) = kExcluded;
            } else {
                out(r, c) = x(r, c) - lse;
                if (!std::isfinite(out(r, c))) throw NonFiniteValue("non-finite value produced by row_log_softmax");
            }
        }
    }
    Tape<T>* tape = logits.tape;
    const std::size_t self = tape->size();
    return tape->record(std::move(out), {logits.id}, [tape, self, mask, rows, cols](std::span<const T> g, GradSink<T>& sink) {
        auto dx = sink.parent(0);
        if (dx.empty()) return;
        const auto& y = tape->value(self);
        for (std::size_t r = 0; r < rows; ++r) {
            T gsum{0};
            for (std::size_t c = 0; c < cols; ++c)
                if (!mask.is_excluded(r, c)) gsum += g[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
                if (mask.is_excluded(r, c)) continue;
                dx[r * cols + c] += g[r * cols + c] - std::exp(y(r, c)) * gsum;
            }
        }
    });
}

template <class T>
Var<T> weighted_sum(Var<T> input, const Tensor<T>& weights) {
    const Tensor<T>& x = input.value();
    if (x.size() != weights.size())
        throw ShapeError("weighted_sum: input " + shape_string(x.shape()) + " vs weights " + shape_string(weights.shape()));
    T acc{0};
    for (std::size_t i = 0; i < x.size(); ++i)
        if (weights[i] != T{0}) acc += weights[i] * x[i];
    if (!std::isfinite(acc)) throw NonFiniteValue("non-finite value produced by weighted_sum");
    Tape<T>* tape = input.tape;
    return tape->record(Tensor<T>::scalar(acc), {input.id}, [weights](std::span<const T> g, GradSink<T>& sink) {
        auto dx = sink.parent(0);
        if (dx.empty()) return;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (weights[i] != T{0}) dx[i] += g[0] * weights[i];
    });
}

template <class T>
Var<T> scale(Var<T> input, T factor) {
    const Tensor<T>& x = input.value();
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * factor;
    require_finite<T>(out.values(), "scale");
    return input.tape->record(std::move(out), {input.id}, [factor](std::span<const T> g, GradSink<T>& sink) {
        auto dx = sink.parent(0);
        if (dx.empty()) return;
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * factor;
    });
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.shape() != bv.shape()) throw ShapeError("add: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    require_finite<T>(out.values(), "add");
    return a.tape->record(std::move(out), {a.id, b.id}, [](std::span<const T> g, GradSink<T>& sink) {
        for (std::size_t k = 0; k < 2; ++k) {
            auto d = sink.parent(k);
            if (d.empty()) continue;
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
    require_same_tape(a, b);
    const Tensor<T>& av = a.value();
    const Tensor<T>& bv = b.value();
    if (av.shape() != bv.shape()) throw ShapeError("mul: " + shape_string(av.shape()) + " vs " + shape_string(bv.shape()));
    Tensor<T> out(av.shape());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    require_finite<T>(out.values(), "mul");
    Tape<T>* tape = a.tape;
    const std::size_t ai = a.id, bi = b.id;
    return tape->record(std::move(out), {a.id, b.id}, [tape, ai, bi](std::span<const T> g, GradSink<T>& sink) {
        const auto& av = tape->value(ai);
        const auto& bv = tape->value(bi);
        if (auto da = sink.parent(0); !da.empty())
            for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
        if (auto db = sink.parent(1); !db.empty())
            for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
    });
}

template <class T>
Var<T> sum(Var<T> input) {
    const Tensor<T>& x = input.value();
    T acc{0};
    for (const T v : x.values()) acc += v;
    if (!std::isfinite(acc)) throw NonFiniteValue("non-finite value produced by sum");
    return input.tape->record(Tensor<T>::scalar(acc), {input.id}, [](std::span<const T> g, GradSink<T>& sink) {
        auto dx = sink.parent(0);
        for (T& v : dx) v += g[0];
    });
}

template <class T>
Var<T> flip_gradient(Var<T> input) {
    Tensor<T> out = input.value();
    out.set_requires_grad(false);
    return input.tape->record(std::move(out), {input.id}, [](std::span<const T> g, GradSink<T>& sink) {
        auto dx = sink.parent(0);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] -= g[i];
    });
}

template <class T>
Var<T> conv2d(Var<T> input, Var<T> kernel, Var<T> bias, const ConvGeometry& geo) {
    require_same_tape(input, kernel);
    require_same_tape(input, bias);
    const Tensor<T>& x = input.value();
    const Tensor<T>& k = kernel.value();
    const Tensor<T>& b = bias.value();
    require_matrix(x, "conv2d input");
    const std::size_t patch = geo.in_channels * geo.kernel * geo.kernel;
    if (geo.height + 2 * geo.padding < geo.kernel || geo.width + 2 * geo.padding < geo.kernel || geo.stride == 0)
        throw ShapeError("conv2d: kernel larger than padded input");
    if (x.cols() != geo.in_features() || k.size() != geo.out_channels * patch || b.size() != geo.out_channels)
        throw ShapeError("conv2d: input " + shape_string(x.shape()) + ", kernel " + shape_string(k.shape()) +
                         ", bias " + shape_string(b.shape()) + " do not match the geometry");
    const std::size_t batch = x.rows(), oh = geo.out_height(), ow = geo.out_width();
    Tensor<T> out(Shape{batch, geo.out_features()});

    // visits every (output position, kernel tap) pair that lands inside the image
    auto for_each_tap = [geo, oh, ow](auto&& fn) {
        for (std::size_t co = 0; co < geo.out_channels; ++co)
            for (std::size_t oy = 0; oy < oh; ++oy)
                for (std::size_t ox = 0; ox < ow; ++ox) {
                    const std::size_t o = (co * oh + oy) * ow + ox;
                    for (std::size_t ci = 0; ci < geo.in_channels; ++ci)
                        for (std::size_t ky = 0; ky < geo.kernel; ++ky) {
                            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * geo.stride + ky) -
                                                      static_cast<std::ptrdiff_t>(geo.padding);
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(geo.height)) continue;
                            for (std::size_t kx = 0; kx < geo.kernel; ++kx) {
                                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * geo.stride + kx) -
                                                          static_cast<std::ptrdiff_t>(geo.padding);
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(geo.width)) continue;
                                const std::size_t i = (ci * geo.height + static_cast<std::size_t>(iy)) * geo.width +
                                                      static_cast<std::size_t>(ix);
                                const std::size_t w = co * (geo.in_channels * geo.kernel * geo.kernel) +
                                                      (ci * geo.kernel + ky) * geo.kernel + kx;
                                fn(co, o, i, w);
                            }
                        }
                }
    };

    for (std::size_t r = 0; r < batch; ++r) {
        const T* xr = x.values().data() + r * geo.in_features();
        T* orow = out.values().data() + r * geo.out_features();
        for (std::size_t co = 0; co < geo.out_channels; ++co)
            std::fill(orow + co * oh * ow, orow + (co + 1) * oh * ow, b[co]);
        for_each_tap([&](std::size_t, std::size_t o, std::size_t i, std::size_t w) { orow[o] += k[w] * xr[i]; });
    }
    require_finite<T>(out.values(), "conv2d");

    Tape<T>* tape = input.tape;
    const std::size_t xi = input.id, ki = kernel.id;
    return tape->record(std::move(out), {input.id, kernel.id, bias.id},
                        [tape, xi, ki, geo, batch, for_each_tap](std::span<const T> g, GradSink<T>& sink) {
                            const auto& x = tape->value(xi);
                            const auto& k = tape->value(ki);
                            auto dx = sink.parent(0);
                            auto dk = sink.parent(1);
                            auto db = sink.parent(2);
                            const std::size_t of = geo.out_features(), inf = geo.in_features();
                            for (std::size_t r = 0; r < batch; ++r) {
                                const T* gr = g.data() + r * of;
                                const T* xr = x.values().data() + r * inf;
                                for_each_tap([&](std::size_t, std::size_t o, std::size_t i, std::size_t w) {
                                    if (!dx.empty()) dx[r * inf + i] += k[w] * gr[o];
                                    if (!dk.empty()) dk[w] += xr[i] * gr[o];
                                });
                                if (!db.empty()) {
                                    const std::size_t plane = geo.out_height() * geo.out_width();
                                    for (std::size_t co = 0; co < geo.out_channels; ++co)
                                        for (std::size_t p = 0; p < plane; ++p) db[co] += gr[co * plane + p];
                                }
                            }
                        });
}

#define OSSCL_INSTANTIATE_OPS(T)                                                  \
    template Var<T> affine<T>(Var<T>, Var<T>, Var<T>);                            \
    template Var<T> relu<T>(Var<T>);                                              \
    template Var<T> l2_normalize_rows<T>(Var<T>);                                 \
    template Var<T> matmul_nt<T>(Var<T>, Var<T>);                                 \
    template Var<T> pairwise_cosine<T>(Var<T>, Var<T>);                           \
    template Var<T> row_log_softmax<T>(Var<T>, const Mask&);                      \
    template Var<T> weighted_sum<T>(Var<T>, const Tensor<T>&);                    \
    template Var<T> scale<T>(Var<T>, T);                                          \
    template Var<T> add<T>(Var<T>, Var<T>);                                       \
    template Var<T> mul<T>(Var<T>, Var<T>);                                       \
    template Var<T> sum<T>(Var<T>);                                               \
    template Var<T> flip_gradient<T>(Var<T>);                                     \
    template Var<T> conv2d<T>(Var<T>, Var<T>, Var<T>, const ConvGeometry&);

OSSCL_INSTANTIATE_OPS(float)
OSSCL_INSTANTIATE_OPS(double)

#undef OSSCL_INSTANTIATE_OPS

}  // namespace osscl::numcore
