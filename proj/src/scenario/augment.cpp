#include "osscl/scenario/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace osscl::scenario {

using numcore::Rng;
using numcore::Shape;

Augmenter Augmenter::vector(VectorAugment params) {
    if (params.jitter < 0 || params.dropout < 0 || params.dropout > 1)
        throw InvalidArgument("vector augmentation needs jitter >= 0 and dropout in [0,1]");
    Augmenter a;
    a.vec_ = params;
    return a;
}

Augmenter Augmenter::image(ChannelStats stats, ImageAugment params) {
    if (!(params.crop_scale_min > 0) || params.crop_scale_max > 1 || params.crop_scale_min > params.crop_scale_max)
        throw InvalidArgument("crop scale range must satisfy 0 < min <= max <= 1");
    Augmenter a;
    a.image_mode_ = true;
    a.img_ = params;
    a.stats_ = stats;
    return a;
}

Augmenter Augmenter::for_dataset(const Dataset& data, VectorAugment vec, ImageAugment img) {
    return data.image_stats ? image(*data.image_stats, img) : vector(vec);
}

namespace image_ops {

namespace {

float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

float gray_at(std::span<const float> img, std::size_t k) {
    return 0.299f * img[k] + 0.587f * img[kPlane + k] + 0.114f * img[2 * kPlane + k];
}

}  // namespace

void horizontal_flip(std::span<float> img) {
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t r = 0; r < kSide; ++r) {
            auto* row = img.data() + c * kPlane + r * kSide;
            std::reverse(row, row + kSide);
        }
}

void resized_crop(std::span<const float> in, std::span<float> out, double top, double left, double h, double w) {
    const double sy = h / kSide, sx = w / kSide;
    for (std::size_t r = 0; r < kSide; ++r) {
        const double fy = std::clamp(top + (r + 0.5) * sy - 0.5, 0.0, double(kSide - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, kSide - 1);
        const double wy = fy - y0;
        for (std::size_t c = 0; c < kSide; ++c) {
            const double fx = std::clamp(left + (c + 0.5) * sx - 0.5, 0.0, double(kSide - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, kSide - 1);
            const double wx = fx - x0;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const float* p = in.data() + ch * kPlane;
                const double top_mix = (1 - wx) * p[y0 * kSide + x0] + wx * p[y0 * kSide + x1];
                const double bot_mix = (1 - wx) * p[y1 * kSide + x0] + wx * p[y1 * kSide + x1];
                out[ch * kPlane + r * kSide + c] = static_cast<float>((1 - wy) * top_mix + wy * bot_mix);
            }
        }
    }
}

void to_grayscale(std::span<float> img) {
    for (std::size_t k = 0; k < kPlane; ++k) {
        const float g = gray_at(img, k);
        img[k] = img[kPlane + k] = img[2 * kPlane + k] = g;
    }
}

void adjust_brightness(std::span<float> img, double factor) {
    for (auto& v : img) v = clamp01(v * factor);
}

void adjust_contrast(std::span<float> img, double factor) {
    double mean = 0;
    for (std::size_t k = 0; k < kPlane; ++k) mean += gray_at(img, k);
    mean /= kPlane;
    for (auto& v : img) v = clamp01(factor * v + (1 - factor) * mean);
}

void adjust_saturation(std::span<float> img, double factor) {
    for (std::size_t k = 0; k < kPlane; ++k) {
        const double g = gray_at(img, k);
        for (std::size_t c = 0; c < 3; ++c) img[c * kPlane + k] = clamp01(factor * img[c * kPlane + k] + (1 - factor) * g);
    }
}

void adjust_hue(std::span<float> img, double shift) {
    for (std::size_t k = 0; k < kPlane; ++k) {
        const double r = img[k], g = img[kPlane + k], b = img[2 * kPlane + k];
        const double hi = std::max({r, g, b}), lo = std::min({r, g, b}), chroma = hi - lo;
        if (chroma <= 0) continue;
        double h;
        if (hi == r) h = std::fmod((g - b) / chroma, 6.0);
        else if (hi == g) h = (b - r) / chroma + 2.0;
        else h = (r - g) / chroma + 4.0;
        h = h / 6.0 + shift;
        h -= std::floor(h);
        const double s = chroma / hi, v = hi;
        const double hh = h * 6.0;
        const int sector = static_cast<int>(hh) % 6;
        const double f = hh - std::floor(hh);
        const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
        double out[3];
        switch (sector) {
            case 0: out[0] = v, out[1] = t, out[2] = p; break;
            case 1: out[0] = q, out[1] = v, out[2] = p; break;
            case 2: out[0] = p, out[1] = v, out[2] = t; break;
            case 3: out[0] = p, out[1] = q, out[2] = v; break;
            case 4: out[0] = t, out[1] = p, out[2] = v; break;
            default: out[0] = v, out[1] = p, out[2] = q; break;
        }
        for (std::size_t c = 0; c < 3; ++c) img[c * kPlane + k] = clamp01(out[c]);
    }
}

}  // namespace image_ops

namespace {

void augment_image(const ImageAugment& p, std::span<float> img, Rng& rng) {
    using namespace image_ops;
    // random resized crop, ten attempts then the whole image
    const double area = double(kPlane);
    double h = kSide, w = kSide, top = 0, left = 0;
    for (int attempt = 0; attempt < 10; ++attempt) {
        const double target = area * rng.uniform(p.crop_scale_min, p.crop_scale_max);
        const double ratio = std::exp(rng.uniform(std::log(p.crop_ratio_min), std::log(p.crop_ratio_max)));
        const double cw = std::round(std::sqrt(target * ratio)), ch = std::round(std::sqrt(target / ratio));
        if (cw >= 1 && ch >= 1 && cw <= kSide && ch <= kSide) {
            w = cw;
            h = ch;
            top = double(rng.below(static_cast<std::size_t>(kSide - ch) + 1));
            left = double(rng.below(static_cast<std::size_t>(kSide - cw) + 1));
            break;
        }
    }
    std::vector<float> src(img.begin(), img.end());
    resized_crop(src, img, top, left, h, w);

    if (rng.bernoulli(p.flip_prob)) horizontal_flip(img);

    if (rng.bernoulli(p.jitter_prob)) {
        std::array<int, 4> order{0, 1, 2, 3};
        rng.shuffle(order.begin(), order.end());
        for (int op : order) {
            const double s = p.jitter_strength[op];
            if (s <= 0) continue;
            switch (op) {
                case 0: adjust_brightness(img, rng.uniform(std::max(0.0, 1 - s), 1 + s)); break;
                case 1: adjust_contrast(img, rng.uniform(std::max(0.0, 1 - s), 1 + s)); break;
                case 2: adjust_saturation(img, rng.uniform(std::max(0.0, 1 - s), 1 + s)); break;
                default: adjust_hue(img, rng.uniform(-s, s)); break;
            }
        }
    }

    if (rng.bernoulli(p.grayscale_prob)) to_grayscale(img);
}

}  // namespace

void Augmenter::apply(std::span<const float> in, std::span<float> out, Rng& rng) const {
    if (in.size() != out.size()) throw ShapeError("augmentation output width differs from input");
    if (!image_mode_) {
        for (std::size_t k = 0; k < in.size(); ++k) {
            double v = in[k];
            if (vec_.jitter > 0) v += vec_.jitter * rng.normal();
            if (vec_.dropout > 0 && rng.bernoulli(vec_.dropout)) v = 0.0;
            out[k] = static_cast<float>(v);
        }
        return;
    }
    if (in.size() != kCifarPixels)
        throw ShapeError("image augmentation expects 3072 values, got " + std::to_string(in.size()));
    const std::size_t plane = image_ops::kPlane;
    for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t c = k / plane;
        out[k] = std::clamp(in[k] * stats_.stddev[c] + stats_.mean[c], 0.0f, 1.0f);
    }
    augment_image(img_, out, rng);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const std::size_t c = k / plane;
        out[k] = (out[k] - stats_.mean[c]) / stats_.stddev[c];
    }
}

Tensor<float> Augmenter::apply(const Tensor<float>& rows, Rng& rng) const {
    Tensor<float> out(Shape{rows.rows(), rows.cols()});
    for (std::size_t r = 0; r < rows.rows(); ++r) apply(rows.row(r), out.row(r), rng);
    return out;
}

}  // namespace osscl::scenario
