#pragma once

#include <array>
#include <span>

#include "osscl/numcore/rng.hpp"
#include "osscl/numcore/tensor.hpp"
#include "osscl/scenario/dataset.hpp"

namespace osscl::scenario {

struct VectorAugment {
    double jitter = 0.5;   // standard deviation of additive Gaussian noise
    double dropout = 0.1;  // probability each coordinate is zeroed
};

struct ImageAugment {
    double crop_scale_min = 0.2;
    double crop_scale_max = 1.0;
    double crop_ratio_min = 3.0 / 4.0;
    double crop_ratio_max = 4.0 / 3.0;
    double flip_prob = 0.5;
    double jitter_prob = 0.8;
    std::array<double, 4> jitter_strength{0.4, 0.4, 0.4, 0.1};  // brightness, contrast, saturation, hue
    double grayscale_prob = 0.2;
};

// Stochastic view generator. Image mode operates on normalized 3x32x32
// rows: pixels are mapped back to [0,1] with `stats`, transformed, and
// normalized again.
class Augmenter {
public:
    static Augmenter vector(VectorAugment params = {});
    static Augmenter image(ChannelStats stats, ImageAugment params = {});
    // Picks the mode matching the dataset.
    static Augmenter for_dataset(const Dataset& data, VectorAugment vec = {}, ImageAugment img = {});

    bool is_image() const { return image_mode_; }
    const VectorAugment& vector_params() const { return vec_; }
    const ImageAugment& image_params() const { return img_; }

    void apply(std::span<const float> in, std::span<float> out, numcore::Rng& rng) const;
    Tensor<float> apply(const Tensor<float>& rows, numcore::Rng& rng) const;

private:
    bool image_mode_ = false;
    VectorAugment vec_;
    ImageAugment img_;
    ChannelStats stats_;
};

// Image primitives on [0,1] channel-major 3x32x32 buffers.
namespace image_ops {

inline constexpr std::size_t kSide = 32;
inline constexpr std::size_t kPlane = kSide * kSide;

void horizontal_flip(std::span<float> img);
// Crops [top, top+h) x [left, left+w) and resizes back to 32x32 bilinearly.
void resized_crop(std::span<const float> in, std::span<float> out, double top, double left, double h, double w);
void to_grayscale(std::span<float> img);
void adjust_brightness(std::span<float> img, double factor);
void adjust_contrast(std::span<float> img, double factor);
void adjust_saturation(std::span<float> img, double factor);
void adjust_hue(std::span<float> img, double shift);

}  // namespace image_ops

}  // namespace osscl::scenario
