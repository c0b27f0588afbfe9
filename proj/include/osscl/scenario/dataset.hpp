#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "osscl/numcore/tensor.hpp"

namespace osscl::scenario {

using numcore::Tensor;

// Rows of samples with labels and globally unique ids.
struct LabeledSet {
    Tensor<float> x;  // [n x D]
    std::vector<int> y;
    std::vector<std::uint64_t> ids;

    LabeledSet() = default;
    explicit LabeledSet(std::size_t dim);

    std::size_t size() const { return y.size(); }
    std::size_t dim() const { return x.cols(); }
    bool empty() const { return y.empty(); }

    LabeledSet subset(std::span<const std::size_t> rows) const;
    void append(const LabeledSet& other);
    void append_row(std::span<const float> row, int label, std::uint64_t id);
};

// Per-channel statistics used to normalize image pixels.
struct ChannelStats {
    std::array<float, 3> mean{0.f, 0.f, 0.f};
    std::array<float, 3> stddev{1.f, 1.f, 1.f};
};

struct Dataset {
    std::string name;
    std::size_t num_classes = 0;
    LabeledSet train;
    LabeledSet test;
    // Set for 3x32x32 images stored normalized; absent for plain vectors.
    std::optional<ChannelStats> image_stats;

    std::size_t dim() const { return train.dim(); }
    bool is_image() const { return image_stats.has_value(); }
};

struct SynthParams {
    std::size_t num_classes = 10;
    std::size_t dim = 16;
    std::size_t train_per_class = 500;
    std::size_t test_per_class = 100;
    double separation = 4.0;  // radius of the sphere holding class means
    double noise = 1.0;       // isotropic standard deviation around each mean
    double domain_shift = 0.0;  // distance of the sphere's center from the origin
    std::uint64_t seed = 0;
    std::string name = "synth";
};

// Gaussian classes with means uniform on a sphere whose center sits at
// distance `domain_shift` from the origin in a seed-dependent direction, so
// datasets with different seeds occupy different regions. Ids carry a tag derived
// from (name, seed), so datasets built from different seeds never share ids.
Dataset synth_dataset(const SynthParams& params);

// Id prefix shared by every sample of a dataset with this name and seed.
std::uint64_t dataset_id_base(const std::string& name, std::uint64_t seed);

// Raw CIFAR-10 records: 1 label byte followed by 3072 channel-major pixels.
struct CifarRecords {
    std::vector<std::uint8_t> labels;
    std::vector<std::uint8_t> pixels;  // 3072 bytes per record

    std::size_t size() const { return labels.size(); }
};

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecordBytes = kCifarPixels + 1;

CifarRecords read_cifar_records(const std::filesystem::path& path, std::size_t num_classes = 10);
void write_cifar_records(const std::filesystem::path& path, const CifarRecords& records);

// Loads train and test record files, scales pixels to [0,1] and normalizes
// each channel with statistics of the training file.
Dataset load_cifar_binary(const std::filesystem::path& train_path, const std::filesystem::path& test_path,
                          std::size_t num_classes = 10);
// Single-file variant: all records become the training split.
Dataset load_cifar_binary(const std::filesystem::path& path, std::size_t num_classes = 10);

// Byte-exact export of a dataset (see README for the layout).
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace osscl::scenario
