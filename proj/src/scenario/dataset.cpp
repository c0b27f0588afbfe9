#include "osscl/scenario/dataset.hpp"

#include <cmath>
#include <fstream>

#include "osscl/numcore/binary_io.hpp"
#include "osscl/numcore/rng.hpp"

namespace osscl::scenario {

namespace io = numcore::io;
using numcore::Shape;

LabeledSet::LabeledSet(std::size_t dim) : x(Shape{0, dim}) {}

LabeledSet LabeledSet::subset(std::span<const std::size_t> rows) const {
    LabeledSet out(dim());
    out.x.storage().reserve(rows.size() * dim());
    for (std::size_t r : rows) out.append_row(x.row(r), y[r], ids[r]);
    return out;
}

void LabeledSet::append(const LabeledSet& other) {
    if (other.empty()) return;
    if (x.rank() != 2 || (empty() && dim() != other.dim())) *this = LabeledSet(other.dim());
    if (dim() != other.dim())
        throw ShapeError("cannot append samples of width " + std::to_string(other.dim()) + " to width " +
                         std::to_string(dim()));
    for (std::size_t r = 0; r < other.size(); ++r) append_row(other.x.row(r), other.y[r], other.ids[r]);
}

void LabeledSet::append_row(std::span<const float> row, int label, std::uint64_t id) {
    if (row.size() != dim())
        throw ShapeError("sample width " + std::to_string(row.size()) + " does not match " + std::to_string(dim()));
    auto& v = x.storage();
    v.insert(v.end(), row.begin(), row.end());
    x = Tensor<float>(Shape{size() + 1, dim()}, std::move(v));
    y.push_back(label);
    ids.push_back(id);
}

std::uint64_t dataset_id_base(const std::string& name, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    // low 24 bits index samples inside the dataset
    return (numcore::Rng::mix(h ^ numcore::Rng::mix(seed)) >> 24) << 24;
}

Dataset synth_dataset(const SynthParams& p) {
    if (p.num_classes < 2) throw InvalidArgument("synthetic dataset needs at least 2 classes");
    if (p.dim == 0) throw InvalidArgument("synthetic dataset dimension must be positive");
    if (p.noise < 0 || p.separation < 0 || p.domain_shift < 0) throw InvalidArgument("noise, separation and domain shift must be non-negative");

    numcore::Rng rng(p.seed);
    std::vector<std::vector<double>> means(p.num_classes, std::vector<double>(p.dim));
    for (auto& m : means) {
        double norm = 0;
        do {
            norm = 0;
            for (auto& v : m) {
                v = rng.normal();
                norm += v * v;
            }
        } while (norm < 1e-24);
        for (auto& v : m) v *= p.separation / std::sqrt(norm);
    }
    if (p.domain_shift != 0.0) {
        std::vector<double> center(p.dim);
        double norm = 0;
        for (auto& v : center) {
            v = rng.normal();
            norm += v * v;
        }
        for (auto& m : means)
            for (std::size_t k = 0; k < p.dim; ++k) m[k] += center[k] * p.domain_shift / std::sqrt(norm);
    }

    Dataset d;
    d.name = p.name;
    d.num_classes = p.num_classes;
    d.train = LabeledSet(p.dim);
    d.test = LabeledSet(p.dim);
    const std::uint64_t base = dataset_id_base(p.name, p.seed);
    std::uint64_t next_id = base;
    std::vector<float> row(p.dim);
    auto fill = [&](LabeledSet& split, std::size_t per_class) {
        for (std::size_t c = 0; c < p.num_classes; ++c)
            for (std::size_t i = 0; i < per_class; ++i) {
                for (std::size_t k = 0; k < p.dim; ++k)
                    row[k] = static_cast<float>(means[c][k] + p.noise * rng.normal());
                split.append_row(row, static_cast<int>(c), next_id++);
            }
    };
    fill(d.train, p.train_per_class);
    fill(d.test, p.test_per_class);
    return d;
}

CifarRecords read_cifar_records(const std::filesystem::path& path, std::size_t num_classes) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open CIFAR file " + path.string());
    const auto bytes = std::filesystem::file_size(path);
    if (bytes % kCifarRecordBytes != 0)
        throw FormatError("truncated CIFAR file " + path.string() + ": " + std::to_string(bytes) +
                          " bytes is not a multiple of " + std::to_string(kCifarRecordBytes));
    const std::size_t n = bytes / kCifarRecordBytes;
    CifarRecords out;
    out.labels.resize(n);
    out.pixels.resize(n * kCifarPixels);
    for (std::size_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(&out.labels[i]), 1);
        in.read(reinterpret_cast<char*>(out.pixels.data() + i * kCifarPixels), kCifarPixels);
        if (!in) throw FormatError("truncated CIFAR file " + path.string());
        if (out.labels[i] >= num_classes)
            throw FormatError("CIFAR record " + std::to_string(i) + " has label " + std::to_string(out.labels[i]) +
                              " outside [0, " + std::to_string(num_classes) + ")");
    }
    return out;
}

void write_cifar_records(const std::filesystem::path& path, const CifarRecords& records) {
    if (records.pixels.size() != records.size() * kCifarPixels)
        throw InvalidArgument("CIFAR records need 3072 pixel bytes per label");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < records.size(); ++i) {
        out.put(static_cast<char>(records.labels[i]));
        out.write(reinterpret_cast<const char*>(records.pixels.data() + i * kCifarPixels), kCifarPixels);
    }
    if (!out) throw Error("write failed for " + path.string());
}

namespace {

ChannelStats channel_stats(const CifarRecords& r) {
    ChannelStats s;
    const std::size_t plane = kCifarPixels / 3;
    for (std::size_t c = 0; c < 3; ++c) {
        double sum = 0, sq = 0;
        for (std::size_t i = 0; i < r.size(); ++i)
            for (std::size_t k = 0; k < plane; ++k) {
                const double v = r.pixels[i * kCifarPixels + c * plane + k] / 255.0;
                sum += v;
                sq += v * v;
            }
        const double n = static_cast<double>(r.size() * plane);
        const double mean = n > 0 ? sum / n : 0.0;
        const double var = n > 0 ? sq / n - mean * mean : 0.0;
        s.mean[c] = static_cast<float>(mean);
        s.stddev[c] = static_cast<float>(var > 1e-12 ? std::sqrt(var) : 1.0);
    }
    return s;
}

LabeledSet normalized_split(const CifarRecords& r, const ChannelStats& s, std::uint64_t first_id) {
    LabeledSet out(kCifarPixels);
    const std::size_t plane = kCifarPixels / 3;
    std::vector<float> row(kCifarPixels);
    for (std::size_t i = 0; i < r.size(); ++i) {
        for (std::size_t k = 0; k < kCifarPixels; ++k) {
            const std::size_t c = k / plane;
            row[k] = (r.pixels[i * kCifarPixels + k] / 255.0f - s.mean[c]) / s.stddev[c];
        }
        out.append_row(row, r.labels[i], first_id + i);
    }
    return out;
}

}  // namespace

Dataset load_cifar_binary(const std::filesystem::path& train_path, const std::filesystem::path& test_path,
                          std::size_t num_classes) {
    const auto train = read_cifar_records(train_path, num_classes);
    Dataset d;
    d.name = train_path.stem().string();
    d.num_classes = num_classes;
    d.image_stats = channel_stats(train);
    const std::uint64_t base = dataset_id_base("cifar:" + train_path.filename().string(), 0);
    d.train = normalized_split(train, *d.image_stats, base);
    if (!test_path.empty()) {
        const auto test = read_cifar_records(test_path, num_classes);
        d.test = normalized_split(test, *d.image_stats, base + train.size());
    } else {
        d.test = LabeledSet(kCifarPixels);
    }
    return d;
}

Dataset load_cifar_binary(const std::filesystem::path& path, std::size_t num_classes) {
    return load_cifar_binary(path, {}, num_classes);
}

namespace {

constexpr std::string_view kDatasetMagic = "OSSCLDAT";
constexpr std::uint32_t kDatasetVersion = 1;

void write_split(std::ostream& out, const LabeledSet& s) {
    io::write_u64(out, s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        io::write_u64(out, s.ids[i]);
        io::write_i32(out, s.y[i]);
    }
    for (float v : s.x.values()) io::write_f32(out, v);
}

LabeledSet read_split(std::istream& in, std::size_t dim) {
    const std::uint64_t n = io::read_u64(in);
    if (n > (std::uint64_t{1} << 32)) throw FormatError("dataset split size " + std::to_string(n) + " is implausible");
    LabeledSet s(dim);
    s.ids.resize(n);
    s.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        s.ids[i] = io::read_u64(in);
        s.y[i] = io::read_i32(in);
    }
    std::vector<float> values(n * dim);
    for (auto& v : values) v = io::read_f32(in);
    s.x = Tensor<float>(Shape{n, dim}, std::move(values));
    return s;
}

}  // namespace

void save_dataset(const Dataset& d, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    io::write_magic(out, kDatasetMagic);
    io::write_u32(out, kDatasetVersion);
    io::write_u32(out, static_cast<std::uint32_t>(d.name.size()));
    io::write_magic(out, d.name);
    io::write_u32(out, static_cast<std::uint32_t>(d.num_classes));
    io::write_u32(out, static_cast<std::uint32_t>(d.dim()));
    io::write_u32(out, d.is_image() ? 1u : 0u);
    if (d.image_stats) {
        for (float v : d.image_stats->mean) io::write_f32(out, v);
        for (float v : d.image_stats->stddev) io::write_f32(out, v);
    }
    write_split(out, d.train);
    write_split(out, d.test);
}

Dataset load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open dataset " + path.string());
    io::expect_magic(in, kDatasetMagic, path.string());
    if (const auto v = io::read_u32(in); v != kDatasetVersion)
        throw FormatError(path.string() + ": unsupported dataset version " + std::to_string(v));
    Dataset d;
    const auto name_len = io::read_u32(in);
    if (name_len > 4096) throw FormatError(path.string() + ": dataset name too long");
    d.name.resize(name_len);
    in.read(d.name.data(), name_len);
    d.num_classes = io::read_u32(in);
    const std::size_t dim = io::read_u32(in);
    if (io::read_u32(in) != 0) {
        ChannelStats s;
        for (auto& v : s.mean) v = io::read_f32(in);
        for (auto& v : s.stddev) v = io::read_f32(in);
        d.image_stats = s;
    }
    d.train = read_split(in, dim);
    d.test = read_split(in, dim);
    for (const auto* split : {&d.train, &d.test})
        for (int y : split->y)
            if (y < 0 || static_cast<std::size_t>(y) >= d.num_classes)
                throw FormatError(path.string() + ": label " + std::to_string(y) + " out of range");
    return d;
}

}  // namespace osscl::scenario
