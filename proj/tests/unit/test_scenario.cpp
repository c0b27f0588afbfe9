#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "osscl/scenario/augment.hpp"
#include "osscl/scenario/dataset.hpp"
#include "osscl/scenario/memory.hpp"
#include "osscl/scenario/stream.hpp"

using namespace osscl;
using namespace osscl::scenario;
using numcore::Rng;
using numcore::Shape;

namespace {

SynthParams small(std::uint64_t seed, std::string name = "main", std::size_t classes = 8) {
    SynthParams p;
    p.num_classes = classes;
    p.train_per_class = 100;
    p.test_per_class = 20;
    p.seed = seed;
    p.name = std::move(name);
    return p;
}

std::filesystem::path temp_file(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

LabeledSet labeled_block(int label, std::size_t n, std::uint64_t first_id) {
    LabeledSet s(2);
    for (std::size_t i = 0; i < n; ++i) {
        const float row[2] = {static_cast<float>(i), static_cast<float>(label)};
        s.append_row(row, label, first_id + i);
    }
    return s;
}

}  // namespace

TEST_CASE("noise-free synthetic classes collapse to their means") {
    auto p = small(3);
    p.noise = 0.0;
    auto d = synth_dataset(p);
    for (std::size_t i = 1; i < d.train.size(); ++i) {
        if (d.train.y[i] != d.train.y[i - 1]) continue;
        for (std::size_t k = 0; k < d.dim(); ++k) CHECK(d.train.x(i, k) == d.train.x(i - 1, k));
    }
    double norm = 0;
    for (float v : d.train.x.row(0)) norm += double(v) * v;
    CHECK(std::sqrt(norm) == doctest::Approx(p.separation).epsilon(1e-6));
}

TEST_CASE("synthetic datasets are deterministic and id-disjoint across seeds") {
    auto a = synth_dataset(small(1)), b = synth_dataset(small(1)), c = synth_dataset(small(2));
    CHECK(a.train.x == b.train.x);
    CHECK(a.train.ids == b.train.ids);
    std::set<std::uint64_t> ids(a.train.ids.begin(), a.train.ids.end());
    ids.insert(a.test.ids.begin(), a.test.ids.end());
    CHECK(ids.size() == a.train.size() + a.test.size());
    for (auto id : c.train.ids) CHECK(ids.count(id) == 0);
    CHECK_THROWS_AS(synth_dataset(small(1, "x", 1)), InvalidArgument);
}

TEST_CASE("CIFAR records round trip and validate") {
    CifarRecords r;
    Rng rng(5);
    for (int i = 0; i < 4; ++i) {
        r.labels.push_back(static_cast<std::uint8_t>(i % 10));
        for (std::size_t k = 0; k < kCifarPixels; ++k) r.pixels.push_back(static_cast<std::uint8_t>(rng.below(256)));
    }
    // all-zero record
    r.labels[0] = 0;
    std::fill(r.pixels.begin(), r.pixels.begin() + kCifarPixels, 0);
    const auto path = temp_file("osscl_cifar_test.bin");
    write_cifar_records(path, r);
    CHECK(std::filesystem::file_size(path) == 4 * kCifarRecordBytes);
    auto back = read_cifar_records(path);
    CHECK(back.labels == r.labels);
    CHECK(back.pixels == r.pixels);

    auto d = load_cifar_binary(path);
    REQUIRE(d.is_image());
    CHECK(d.train.size() == 4);
    CHECK(d.train.y[0] == 0);
    // black pixels map to -mean/std in every channel
    for (std::size_t c = 0; c < 3; ++c)
        CHECK(d.train.x(0, c * 1024) == doctest::Approx(-d.image_stats->mean[c] / d.image_stats->stddev[c]));

    {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        out.put(1);
    }
    CHECK_THROWS_AS(read_cifar_records(path), FormatError);
    r.labels[1] = 12;
    write_cifar_records(path, r);
    CHECK_THROWS_AS(read_cifar_records(path), FormatError);
    std::filesystem::remove(path);
}

TEST_CASE("dataset export is byte exact") {
    auto d = synth_dataset(small(9));
    const auto p1 = temp_file("osscl_ds1.bin"), p2 = temp_file("osscl_ds2.bin");
    save_dataset(d, p1);
    auto back = load_dataset(p1);
    CHECK(back.name == d.name);
    CHECK(back.num_classes == d.num_classes);
    CHECK(back.train.x == d.train.x);
    CHECK(back.test.ids == d.test.ids);
    save_dataset(back, p2);
    std::ifstream a(p1, std::ios::binary), b(p2, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    std::filesystem::resize_file(p1, std::filesystem::file_size(p1) - 3);
    CHECK_THROWS_AS(load_dataset(p1), FormatError);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("identity vector augmentation") {
    auto aug = Augmenter::vector({0.0, 0.0});
    Rng rng(1);
    auto x = Tensor<float>::matrix(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(aug.apply(x, rng) == x);
}

TEST_CASE("vector augmentation is unbiased") {
    const double sigma = 0.5;
    auto aug = Augmenter::vector({sigma, 0.0});
    Rng rng(2);
    std::vector<float> x{1.f, -2.f, 0.5f}, out(3);
    std::vector<double> mean(3, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        aug.apply(x, out, rng);
        for (int k = 0; k < 3; ++k) mean[k] += out[k];
    }
    for (int k = 0; k < 3; ++k) CHECK(std::abs(mean[k] / n - x[k]) < 3 * sigma / 100);
}

TEST_CASE("image primitives") {
    std::vector<float> img(kCifarPixels);
    Rng rng(3);
    for (auto& v : img) v = static_cast<float>(rng.uniform());
    auto copy = img;
    image_ops::horizontal_flip(copy);
    CHECK(copy != img);
    image_ops::horizontal_flip(copy);
    CHECK(copy == img);

    std::vector<float> out(kCifarPixels);
    image_ops::resized_crop(img, out, 0, 0, 32, 32);
    for (std::size_t k = 0; k < img.size(); ++k) CHECK(out[k] == doctest::Approx(img[k]));

    copy = img;
    image_ops::adjust_hue(copy, 0.0);
    for (std::size_t k = 0; k < img.size(); ++k) CHECK(copy[k] == doctest::Approx(img[k]).epsilon(1e-5));
    image_ops::to_grayscale(copy);
    CHECK(copy[5] == copy[1024 + 5]);
}

TEST_CASE("image augmentation keeps shape and is seeded") {
    ChannelStats stats;
    auto aug = Augmenter::image(stats);
    Rng a(4), b(4);
    Tensor<float> x(Shape{2, kCifarPixels}, 0.25f);
    auto ya = aug.apply(x, a), yb = aug.apply(x, b);
    CHECK(ya.shape() == x.shape());
    CHECK(ya == yb);
}

TEST_CASE("stream structure") {
    auto main = synth_dataset(small(11));
    auto peri = synth_dataset(small(12, "peripheral"));
    ScenarioConfig cfg;
    cfg.tasks = 4;
    cfg.classes_per_task = 2;
    cfg.labeled_fraction = 0.05;
    cfg.n_related = 200;
    cfg.n_unrelated = 100;
    auto s = build_stream(cfg, main, {&peri});
    REQUIRE(s.steps.size() == 4);
    std::set<int> all;
    for (const auto& step : s.steps) {
        CHECK(step.classes.size() == 2);
        all.insert(step.classes.begin(), step.classes.end());
        CHECK(step.labeled.size() == 2 * 5);  // floor(0.05 * 100) per class
        CHECK(step.unlabeled.size() == 300);
    }
    CHECK(all.size() == 8);
    CHECK(s.test.size() == 8 * 20);
}

TEST_CASE("stream invariants over seeds") {
    auto main = synth_dataset(small(21));
    auto peri = synth_dataset(small(22, "peripheral"));
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ScenarioConfig cfg;
        cfg.n_related = 300;
        cfg.n_unrelated = 100;
        cfg.seed = seed;
        auto s = build_stream(cfg, main, {&peri});
        auto again = build_stream(cfg, main, {&peri});

        std::set<std::uint64_t> labeled_ids, test_ids(s.test.ids.begin(), s.test.ids.end());
        for (const auto& step : s.steps) labeled_ids.insert(step.labeled.ids.begin(), step.labeled.ids.end());
        for (std::size_t t = 0; t < s.steps.size(); ++t) {
            const auto& u = s.steps[t].unlabeled;
            CHECK(u.x == again.steps[t].unlabeled.x);
            CHECK(u.ids == again.steps[t].unlabeled.ids);
            std::set<std::uint64_t> step_ids(u.ids.begin(), u.ids.end());
            CHECK(step_ids.size() == u.size());
            for (auto id : u.ids) {
                CHECK(labeled_ids.count(id) == 0);
                CHECK(test_ids.count(id) == 0);
            }
        }
        for (auto id : labeled_ids) CHECK(test_ids.count(id) == 0);
    }
}

TEST_CASE("stream variants and pool exhaustion") {
    auto main = synth_dataset(small(31));
    auto peri = synth_dataset(small(32, "peripheral"));
    ScenarioConfig cfg;
    cfg.n_related = 100;
    cfg.n_unrelated = 50;

    cfg.variant = StreamVariant::only_related;
    for (const auto& step : build_stream(cfg, main, {&peri}).steps) CHECK(step.unlabeled.size() == 100);
    cfg.variant = StreamVariant::only_unrelated;
    for (const auto& step : build_stream(cfg, main, {&peri, &peri}).steps) CHECK(step.unlabeled.size() == 100);
    cfg.variant = StreamVariant::after;
    for (const auto& step : build_stream(cfg, main, {&peri}).steps) CHECK(step.unlabeled.size() == 100);

    cfg.variant = StreamVariant::standard;
    cfg.n_related = 8 * 95 + 1;
    CHECK_THROWS_AS(build_stream(cfg, main, {&peri}), PoolExhausted);
    cfg.n_related = 10;
    cfg.n_unrelated = peri.train.size() + 1;
    CHECK_THROWS_AS(build_stream(cfg, main, {&peri}), PoolExhausted);

    cfg = {};
    cfg.tasks = 5;
    CHECK_THROWS_AS(build_stream(cfg, main, {}), InvalidArgument);
    cfg = {};
    cfg.labeled_fraction = 0.001;
    CHECK_THROWS_AS(build_stream(cfg, main, {}), InvalidArgument);
}

TEST_CASE("memory quotas") {
    CHECK(class_quotas(48, 8) == std::vector<std::size_t>(8, 6));
    CHECK(class_quotas(50, 8) == std::vector<std::size_t>{7, 7, 6, 6, 6, 6, 6, 6});
}

TEST_CASE("memory stays balanced and deterministic") {
    for (auto policy : {MemoryPolicy::random, MemoryPolicy::low_confidence, MemoryPolicy::high_confidence,
                        MemoryPolicy::rainbow}) {
        MemoryBuffer a{50, policy, {}}, b{50, policy, {}};
        ConfidenceFn conf = [](const Tensor<float>& x) {
            std::vector<double> out;
            for (std::size_t r = 0; r < x.rows(); ++r) out.push_back(x(r, 0));
            return out;
        };
        Rng ra(7), rb(7);
        for (int t = 0; t < 4; ++t) {
            LabeledSet incoming = labeled_block(2 * t, 25, 1000 * t);
            incoming.append(labeled_block(2 * t + 1, 25, 1000 * t + 500));
            memory_update(a, incoming, conf, ra);
            memory_update(b, incoming, conf, rb);
            std::map<int, std::size_t> counts;
            for (int y : a.items.y) ++counts[y];
            CHECK(a.size() == 50);
            CHECK(counts.size() == static_cast<std::size_t>(2 * t + 2));
            std::size_t lo = 1000, hi = 0;
            for (auto [label, n] : counts) lo = std::min(lo, n), hi = std::max(hi, n);
            CHECK(hi - lo <= 1);
            CHECK(a.items.ids == b.items.ids);
        }
        if (policy == MemoryPolicy::high_confidence) {
            // confidence is the row index inside its class block; the top 6 survive
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a.items.y[i] == 7) CHECK(a.items.x(i, 0) >= 19.0f);
        }
        if (policy == MemoryPolicy::low_confidence)
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a.items.y[i] == 7) CHECK(a.items.x(i, 0) <= 5.0f);
    }
}

TEST_CASE("memory capacity errors") {
    MemoryBuffer m{3, MemoryPolicy::random, {}};
    Rng rng(1);
    LabeledSet four = labeled_block(0, 2, 0);
    for (int c = 1; c < 4; ++c) four.append(labeled_block(c, 2, 10 * c));
    CHECK_THROWS_AS(memory_update(m, four, {}, rng), CapacityError);
    MemoryBuffer needs_conf{10, MemoryPolicy::rainbow, {}};
    CHECK_THROWS_AS(memory_update(needs_conf, labeled_block(0, 20, 0), {}, rng), InvalidArgument);
}

TEST_CASE("epoch batches cover every element once") {
    Rng rng(3);
    for (std::size_t n : {1u, 7u, 64u, 100u}) {
        auto batches = epoch_batches(n, 16, rng);
        std::vector<int> seen(n, 0);
        for (const auto& b : batches) {
            CHECK(b.size() <= 16);
            for (auto i : b) ++seen[i];
        }
        for (int s : seen) CHECK(s == 1);
        if (n < 16) CHECK(batches.size() == 1);
    }
}

TEST_CASE("training pool flags pseudo labels and skips duplicates") {
    TrainingPool pool;
    pool.add(labeled_block(0, 4, 0), false);
    pool.add(labeled_block(0, 4, 0), false);
    pool.add(labeled_block(1, 3, 100), true);
    CHECK(pool.size() == 7);
    CHECK(std::count(pool.pseudo.begin(), pool.pseudo.end(), true) == 3);
}

TEST_CASE("variant class restrictions") {
    auto main = synth_dataset(small(41));
    auto peri = synth_dataset(small(42, "peripheral"));
    std::map<std::uint64_t, int> label_of;
    for (std::size_t i = 0; i < main.train.size(); ++i) label_of[main.train.ids[i]] = main.train.y[i];
    auto task_index = [](const Stream& s, int c) {
        for (std::size_t t = 0; t < s.task_classes.size(); ++t)
            if (std::count(s.task_classes[t].begin(), s.task_classes[t].end(), c)) return t;
        return std::size_t{99};
    };
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        ScenarioConfig cfg;
        cfg.seed = seed;
        cfg.n_related = 150;
        cfg.n_unrelated = 50;
        for (auto v : {StreamVariant::after, StreamVariant::before, StreamVariant::non_iid}) {
            cfg.variant = v;
            cfg.non_iid_fraction = 0.3;
            auto s = build_stream(cfg, main, {&peri});
            for (std::size_t t = 0; t < s.steps.size(); ++t) {
                std::set<int> classes;
                std::size_t related = 0;
                for (auto id : s.steps[t].unlabeled.ids) {
                    auto it = label_of.find(id);
                    if (it == label_of.end()) continue;
                    ++related;
                    classes.insert(it->second);
                    if (v == StreamVariant::after) CHECK(task_index(s, it->second) >= t);
                    if (v == StreamVariant::before) CHECK(task_index(s, it->second) <= t);
                }
                if (v == StreamVariant::non_iid) {
                    CHECK(classes.size() == 3);  // ceil(0.3 * 8)
                    CHECK(s.steps[t].unlabeled.size() == 200);
                } else {
                    CHECK(related == s.steps[t].unlabeled.size());
                }
            }
        }
    }
}
