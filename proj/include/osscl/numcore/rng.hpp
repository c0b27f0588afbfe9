#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>

namespace osscl::numcore {

// Seeded random stream. Distributions are computed here from raw engine
// output so that sequences are identical across standard library vendors.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(mix(seed)) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal();

    // Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);

    bool bernoulli(double p) { return uniform() < p; }

    // Independent child stream; the parent is not advanced.
    [[nodiscard]] Rng fork(std::uint64_t stream) const;

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = below(i);
            using std::swap;
            swap(first[i - 1], first[j]);
        }
    }

    static std::uint64_t mix(std::uint64_t x);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;

};

}  // namespace osscl::numcore
