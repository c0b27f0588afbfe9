#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace osscl::cli {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    double tolerance = 1e-4;
    double step = 1e-5;
    // Test hook: reverses the supervised loss gradient so the check must fail.
    bool flip_supcon = false;
};

struct GradcheckLine {
    std::string loss;
    std::size_t configs = 0;
    double max_relative_error = 0.0;
    bool passed = false;
};

// Finite-difference check of every training loss over random batches
// (N in {2, 4, 8}, d in {3, 8}) in double precision.
std::vector<GradcheckLine> run_gradcheck(const GradcheckOptions& options);

}  // namespace osscl::cli
