#pragma once

namespace osscl::numcore {

// Per-epoch cosine annealing from initial_lr down to min_lr.
struct CosineSchedule {
    double initial_lr = 0.01;
    double min_lr = 1e-4;
    int total_epochs = 1;
};

// lr(e) = min + (init - min) * (1 + cos(pi * e / (E - 1))) / 2.
// A single-epoch schedule stays at initial_lr.
double cosine_lr_at(const CosineSchedule& schedule, int epoch);

}  // namespace osscl::numcore
