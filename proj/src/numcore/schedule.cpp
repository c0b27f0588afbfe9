#include "osscl/numcore/schedule.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "osscl/numcore/error.hpp"

namespace osscl::numcore {

double cosine_lr_at(const CosineSchedule& schedule, int epoch) {
    if (schedule.total_epochs < 1 || epoch < 0 || epoch >= schedule.total_epochs)
        throw InvalidArgument("cosine_lr_at: epoch " + std::to_string(epoch) + " outside [0, " +
                              std::to_string(schedule.total_epochs) + ")");
    if (schedule.min_lr > schedule.initial_lr) throw InvalidArgument("cosine_lr_at: min_lr exceeds initial_lr");
    if (schedule.total_epochs == 1) return schedule.initial_lr;
    const double phase = std::numbers::pi * epoch / static_cast<double>(schedule.total_epochs - 1);
    return schedule.min_lr + 0.5 * (schedule.initial_lr - schedule.min_lr) * (1.0 + std::cos(phase));
}

}  // namespace osscl::numcore
