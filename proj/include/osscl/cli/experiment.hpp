#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "osscl/cli/config.hpp"

namespace osscl::cli {

inline constexpr const char* kMetricsSchema = "osscl-metrics/1";

// The output directory holds results and --force was not given.
class OutputExists : public Error {
public:
    using Error::Error;
};

// Datasets, resolved architecture and augmenter shared by every seed.
struct PreparedData {
    scenario::Dataset main;
    std::vector<scenario::Dataset> peripherals;
    nets::Architecture architecture;
    scenario::Augmenter augmenter;
};

// Loads datasets and checks the config against them (input width, class
// counts). Throws ConfigError.
PreparedData prepare(const ExperimentConfig& config);

scenario::Stream stream_for_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed);

// Refuses a non-empty directory unless `force`; with `force`, removes
// previously written results only.
void prepare_output_dir(const std::filesystem::path& dir, bool force);

Json report_json(const trainer::RunReport& report);
trainer::RunReport report_from_json(const Json& j);
std::string tasks_csv(const trainer::RunReport& report);
Json timing_json(const trainer::RunReport& report);

struct Stat {
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t n = 0;
};
Stat mean_std(const std::vector<double>& values);

// Aggregate over seeds; contains no timing, so reruns are byte-identical.
Json metrics_json(const ExperimentConfig& config, const std::vector<trainer::RunReport>& reports);

struct ExperimentResult {
    std::vector<trainer::RunReport> reports;  // in config seed order
    Json metrics;
};

// Runs every seed (up to `threads` concurrently) and writes
//   <out>/config.json, version.json, metrics.json,
//   <out>/seed_<s>/report.json, tasks.csv, timing.json, learner.ckpt
// plus reference.ckpt for methods that train a reference network.
ExperimentResult run_experiment(const ExperimentConfig& config, const std::filesystem::path& out, bool force,
                                std::size_t threads);

struct SegregationEvalResult {
    std::uint64_t seed = 0;
    std::vector<trainer::SegregationStep> steps;
};

// Reference training and segregation only. Writes per seed
//   <out>/seed_<s>/segregation.csv (one row per task) and scores.csv.
std::vector<SegregationEvalResult> run_segregation_eval(const ExperimentConfig& config, const std::filesystem::path& out,
                                                        bool force, std::size_t threads);

// Shortest text that parses back to the same double.
std::string format_number(double v);

}  // namespace osscl::cli
