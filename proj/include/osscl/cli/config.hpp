#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "osscl/nets/encoder_projector.hpp"
#include "osscl/numcore/error.hpp"
#include "osscl/scenario/augment.hpp"
#include "osscl/scenario/dataset.hpp"
#include "osscl/scenario/stream.hpp"
#include "osscl/trainer/trainer.hpp"

namespace osscl::cli {

using Json = nlohmann::json;

// Schema violation; `path()` names the offending key, e.g. "method.gamma".
class ConfigError : public Error {
public:
    ConfigError(std::string path, const std::string& message)
        : Error(path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

enum class DatasetKind { synth, cifar, file };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::synth;
    scenario::SynthParams synth;  // kind == synth
    std::string train_path;       // kind == cifar
    std::string test_path;        // kind == cifar, optional
    std::size_t num_classes = 10; // kind == cifar
    std::string path;             // kind == file
};

struct ExperimentConfig {
    std::string label;          // row name in comparison tables; defaults to the method name
    std::string scenario_name = "scenario";
    DatasetSpec main;
    std::vector<DatasetSpec> peripherals;
    scenario::ScenarioConfig scenario;  // seed is replaced by each run seed
    trainer::MethodConfig method;
    nets::Architecture architecture;
    bool input_dim_set = false;  // otherwise taken from the main dataset
    scenario::VectorAugment vector_augment;
    scenario::ImageAugment image_augment;
    std::vector<std::uint64_t> seeds{0};
    std::string output;
};

// Validates every key and value before anything is computed. Relative
// dataset paths resolve against `base_dir`.
ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

// Complete config with all defaults spelled out; parse_config(to_json(c)) == c.
Json to_json(const ExperimentConfig& config);

// Generates or reads the dataset a spec describes.
scenario::Dataset build_dataset(const DatasetSpec& spec);

}  // namespace osscl::cli
