#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "osscl/cli/config.hpp"
#include "osscl/cli/experiment.hpp"
#include "osscl/cli/gradcheck.hpp"
#include "osscl/cli/report.hpp"

namespace {

using namespace osscl;
namespace fs = std::filesystem;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("osscl");
    logger->set_pattern("[%H:%M:%S] [%^%l%$] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    if (const char* level = std::getenv("OSSCL_LOG")) {
        const auto parsed = spdlog::level::from_str(level);
        // from_str maps unknown names to "off"
        if (parsed == spdlog::level::off && std::string(level) != "off")
            spdlog::warn("OSSCL_LOG={} is not a log level; keeping info", level);
        else
            spdlog::set_level(parsed);
    }
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::stringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        std::uint64_t value = 0;
        try {
            if (item.empty() || item[0] == '-') throw std::invalid_argument(item);
            value = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw cli::ConfigError("--seeds", "'" + item + "' is not a seed");
        if (std::find(seeds.begin(), seeds.end(), value) != seeds.end())
            throw cli::ConfigError("--seeds", "seed " + item + " appears twice");
        seeds.push_back(value);
    }
    if (seeds.empty()) throw cli::ConfigError("--seeds", "no seeds given");
    return seeds;
}

struct RunArgs {
    std::string config;
    std::string out;
    std::string seeds;
    bool force = false;
    std::size_t threads = 0;
};

void add_run_options(CLI::App* cmd, RunArgs& args) {
    cmd->add_option("--config,-c", args.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out,-o", args.out, "output directory (default: the config's \"output\")");
    cmd->add_flag("--force", args.force, "overwrite results from an earlier run");
    cmd->add_option("--seeds", args.seeds, "comma-separated seeds, replacing the config's list");
    cmd->add_option("--threads,-j", args.threads, "seeds run concurrently (default: one per core)");
}

struct Resolved {
    cli::ExperimentConfig config;
    fs::path out;
    std::size_t threads;
};

Resolved resolve(const RunArgs& args) {
    Resolved r{cli::load_config(args.config), {}, 1};
    if (!args.seeds.empty()) r.config.seeds = parse_seed_list(args.seeds);
    if (!args.out.empty())
        r.out = args.out;
    else if (!r.config.output.empty())
        r.out = r.config.output;
    else
        throw cli::ConfigError("output", "no output directory; set \"output\" or pass --out");
    r.threads = args.threads ? args.threads : std::max(1u, std::thread::hardware_concurrency());
    return r;
}

int cmd_run(const RunArgs& args) {
    const auto r = resolve(args);
    spdlog::info("running '{}' ({} seeds) into {}", r.config.label, r.config.seeds.size(), r.out.string());
    const auto result = cli::run_experiment(r.config, r.out, args.force, r.threads);
    const auto& agg = result.metrics.at("aggregate").at("final_accuracy");
    std::cout << r.config.label << ": final accuracy " << agg.at("mean").get<double>() << " ± "
              << agg.at("std").get<double>() << " over " << agg.at("n").get<std::size_t>() << " seeds\n";
    return kOk;
}

int cmd_segregate_eval(const RunArgs& args) {
    const auto r = resolve(args);
    const auto results = cli::run_segregation_eval(r.config, r.out, args.force, r.threads);
    for (const auto& seed : results)
        for (const auto& step : seed.steps)
            std::cout << "seed " << seed.seed << " step " << step.step << ": auroc "
                      << (step.ood.auroc ? cli::format_number(*step.ood.auroc) : std::string("n/a")) << ", in-distribution "
                      << step.ood.in_distribution << ", pseudo-labeled " << step.ood.pseudo_labeled << "\n";
    return kOk;
}

int cmd_gradcheck(const cli::GradcheckOptions& options) {
    bool ok = true;
    for (const auto& line : cli::run_gradcheck(options)) {
        std::cout << line.loss << ": max relative error " << line.max_relative_error << " over " << line.configs
                  << " configs " << (line.passed ? "ok" : "FAIL") << "\n";
        ok = ok && line.passed;
    }
    return ok ? kOk : kFailure;
}

int cmd_report(const std::vector<std::string>& runs, const std::string& csv_out) {
    std::vector<fs::path> paths(runs.begin(), runs.end());
    const auto table = cli::build_report(paths);
    std::cout << cli::render_text(table);
    if (!csv_out.empty()) {
        std::ofstream out(csv_out, std::ios::binary);
        if (!out) throw Error("cannot write " + csv_out);
        out << cli::render_csv(table);
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-set semi-supervised continual learning experiments"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "train and evaluate every seed of an experiment");
    add_run_options(run, run_args);

    RunArgs seg_args;
    auto* seg = app.add_subcommand("segregate-eval", "train the reference network and score segregation only");
    add_run_options(seg, seg_args);

    cli::GradcheckOptions grad_options;
    std::string fault;
    auto* grad = app.add_subcommand("gradcheck", "compare loss gradients against finite differences");
    grad->add_option("--seed", grad_options.seed, "random batch seed");
    grad->add_option("--fault", fault)->group("")->check(CLI::IsMember({"flip-supcon"}));

    std::vector<std::string> report_runs;
    std::string report_csv;
    auto* rep = app.add_subcommand("report", "tabulate runs as methods x scenarios");
    rep->add_option("runs", report_runs, "run directories or metrics.json files")->required();
    rep->add_option("--out,-o", report_csv, "also write the table as CSV");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }

    setup_logging();
    try {
        if (*run) return cmd_run(run_args);
        if (*seg) return cmd_segregate_eval(seg_args);
        if (*grad) {
            grad_options.flip_supcon = fault == "flip-supcon";
            return cmd_gradcheck(grad_options);
        }
        return cmd_report(report_runs, report_csv);
    } catch (const cli::ConfigError& e) {
        spdlog::error("config error at {}", e.what());
        return kUsage;
    } catch (const cli::OutputExists& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const cli::SchemaMismatch& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kFailure;
    }
}
