#include "osscl/cli/experiment.hpp"

#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "osscl/nets/checkpoint.hpp"

#ifndef OSSCL_VERSION
#define OSSCL_VERSION "0.0.0"
#endif

namespace osscl::cli {

namespace fs = std::filesystem;

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

fs::path seed_dir(const fs::path& out, std::uint64_t seed) { return out / ("seed_" + std::to_string(seed)); }

bool is_result_entry(const fs::path& p) {
    const auto name = p.filename().string();
    return name.rfind("seed_", 0) == 0 || name == "config.json" || name == "version.json" || name == "metrics.json";
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; rethrows the
// first failure after all workers stop.
template <class F>
void parallel_for(std::size_t n, std::size_t threads, F&& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (failure) return;
            }
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

Json version_json() {
    return Json{{"name", "osscl"}, {"version", OSSCL_VERSION}, {"metrics_schema", kMetricsSchema}, {"compiler", __VERSION__}};
}

// Feeding config.json back to the CLI reproduces the run into the same directory.
void write_echo(const fs::path& out, const ExperimentConfig& config) {
    auto echo = config;
    echo.output = fs::absolute(out).lexically_normal().string();
    write_json(out / "config.json", to_json(echo));
    write_json(out / "version.json", version_json());
}

Json thresholds_json(const segregate::ScoreStats& s) {
    return Json{{"mean", s.mean},           {"variance", s.variance}, {"eta_id", s.eta_id}, {"eta_pl", s.eta_pl},
                {"spread", segregate::to_string(s.spread)}, {"tau_id", s.tau_id}, {"tau_pl", s.tau_pl}};
}

}  // namespace

PreparedData prepare(const ExperimentConfig& config) {
    PreparedData d;
    try {
        d.main = build_dataset(config.main);
        for (const auto& p : config.peripherals) d.peripherals.push_back(build_dataset(p));
    } catch (const FormatError& e) {
        throw ConfigError("scenario.main", e.what());
    } catch (const InvalidArgument& e) {
        throw ConfigError("scenario", e.what());
    }
    for (std::size_t i = 0; i < d.peripherals.size(); ++i)
        if (d.peripherals[i].dim() != d.main.dim())
            throw ConfigError("scenario.peripherals[" + std::to_string(i) + "]",
                              "sample width " + std::to_string(d.peripherals[i].dim()) + " differs from the main dataset's " +
                                  std::to_string(d.main.dim()));
    try {
        config.scenario.validate(d.main.num_classes);
    } catch (const InvalidArgument& e) {
        throw ConfigError("scenario", e.what());
    }
    if (config.scenario.n_unrelated > 0 && d.peripherals.empty() &&
        config.scenario.variant != scenario::StreamVariant::after &&
        config.scenario.variant != scenario::StreamVariant::before &&
        config.scenario.variant != scenario::StreamVariant::only_related)
        throw ConfigError("scenario.peripherals", "n_unrelated > 0 needs at least one peripheral dataset");

    d.architecture = config.architecture;
    if (!config.input_dim_set) d.architecture.input_dim = d.main.dim();
    if (d.architecture.input_dim != d.main.dim())
        throw ConfigError("architecture.input_dim", "is " + std::to_string(d.architecture.input_dim) +
                                                        " but the main dataset has width " + std::to_string(d.main.dim()));
    if (d.architecture.conv_stem && !d.main.is_image())
        throw ConfigError("architecture.conv_stem", "needs an image dataset");
    d.augmenter = scenario::Augmenter::for_dataset(d.main, config.vector_augment, config.image_augment);
    return d;
}

scenario::Stream stream_for_seed(const ExperimentConfig& config, const PreparedData& data, std::uint64_t seed) {
    auto sc = config.scenario;
    sc.seed = seed;
    std::vector<const scenario::Dataset*> peripherals;
    for (const auto& p : data.peripherals) peripherals.push_back(&p);
    return scenario::build_stream(sc, data.main, peripherals);
}

void prepare_output_dir(const fs::path& dir, bool force) {
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) throw OutputExists(dir.string() + " exists and is not a directory");
        if (!fs::is_empty(dir)) {
            if (!force) throw OutputExists(dir.string() + " is not empty; pass --force to overwrite previous results");
            for (const auto& entry : fs::directory_iterator(dir))
                if (is_result_entry(entry.path())) fs::remove_all(entry.path());
        }
    }
    fs::create_directories(dir);
}

Json report_json(const trainer::RunReport& r) {
    Json tasks = Json::array();
    for (const auto& t : r.tasks) {
        Json jt{{"step", t.step},
                {"classes", t.classes},
                {"accuracy", t.accuracy},
                {"unlabeled", t.unlabeled},
                {"in_distribution", t.in_distribution},
                {"pseudo_labeled", t.pseudo_labeled},
                {"memory_size", t.memory_size},
                {"reference_losses", t.reference_losses},
                {"learner_losses", t.learner_losses}};
        if (t.ood) {
            jt["ood"] = Json{{"auroc", optional_json(t.ood->auroc)},
                             {"precision", t.ood->precision},
                             {"pseudo_accuracy", optional_json(t.ood->pseudo_accuracy)}};
        } else {
            jt["ood"] = nullptr;
        }
        jt["thresholds"] = t.thresholds ? thresholds_json(*t.thresholds) : Json(nullptr);
        tasks.push_back(std::move(jt));
    }
    return Json{{"method", r.method}, {"seed", r.seed}, {"final_accuracy", r.final_accuracy}, {"tasks", tasks}};
}

trainer::RunReport report_from_json(const Json& j) {
    trainer::RunReport r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_accuracy = j.at("final_accuracy").get<double>();
    for (const auto& jt : j.at("tasks")) {
        trainer::TaskRecord t;
        t.step = jt.at("step").get<std::size_t>();
        t.classes = jt.at("classes").get<std::vector<int>>();
        t.accuracy = jt.at("accuracy").get<double>();
        t.unlabeled = jt.at("unlabeled").get<std::size_t>();
        t.in_distribution = jt.at("in_distribution").get<std::size_t>();
        t.pseudo_labeled = jt.at("pseudo_labeled").get<std::size_t>();
        t.memory_size = jt.at("memory_size").get<std::size_t>();
        t.reference_losses = jt.at("reference_losses").get<std::vector<double>>();
        t.learner_losses = jt.at("learner_losses").get<std::vector<double>>();
        if (!jt.at("ood").is_null()) {
            const auto& o = jt.at("ood");
            segregate::OodMetrics m;
            m.auroc = optional_from(o.at("auroc"));
            m.precision = o.at("precision").get<double>();
            m.pseudo_accuracy = optional_from(o.at("pseudo_accuracy"));
            m.in_distribution = t.in_distribution;
            m.pseudo_labeled = t.pseudo_labeled;
            t.ood = m;
        }
        if (!jt.at("thresholds").is_null()) {
            const auto& s = jt.at("thresholds");
            segregate::ScoreStats st;
            st.mean = s.at("mean").get<double>();
            st.variance = s.at("variance").get<double>();
            st.eta_id = s.at("eta_id").get<double>();
            st.eta_pl = s.at("eta_pl").get<double>();
            st.spread = segregate::parse_threshold_spread(s.at("spread").get<std::string>());
            st.tau_id = s.at("tau_id").get<double>();
            st.tau_pl = s.at("tau_pl").get<double>();
            t.thresholds = st;
        }
        r.tasks.push_back(std::move(t));
    }
    return r;
}

std::string tasks_csv(const trainer::RunReport& r) {
    std::ostringstream out;
    out << "step,classes,accuracy,unlabeled,in_distribution,pseudo_labeled,auroc,precision,pseudo_accuracy,"
           "tau_id,tau_pl,score_mean,score_variance,memory_size,reference_loss,learner_loss\n";
    for (const auto& t : r.tasks) {
        std::string classes;
        for (std::size_t i = 0; i < t.classes.size(); ++i) classes += (i ? " " : "") + std::to_string(t.classes[i]);
        out << t.step << ',' << classes << ',' << format_number(t.accuracy) << ',' << t.unlabeled << ','
            << t.in_distribution << ',' << t.pseudo_labeled << ',';
        if (t.ood)
            out << optional_number(t.ood->auroc) << ',' << format_number(t.ood->precision) << ','
                << optional_number(t.ood->pseudo_accuracy) << ',';
        else
            out << ",,,";
        if (t.thresholds)
            out << format_number(t.thresholds->tau_id) << ',' << format_number(t.thresholds->tau_pl) << ','
                << format_number(t.thresholds->mean) << ',' << format_number(t.thresholds->variance) << ',';
        else
            out << ",,,,";
        out << t.memory_size << ',' << (t.reference_losses.empty() ? "" : format_number(t.reference_losses.back())) << ','
            << (t.learner_losses.empty() ? "" : format_number(t.learner_losses.back())) << '\n';
    }
    return out.str();
}

Json timing_json(const trainer::RunReport& r) {
    const auto& s = r.seconds;
    return Json{{"seed", r.seed},
                {"reference_seconds", s.reference},
                {"segregation_seconds", s.segregation},
                {"learner_seconds", s.learner},
                {"memory_seconds", s.memory},
                {"classifier_seconds", s.classifier},
                {"total_seconds", s.reference + s.segregation + s.learner + s.memory + s.classifier}};
}

Stat mean_std(const std::vector<double>& values) {
    Stat s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.n);
    if (s.n > 1) {
        double sq = 0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(sq / static_cast<double>(s.n - 1));
    }
    return s;
}

namespace {

Json stat_json(const Stat& s) { return Json{{"mean", s.mean}, {"std", s.stddev}, {"n", s.n}}; }

}  // namespace

Json metrics_json(const ExperimentConfig& config, const std::vector<trainer::RunReport>& reports) {
    Json per_seed = Json::array();
    std::vector<double> finals, min_aurocs, min_pseudo;
    std::vector<std::vector<double>> task_acc;
    for (const auto& r : reports) {
        Json task_accuracy = Json::array(), auroc = Json::array(), precision = Json::array(), pseudo = Json::array();
        std::optional<double> lowest_auroc, lowest_pseudo;
        for (std::size_t t = 0; t < r.tasks.size(); ++t) {
            const auto& task = r.tasks[t];
            task_accuracy.push_back(task.accuracy);
            if (task_acc.size() <= t) task_acc.emplace_back();
            task_acc[t].push_back(task.accuracy);
            if (task.ood) {
                auroc.push_back(optional_json(task.ood->auroc));
                precision.push_back(task.ood->precision);
                pseudo.push_back(optional_json(task.ood->pseudo_accuracy));
                if (task.ood->auroc) lowest_auroc = std::min(lowest_auroc.value_or(1.0), *task.ood->auroc);
                if (task.ood->pseudo_accuracy)
                    lowest_pseudo = std::min(lowest_pseudo.value_or(1.0), *task.ood->pseudo_accuracy);
            }
        }
        finals.push_back(r.final_accuracy);
        if (lowest_auroc) min_aurocs.push_back(*lowest_auroc);
        if (lowest_pseudo) min_pseudo.push_back(*lowest_pseudo);
        per_seed.push_back(Json{{"seed", r.seed},
                                {"final_accuracy", r.final_accuracy},
                                {"task_accuracy", task_accuracy},
                                {"auroc", auroc},
                                {"precision", precision},
                                {"pseudo_accuracy", pseudo}});
    }
    Json tasks = Json::array();
    for (const auto& v : task_acc) tasks.push_back(stat_json(mean_std(v)));
    Json aggregate{{"final_accuracy", stat_json(mean_std(finals))}, {"task_accuracy", tasks}};
    if (!min_aurocs.empty()) aggregate["min_task_auroc"] = stat_json(mean_std(min_aurocs));
    if (!min_pseudo.empty()) aggregate["min_task_pseudo_accuracy"] = stat_json(mean_std(min_pseudo));
    return Json{{"schema", kMetricsSchema},
                {"label", config.label},
                {"scenario", config.scenario_name},
                {"method", trainer::to_string(config.method.method)},
                {"seeds", config.seeds},
                {"per_seed", per_seed},
                {"aggregate", aggregate}};
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out, bool force, std::size_t threads) {
    const PreparedData data = prepare(config);
    prepare_output_dir(out, force);
    write_echo(out, config);

    ExperimentResult result;
    result.reports.resize(config.seeds.size());
    parallel_for(config.seeds.size(), threads, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        spdlog::info("[{}] seed {}: starting", config.label, seed);
        const auto stream = stream_for_seed(config, data, seed);
        auto report = trainer::run_continual(
            config.method, data.architecture, stream, data.augmenter, data.main.num_classes, seed,
            [&](const trainer::RunState& state, const trainer::TaskRecord& rec) {
                if (rec.step == stream.steps.size()) {
                    const fs::path dir = seed_dir(out, seed);
                    fs::create_directories(dir);
                    nets::save_checkpoint(state.learner, dir / "learner.ckpt");
                    if (config.method.trains_reference()) nets::save_checkpoint(state.reference, dir / "reference.ckpt");
                }
                if (rec.ood)
                    spdlog::debug("[{}] seed {} step {}: |U_in|={} |T_pl|={} auroc={}", config.label, seed, rec.step,
                                  rec.in_distribution, rec.pseudo_labeled, optional_number(rec.ood->auroc));
                else
                    spdlog::debug("[{}] seed {} step {} done", config.label, seed, rec.step);
            });
        const fs::path dir = seed_dir(out, seed);
        fs::create_directories(dir);
        write_json(dir / "report.json", report_json(report));
        write_text(dir / "tasks.csv", tasks_csv(report));
        write_json(dir / "timing.json", timing_json(report));
        spdlog::info("[{}] seed {}: final accuracy {:.4f}", config.label, seed, report.final_accuracy);
        result.reports[i] = std::move(report);
    });
    result.metrics = metrics_json(config, result.reports);
    write_json(out / "metrics.json", result.metrics);
    return result;
}

std::vector<SegregationEvalResult> run_segregation_eval(const ExperimentConfig& config, const fs::path& out, bool force,
                                                        std::size_t threads) {
    if (!config.method.uses_segregation())
        throw ConfigError("method.name", "segregate-eval needs the reference network (ursl)");
    const PreparedData data = prepare(config);
    prepare_output_dir(out, force);
    write_echo(out, config);

    std::vector<SegregationEvalResult> results(config.seeds.size());
    parallel_for(config.seeds.size(), threads, [&](std::size_t i) {
        const std::uint64_t seed = config.seeds[i];
        spdlog::info("[{}] segregation seed {}: starting", config.label, seed);
        const auto stream = stream_for_seed(config, data, seed);
        auto steps = trainer::run_segregation_only(config.method, data.architecture, stream, data.augmenter, seed);

        std::ostringstream summary, scores;
        summary << "step,unlabeled,related,unrelated,score_mean,score_variance,tau_id,tau_pl,in_distribution,"
                   "pseudo_labeled,auroc,precision,pseudo_accuracy\n";
        scores << "step,index,id,score,related,true_class,in_distribution,pseudo_label\n";
        for (std::size_t k = 0; k < steps.size(); ++k) {
            const auto& s = steps[k];
            const auto& pool = stream.steps[k].unlabeled;
            const auto table = segregate::score_table(s.result.output, pool);
            std::size_t related = 0;
            for (const auto& row : table) {
                related += row.related ? 1 : 0;
                scores << s.step << ',' << row.index << ',' << row.id << ',' << format_number(row.score) << ','
                       << (row.related ? 1 : 0) << ',' << row.true_class << ',' << (row.in_distribution ? 1 : 0) << ','
                       << row.pseudo_label << '\n';
            }
            const auto& st = s.result.stats;
            summary << s.step << ',' << pool.size() << ',' << related << ',' << pool.size() - related << ','
                    << format_number(st.mean) << ',' << format_number(st.variance) << ',' << format_number(st.tau_id)
                    << ',' << format_number(st.tau_pl) << ',' << s.ood.in_distribution << ',' << s.ood.pseudo_labeled
                    << ',' << optional_number(s.ood.auroc) << ',' << format_number(s.ood.precision) << ','
                    << optional_number(s.ood.pseudo_accuracy) << '\n';
        }
        const fs::path dir = seed_dir(out, seed);
        fs::create_directories(dir);
        write_text(dir / "segregation.csv", summary.str());
        write_text(dir / "scores.csv", scores.str());
        results[i] = {seed, std::move(steps)};
    });
    return results;
}

}  // namespace osscl::cli
