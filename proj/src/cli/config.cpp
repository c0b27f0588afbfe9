#include "osscl/cli/config.hpp"

#include <fstream>
#include <limits>
#include <set>

namespace osscl::cli {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::string indexed(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

bool as_bool(const Json& j, const std::string& path) {
    if (!j.is_boolean()) throw ConfigError(path, "expected true or false");
    return j.get<bool>();
}

double as_double(const Json& j, const std::string& path) {
    if (!j.is_number()) throw ConfigError(path, "expected a number");
    return j.get<double>();
}

std::uint64_t as_u64(const Json& j, const std::string& path) {
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(j.get<std::int64_t>());
    throw ConfigError(path, "expected a non-negative integer");
}

std::size_t as_size(const Json& j, const std::string& path) { return static_cast<std::size_t>(as_u64(j, path)); }

std::string as_string(const Json& j, const std::string& path) {
    if (!j.is_string()) throw ConfigError(path, "expected a string");
    return j.get<std::string>();
}

// Wraps a JSON object, remembers which keys were read and rejects the rest.
class ObjectReader {
public:
    ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    template <class F>
    void optional(const std::string& key, F&& read) {
        auto it = j_.find(key);
        if (it == j_.end()) return;
        used_.insert(key);
        read(*it, join(path_, key));
    }

    template <class F>
    void required(const std::string& key, F&& read) {
        if (!j_.contains(key)) throw ConfigError(join(path_, key), "missing required key");
        optional(key, std::forward<F>(read));
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!used_.count(it.key())) throw ConfigError(join(path_, it.key()), "unknown key");
    }

    const std::string& path() const { return path_; }

private:
    const Json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <class E, class Parse>
E as_enum(const Json& j, const std::string& path, Parse parse) {
    const std::string name = as_string(j, path);
    try {
        return parse(name);
    } catch (const InvalidArgument& e) {
        throw ConfigError(path, e.what());
    }
}

std::string resolve(const std::string& p, const std::filesystem::path& base) {
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty()) path = base / path;
    return path.lexically_normal().string();
}

std::string to_string(DatasetKind k) {
    switch (k) {
        case DatasetKind::synth: return "synth";
        case DatasetKind::cifar: return "cifar";
        case DatasetKind::file: return "file";
    }
    return "?";
}

DatasetSpec parse_dataset(const Json& j, const std::string& path, const std::filesystem::path& base) {
    ObjectReader r(j, path);
    DatasetSpec d;
    r.required("kind", [&](const Json& v, const std::string& p) {
        const auto name = as_string(v, p);
        if (name == "synth") d.kind = DatasetKind::synth;
        else if (name == "cifar") d.kind = DatasetKind::cifar;
        else if (name == "file") d.kind = DatasetKind::file;
        else throw ConfigError(p, "expected one of synth, cifar, file");
    });
    switch (d.kind) {
        case DatasetKind::synth: {
            auto& s = d.synth;
            r.optional("name", [&](const Json& v, const std::string& p) { s.name = as_string(v, p); });
            r.optional("num_classes", [&](const Json& v, const std::string& p) { s.num_classes = as_size(v, p); });
            r.optional("dim", [&](const Json& v, const std::string& p) { s.dim = as_size(v, p); });
            r.optional("train_per_class", [&](const Json& v, const std::string& p) { s.train_per_class = as_size(v, p); });
            r.optional("test_per_class", [&](const Json& v, const std::string& p) { s.test_per_class = as_size(v, p); });
            r.optional("separation", [&](const Json& v, const std::string& p) { s.separation = as_double(v, p); });
            r.optional("noise", [&](const Json& v, const std::string& p) { s.noise = as_double(v, p); });
            r.optional("domain_shift", [&](const Json& v, const std::string& p) { s.domain_shift = as_double(v, p); });
            r.optional("seed", [&](const Json& v, const std::string& p) { s.seed = as_u64(v, p); });
            if (s.num_classes < 2) throw ConfigError(join(path, "num_classes"), "needs at least 2 classes");
            if (s.dim == 0) throw ConfigError(join(path, "dim"), "must be positive");
            if (s.separation < 0) throw ConfigError(join(path, "separation"), "must be non-negative");
            if (s.noise < 0) throw ConfigError(join(path, "noise"), "must be non-negative");
            if (s.domain_shift < 0) throw ConfigError(join(path, "domain_shift"), "must be non-negative");
            break;
        }
        case DatasetKind::cifar:
            r.required("train", [&](const Json& v, const std::string& p) { d.train_path = resolve(as_string(v, p), base); });
            r.optional("test", [&](const Json& v, const std::string& p) { d.test_path = resolve(as_string(v, p), base); });
            r.optional("num_classes", [&](const Json& v, const std::string& p) { d.num_classes = as_size(v, p); });
            if (d.num_classes < 2 || d.num_classes > 256) throw ConfigError(join(path, "num_classes"), "must lie in [2, 256]");
            break;
        case DatasetKind::file:
            r.required("path", [&](const Json& v, const std::string& p) { d.path = resolve(as_string(v, p), base); });
            break;
    }
    r.finish();
    return d;
}

Json dataset_json(const DatasetSpec& d) {
    Json j{{"kind", to_string(d.kind)}};
    switch (d.kind) {
        case DatasetKind::synth:
            j["name"] = d.synth.name;
            j["num_classes"] = d.synth.num_classes;
            j["dim"] = d.synth.dim;
            j["train_per_class"] = d.synth.train_per_class;
            j["test_per_class"] = d.synth.test_per_class;
            j["separation"] = d.synth.separation;
            j["noise"] = d.synth.noise;
            j["domain_shift"] = d.synth.domain_shift;
            j["seed"] = d.synth.seed;
            break;
        case DatasetKind::cifar:
            j["train"] = d.train_path;
            if (!d.test_path.empty()) j["test"] = d.test_path;
            j["num_classes"] = d.num_classes;
            break;
        case DatasetKind::file:
            j["path"] = d.path;
            break;
    }
    return j;
}

void parse_scenario(const Json& j, ExperimentConfig& c, const std::filesystem::path& base) {
    ObjectReader r(j, "scenario");
    auto& s = c.scenario;
    r.optional("name", [&](const Json& v, const std::string& p) { c.scenario_name = as_string(v, p); });
    r.required("main", [&](const Json& v, const std::string& p) { c.main = parse_dataset(v, p, base); });
    r.optional("peripherals", [&](const Json& v, const std::string& p) {
        if (!v.is_array()) throw ConfigError(p, "expected an array of datasets");
        c.peripherals.clear();
        for (std::size_t i = 0; i < v.size(); ++i) c.peripherals.push_back(parse_dataset(v[i], indexed(p, i), base));
    });
    r.optional("tasks", [&](const Json& v, const std::string& p) { s.tasks = as_size(v, p); });
    r.optional("classes_per_task", [&](const Json& v, const std::string& p) { s.classes_per_task = as_size(v, p); });
    r.optional("labeled_fraction", [&](const Json& v, const std::string& p) { s.labeled_fraction = as_double(v, p); });
    r.optional("n_related", [&](const Json& v, const std::string& p) { s.n_related = as_size(v, p); });
    r.optional("n_unrelated", [&](const Json& v, const std::string& p) { s.n_unrelated = as_size(v, p); });
    r.optional("variant", [&](const Json& v, const std::string& p) {
        s.variant = as_enum<scenario::StreamVariant>(v, p, scenario::parse_stream_variant);
    });
    r.optional("non_iid_fraction", [&](const Json& v, const std::string& p) { s.non_iid_fraction = as_double(v, p); });
    r.finish();
    if (s.tasks == 0) throw ConfigError("scenario.tasks", "must be positive");
    if (s.classes_per_task == 0) throw ConfigError("scenario.classes_per_task", "must be positive");
    if (!(s.labeled_fraction > 0 && s.labeled_fraction <= 1)) throw ConfigError("scenario.labeled_fraction", "must lie in (0, 1]");
    if (!(s.non_iid_fraction > 0 && s.non_iid_fraction <= 1)) throw ConfigError("scenario.non_iid_fraction", "must lie in (0, 1]");
}

void parse_method(const Json& j, trainer::MethodConfig& m) {
    ObjectReader r(j, "method");
    auto real = [&](const char* key, double& out) {
        r.optional(key, [&](const Json& v, const std::string& p) { out = as_double(v, p); });
    };
    auto count = [&](const char* key, std::size_t& out) {
        r.optional(key, [&](const Json& v, const std::string& p) { out = as_size(v, p); });
    };
    auto flag = [&](const char* key, bool& out) {
        r.optional(key, [&](const Json& v, const std::string& p) { out = as_bool(v, p); });
    };
    r.required("name", [&](const Json& v, const std::string& p) { m.method = as_enum<trainer::Method>(v, p, trainer::parse_method); });
    flag("use_sup", m.use_sup);
    flag("use_td", m.use_td);
    flag("use_kd", m.use_kd);
    r.optional("variant", [&](const Json& v, const std::string& p) {
        m.variant = as_enum<trainer::SegregationVariant>(v, p, trainer::parse_segregation_variant);
    });
    flag("pretrain_reference", m.pretrain_reference);
    flag("pseudo_anchor", m.supcon.pseudo_anchor);
    flag("pseudo_positive", m.supcon.pseudo_positive);
    real("tau", m.weights.tau);
    real("tau_teacher", m.weights.tau_teacher);
    real("tau_student", m.weights.tau_student);
    real("gamma", m.weights.gamma);
    real("lambda", m.weights.lambda);
    real("eta_id", m.eta_id);
    real("eta_pl", m.eta_pl);
    r.optional("threshold_spread", [&](const Json& v, const std::string& p) {
        m.spread = as_enum<segregate::ThresholdSpread>(v, p, segregate::parse_threshold_spread);
    });
    count("prototype_views", m.prototype_views);
    count("reference_epochs_first", m.reference_epochs_first);
    count("reference_epochs_later", m.reference_epochs_later);
    count("learner_epochs", m.learner_epochs);
    count("batch_size", m.batch_size);
    real("learning_rate", m.learning_rate);
    real("min_learning_rate", m.min_learning_rate);
    real("unsupervised_weight", m.unsupervised_weight);
    count("memory_capacity", m.memory_capacity);
    r.optional("memory_policy", [&](const Json& v, const std::string& p) {
        m.memory_policy = as_enum<scenario::MemoryPolicy>(v, p, scenario::parse_memory_policy);
    });
    count("classifier_epochs", m.classifier_epochs);
    count("classifier_batch", m.classifier_batch);
    real("classifier_learning_rate", m.classifier_learning_rate);
    r.finish();
    try {
        m.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError("method", e.what());
    }
}

Json method_json(const trainer::MethodConfig& m) {
    return Json{{"name", trainer::to_string(m.method)},
                {"use_sup", m.use_sup},
                {"use_td", m.use_td},
                {"use_kd", m.use_kd},
                {"variant", trainer::to_string(m.variant)},
                {"pretrain_reference", m.pretrain_reference},
                {"pseudo_anchor", m.supcon.pseudo_anchor},
                {"pseudo_positive", m.supcon.pseudo_positive},
                {"tau", m.weights.tau},
                {"tau_teacher", m.weights.tau_teacher},
                {"tau_student", m.weights.tau_student},
                {"gamma", m.weights.gamma},
                {"lambda", m.weights.lambda},
                {"eta_id", m.eta_id},
                {"eta_pl", m.eta_pl},
                {"threshold_spread", segregate::to_string(m.spread)},
                {"prototype_views", m.prototype_views},
                {"reference_epochs_first", m.reference_epochs_first},
                {"reference_epochs_later", m.reference_epochs_later},
                {"learner_epochs", m.learner_epochs},
                {"batch_size", m.batch_size},
                {"learning_rate", m.learning_rate},
                {"min_learning_rate", m.min_learning_rate},
                {"unsupervised_weight", m.unsupervised_weight},
                {"memory_capacity", m.memory_capacity},
                {"memory_policy", scenario::to_string(m.memory_policy)},
                {"classifier_epochs", m.classifier_epochs},
                {"classifier_batch", m.classifier_batch},
                {"classifier_learning_rate", m.classifier_learning_rate}};
}

void parse_architecture(const Json& j, ExperimentConfig& c) {
    ObjectReader r(j, "architecture");
    auto& a = c.architecture;
    r.optional("input_dim", [&](const Json& v, const std::string& p) {
        a.input_dim = as_size(v, p);
        c.input_dim_set = true;
    });
    r.optional("encoder_widths", [&](const Json& v, const std::string& p) {
        if (!v.is_array() || v.empty()) throw ConfigError(p, "expected a non-empty array of widths");
        a.encoder_widths.clear();
        for (std::size_t i = 0; i < v.size(); ++i) a.encoder_widths.push_back(as_size(v[i], indexed(p, i)));
    });
    r.optional("projector_hidden", [&](const Json& v, const std::string& p) { a.projector_hidden = as_size(v, p); });
    r.optional("embed_dim", [&](const Json& v, const std::string& p) { a.embed_dim = as_size(v, p); });
    r.optional("conv_stem", [&](const Json& v, const std::string& p) { a.conv_stem = as_bool(v, p); });
    r.finish();
    for (std::size_t i = 0; i < a.encoder_widths.size(); ++i)
        if (a.encoder_widths[i] == 0) throw ConfigError(indexed("architecture.encoder_widths", i), "must be positive");
    if (a.projector_hidden == 0) throw ConfigError("architecture.projector_hidden", "must be positive");
    if (a.embed_dim < 2) throw ConfigError("architecture.embed_dim", "must be at least 2");
    if (c.input_dim_set && a.input_dim == 0) throw ConfigError("architecture.input_dim", "must be positive");
}

void parse_augmentation(const Json& j, ExperimentConfig& c) {
    ObjectReader r(j, "augmentation");
    auto real = [&](const char* key, double& out) {
        r.optional(key, [&](const Json& v, const std::string& p) { out = as_double(v, p); });
    };
    auto& v = c.vector_augment;
    auto& im = c.image_augment;
    real("jitter", v.jitter);
    real("dropout", v.dropout);
    real("crop_scale_min", im.crop_scale_min);
    real("crop_scale_max", im.crop_scale_max);
    real("crop_ratio_min", im.crop_ratio_min);
    real("crop_ratio_max", im.crop_ratio_max);
    real("flip_prob", im.flip_prob);
    real("color_jitter_prob", im.jitter_prob);
    real("brightness", im.jitter_strength[0]);
    real("contrast", im.jitter_strength[1]);
    real("saturation", im.jitter_strength[2]);
    real("hue", im.jitter_strength[3]);
    real("grayscale_prob", im.grayscale_prob);
    r.finish();
    auto probability = [](double p, const char* key) {
        if (!(p >= 0 && p <= 1)) throw ConfigError(std::string("augmentation.") + key, "must lie in [0, 1]");
    };
    if (v.jitter < 0) throw ConfigError("augmentation.jitter", "must be non-negative");
    probability(v.dropout, "dropout");
    probability(im.flip_prob, "flip_prob");
    probability(im.jitter_prob, "color_jitter_prob");
    probability(im.grayscale_prob, "grayscale_prob");
    if (!(im.crop_scale_min > 0 && im.crop_scale_min <= im.crop_scale_max && im.crop_scale_max <= 1))
        throw ConfigError("augmentation.crop_scale_min", "crop scales must satisfy 0 < min <= max <= 1");
    if (!(im.crop_ratio_min > 0 && im.crop_ratio_min <= im.crop_ratio_max))
        throw ConfigError("augmentation.crop_ratio_min", "crop ratios must satisfy 0 < min <= max");
}

}  // namespace

ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    ObjectReader r(doc, "");
    r.optional("label", [&](const Json& v, const std::string& p) { c.label = as_string(v, p); });
    r.required("scenario", [&](const Json& v, const std::string&) { parse_scenario(v, c, base_dir); });
    r.required("method", [&](const Json& v, const std::string&) { parse_method(v, c.method); });
    r.optional("architecture", [&](const Json& v, const std::string&) { parse_architecture(v, c); });
    r.optional("augmentation", [&](const Json& v, const std::string&) { parse_augmentation(v, c); });
    r.optional("seeds", [&](const Json& v, const std::string& p) {
        if (!v.is_array() || v.empty()) throw ConfigError(p, "expected a non-empty array of seeds");
        c.seeds.clear();
        std::set<std::uint64_t> seen;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const auto s = as_u64(v[i], indexed(p, i));
            if (!seen.insert(s).second) throw ConfigError(indexed(p, i), "duplicate seed");
            c.seeds.push_back(s);
        }
    });
    r.optional("output", [&](const Json& v, const std::string& p) { c.output = resolve(as_string(v, p), base_dir); });
    r.finish();
    if (c.label.empty()) c.label = trainer::to_string(c.method.method);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("<file>", "cannot open config " + path.string());
    Json doc;
    try {
        doc = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
    }
    return parse_config(doc, path.parent_path());
}

Json to_json(const ExperimentConfig& c) {
    Json scenario{{"name", c.scenario_name},
                  {"main", dataset_json(c.main)},
                  {"peripherals", Json::array()},
                  {"tasks", c.scenario.tasks},
                  {"classes_per_task", c.scenario.classes_per_task},
                  {"labeled_fraction", c.scenario.labeled_fraction},
                  {"n_related", c.scenario.n_related},
                  {"n_unrelated", c.scenario.n_unrelated},
                  {"variant", scenario::to_string(c.scenario.variant)},
                  {"non_iid_fraction", c.scenario.non_iid_fraction}};
    for (const auto& p : c.peripherals) scenario["peripherals"].push_back(dataset_json(p));

    Json arch{{"encoder_widths", c.architecture.encoder_widths},
              {"projector_hidden", c.architecture.projector_hidden},
              {"embed_dim", c.architecture.embed_dim},
              {"conv_stem", c.architecture.conv_stem}};
    if (c.input_dim_set) arch["input_dim"] = c.architecture.input_dim;

    const auto& im = c.image_augment;
    Json aug{{"jitter", c.vector_augment.jitter},
             {"dropout", c.vector_augment.dropout},
             {"crop_scale_min", im.crop_scale_min},
             {"crop_scale_max", im.crop_scale_max},
             {"crop_ratio_min", im.crop_ratio_min},
             {"crop_ratio_max", im.crop_ratio_max},
             {"flip_prob", im.flip_prob},
             {"color_jitter_prob", im.jitter_prob},
             {"brightness", im.jitter_strength[0]},
             {"contrast", im.jitter_strength[1]},
             {"saturation", im.jitter_strength[2]},
             {"hue", im.jitter_strength[3]},
             {"grayscale_prob", im.grayscale_prob}};

    Json j{{"label", c.label},
           {"scenario", scenario},
           {"method", method_json(c.method)},
           {"architecture", arch},
           {"augmentation", aug},
           {"seeds", c.seeds}};
    if (!c.output.empty()) j["output"] = c.output;
    return j;
}

scenario::Dataset build_dataset(const DatasetSpec& spec) {
    switch (spec.kind) {
        case DatasetKind::synth: return scenario::synth_dataset(spec.synth);
        case DatasetKind::cifar:
            return spec.test_path.empty() ? scenario::load_cifar_binary(spec.train_path, spec.num_classes)
                                          : scenario::load_cifar_binary(spec.train_path, spec.test_path, spec.num_classes);
        case DatasetKind::file: return scenario::load_dataset(spec.path);
    }
    throw InvalidArgument("unknown dataset kind");
}

}  // namespace osscl::cli
