#include "patan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "patan/errors.hpp"
#include "patan/format.hpp"

namespace patan {

using ordered_json = nlohmann::ordered_json;

namespace {

int sample_eval_label(const VideoSample& s) {
    return s.domain() == Domain::source ? s.source_label() : s.eval_label();
}

} // namespace

double top1_accuracy(const PatanModel& model, std::span<const VideoSample> samples,
                     bool force_unit_attention) {
    if (samples.empty())
        throw UsageError("accuracy needs at least one sample");
    int correct = 0;
    for (const auto& s : samples) {
        ad::Graph g;
        const ForwardOutput out = forward(g, model, s.frames(), {0.0, force_unit_attention});
        if (predict_label(out) == sample_eval_label(s))
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<double> per_class_accuracy(const PatanModel& model,
                                       std::span<const VideoSample> samples, int num_classes,
                                       bool force_unit_attention) {
    if (samples.empty())
        throw UsageError("accuracy needs at least one sample");
    std::vector<int> correct(num_classes, 0), total(num_classes, 0);
    for (const auto& s : samples) {
        const int label = sample_eval_label(s);
        if (label >= num_classes)
            throw InputError("sample '" + s.id() + "' has label outside the class space");
        ad::Graph g;
        const ForwardOutput out = forward(g, model, s.frames(), {0.0, force_unit_attention});
        ++total[label];
        if (predict_label(out) == label)
            ++correct[label];
    }
    std::vector<double> acc(num_classes, 0.0);
    for (int c = 0; c < num_classes; ++c)
        if (total[c] > 0)
            acc[c] = static_cast<double>(correct[c]) / total[c];
    return acc;
}

double median(std::vector<double> values) {
    if (values.empty())
        throw UsageError("median needs at least one value");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::optional<double> gamma_outlier_ratio(std::span<const double> gamma, int num_target_classes) {
    const int n = static_cast<int>(gamma.size());
    if (num_target_classes < 1 || num_target_classes > n)
        throw ConfigError("target class count outside [1, num_classes]");
    if (num_target_classes == n)
        return std::nullopt; // no outlier classes
    double shared = 0.0, outlier = 0.0;
    for (int c = 0; c < n; ++c)
        (c < num_target_classes ? shared : outlier) += gamma[c];
    shared /= num_target_classes;
    outlier /= n - num_target_classes;
    if (shared <= 0.0)
        return std::nullopt;
    return outlier / shared;
}

namespace {

void dump_rec(std::ostream& os, const ordered_json& j, int indent, int depth) {
    const std::string pad(static_cast<std::size_t>(indent) * (depth + 1), ' ');
    const std::string close_pad(static_cast<std::size_t>(indent) * depth, ' ');
    if (j.is_object()) {
        if (j.empty()) {
            os << "{}";
            return;
        }
        os << "{\n";
        bool first = true;
        for (const auto& [key, value] : j.items()) {
            if (!first)
                os << ",\n";
            first = false;
            os << pad << ordered_json(key).dump() << ": ";
            dump_rec(os, value, indent, depth + 1);
        }
        os << '\n' << close_pad << '}';
    } else if (j.is_array()) {
        if (j.empty()) {
            os << "[]";
            return;
        }
        os << "[\n";
        bool first = true;
        for (const auto& value : j) {
            if (!first)
                os << ",\n";
            first = false;
            os << pad;
            dump_rec(os, value, indent, depth + 1);
        }
        os << '\n' << close_pad << ']';
    } else if (j.is_number_float()) {
        os << g17(j.get<double>());
    } else {
        os << j.dump();
    }
}

} // namespace

void write_json_g17(std::ostream& os, const ordered_json& j, int indent) {
    dump_rec(os, j, indent, 0);
}

void write_json_file(const ordered_json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out)
        throw InputError("cannot open " + path.string() + " for writing");
    write_json_g17(out, j);
    out << '\n';
    if (!out)
        throw InputError("failed writing " + path.string());
}

void export_gamma_histogram(const ClassWeights& gamma, std::span<const std::string> class_names,
                            int num_target_classes, const std::filesystem::path& path) {
    write_gamma_csv(gamma, class_names, num_target_classes, path, /*summary_row=*/true);
}

void export_features(const PatanModel& model, std::span<const VideoSample> samples,
                     const std::filesystem::path& path, bool force_unit_attention) {
    std::ofstream out(path);
    if (!out)
        throw InputError("cannot open " + path.string() + " for writing");
    out << "id,domain,label";
    for (int i = 0; i < model.config().d_t; ++i)
        out << ",t" << i;
    out << '\n';
    for (const auto& s : samples) {
        ad::Graph g;
        const ForwardOutput fwd = forward(g, model, s.frames(), {0.0, force_unit_attention});
        out << s.id() << ',' << (s.domain() == Domain::source ? "source" : "target") << ','
            << sample_eval_label(s);
        for (double v : fwd.temporal_feature->values.values())
            out << ',' << g17(v);
        out << '\n';
    }
    if (!out)
        throw InputError("failed writing " + path.string());
}

namespace {

std::vector<SplitDataset> prepare_datasets(const ExperimentConfig& cfg) {
    if (cfg.runs < 1)
        throw ConfigError("experiment needs at least one run");
    std::vector<SplitDataset> out;
    out.reserve(cfg.runs);
    if (const auto* spec = std::get_if<GeneratorSpec>(&cfg.data)) {
        for (int i = 0; i < cfg.runs; ++i) {
            GeneratorSpec run_spec = *spec;
            run_spec.seed = spec->seed + static_cast<std::uint64_t>(i);
            out.push_back(generate(run_spec));
        }
    } else {
        const SplitDataset loaded = load_features(std::get<std::filesystem::path>(cfg.data));
        for (int i = 0; i < cfg.runs; ++i)
            out.push_back(loaded);
    }
    return out;
}

RunResult run_one(const ExperimentConfig& cfg, const MethodSpec& spec, const SplitDataset& data,
                  int run, const std::optional<std::filesystem::path>& run_dir) {
    TrainConfig tc = cfg.train;
    tc.method = spec.method;
    tc.ablation = spec.ablation;
    tc.seed = cfg.train.seed + static_cast<std::uint64_t>(run);

    ModelConfig mc = cfg.model;
    mc.d_in = data.feature_dim();
    mc.k = data.frame_count();
    mc.num_classes = data.num_classes();
    mc.seed = tc.seed;
    PatanModel model(mc);

    std::optional<std::filesystem::path> metrics_path;
    if (run_dir) {
        std::filesystem::create_directories(*run_dir);
        metrics_path = *run_dir / "metrics.jsonl";
    }

    RunResult rr;
    rr.run = run;
    rr.seed = tc.seed;
    rr.data_fingerprint = data.spec_fingerprint;
    rr.epochs = train(tc, data, model, metrics_path);

    const bool force = spec.method == Method::patan && spec.ablation == Ablation::no_attentive;
    rr.final_target_accuracy = top1_accuracy(model, data.target, force);
    rr.final_source_accuracy = top1_accuracy(model, data.source, force);
    const ClassWeights gamma = compute_class_weights(tc, model, data, tc.epochs);
    rr.final_gamma = gamma.gamma;
    rr.gamma_ratio = gamma_outlier_ratio(rr.final_gamma, data.num_target_classes);
    if (run_dir)
        export_gamma_histogram(gamma, data.class_names, data.num_target_classes,
                               *run_dir / "gamma.csv");
    return rr;
}

ExperimentResult aggregate_runs(const MethodSpec& spec, std::vector<RunResult> runs) {
    ExperimentResult res;
    res.spec = spec;
    res.display_name = method_spec_display(spec);
    std::vector<double> accs, ratios;
    for (const auto& rr : runs) {
        accs.push_back(rr.final_target_accuracy);
        if (rr.gamma_ratio)
            ratios.push_back(*rr.gamma_ratio);
    }
    res.median_accuracy = median(accs);
    res.min_accuracy = *std::min_element(accs.begin(), accs.end());
    res.max_accuracy = *std::max_element(accs.begin(), accs.end());
    if (!ratios.empty())
        res.median_gamma_ratio = median(std::move(ratios));
    res.runs = std::move(runs);
    return res;
}

ordered_json optional_number(const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json method_json(const ExperimentResult& r) {
    ordered_json j;
    j["token"] = method_spec_token(r.spec);
    j["display_name"] = r.display_name;
    j["median_accuracy"] = r.median_accuracy;
    j["min_accuracy"] = r.min_accuracy;
    j["max_accuracy"] = r.max_accuracy;
    j["median_gamma_ratio"] = optional_number(r.median_gamma_ratio);
    ordered_json accs = ordered_json::array();
    ordered_json ratios = ordered_json::array();
    for (const auto& rr : r.runs) {
        accs.push_back(rr.final_target_accuracy);
        ratios.push_back(optional_number(rr.gamma_ratio));
    }
    j["accuracies"] = std::move(accs);
    j["gamma_ratios"] = std::move(ratios);
    return j;
}

ordered_json result_json(const ExperimentConfig& cfg, const ExperimentResult& res) {
    ordered_json j = method_json(res);
    j["runs"] = cfg.runs;
    j["epochs"] = cfg.train.epochs;
    ordered_json detail = ordered_json::array();
    for (const auto& rr : res.runs) {
        ordered_json d;
        d["run"] = rr.run;
        d["seed"] = rr.seed;
        d["data_fingerprint"] = std::to_string(rr.data_fingerprint);
        d["final_target_accuracy"] = rr.final_target_accuracy;
        d["final_source_accuracy"] = rr.final_source_accuracy;
        d["gamma_ratio"] = optional_number(rr.gamma_ratio);
        d["gamma"] = rr.final_gamma;
        detail.push_back(std::move(d));
    }
    j["runs_detail"] = std::move(detail);
    return j;
}

ExperimentResult run_single_on(const ExperimentConfig& cfg, const MethodSpec& spec,
                               const std::vector<SplitDataset>& datasets) {
    std::optional<std::filesystem::path> base;
    if (!cfg.output_dir.empty()) {
        base = cfg.output_dir / method_spec_token(spec);
        std::filesystem::create_directories(*base);
    }
    std::vector<RunResult> runs;
    for (int i = 0; i < cfg.runs; ++i) {
        const std::optional<std::filesystem::path> run_dir =
            base ? std::optional(*base / ("run" + std::to_string(i))) : std::nullopt;
        runs.push_back(run_one(cfg, spec, datasets[i], i, run_dir));
    }
    ExperimentResult res = aggregate_runs(spec, std::move(runs));
    if (base)
        write_json_file(result_json(cfg, res), *base / "result.json");
    return res;
}

} // namespace

ExperimentResult run_single(const ExperimentConfig& config, const MethodSpec& spec) {
    return run_single_on(config, spec, prepare_datasets(config));
}

std::vector<ExperimentResult> run_comparison(const ExperimentConfig& config,
                                             const std::vector<MethodSpec>& methods) {
    if (methods.empty())
        throw UsageError("comparison needs at least one method");
    const std::vector<SplitDataset> datasets = prepare_datasets(config);
    std::vector<std::uint64_t> fingerprints;
    for (const auto& d : datasets)
        fingerprints.push_back(d.spec_fingerprint);

    std::vector<ExperimentResult> results;
    for (const auto& spec : methods) {
        ExperimentResult res = run_single_on(config, spec, datasets);
        for (const auto& rr : res.runs)
            if (rr.data_fingerprint != fingerprints[rr.run])
                throw ConfigError("internal: comparison methods saw diverging datasets");
        results.push_back(std::move(res));
    }

    if (!config.output_dir.empty()) {
        ordered_json j;
        j["runs"] = config.runs;
        j["epochs"] = config.train.epochs;
        ordered_json fps = ordered_json::array();
        for (std::uint64_t f : fingerprints)
            fps.push_back(std::to_string(f));
        j["data_fingerprints"] = std::move(fps);
        ordered_json ms = ordered_json::array();
        for (const auto& r : results)
            ms.push_back(method_json(r));
        j["methods"] = std::move(ms);
        write_json_file(j, config.output_dir / "comparison.json");
    }
    return results;
}

std::vector<SweepEntry> run_target_count_sweep(const ExperimentConfig& config,
                                               const std::vector<int>& counts) {
    const auto* base_spec = std::get_if<GeneratorSpec>(&config.data);
    if (base_spec == nullptr)
        throw ConfigError("target-count sweep needs a generator spec, not a feature file");
    if (counts.empty())
        throw UsageError("target-count sweep needs at least one count");
    for (int c : counts)
        if (c < 1 || c > base_spec->num_source_classes)
            throw ConfigError("target class count " + std::to_string(c) +
                              " outside [1, num_source_classes]");

    const std::vector<MethodSpec> methods = {{Method::patan, Ablation::none},
                                             {Method::dann, Ablation::none}};
    std::vector<SweepEntry> entries;
    for (int count : counts) {
        GeneratorSpec spec = *base_spec;
        spec.num_target_classes = count;
        std::erase_if(spec.temporal_confusion_pairs, [count](const std::pair<int, int>& p) {
            return p.first < count || p.second >= count;
        });
        ExperimentConfig sub = config;
        sub.data = spec;
        if (!config.output_dir.empty())
            sub.output_dir = config.output_dir / ("ct" + std::to_string(count));
        SweepEntry e;
        e.num_target_classes = count;
        e.methods = run_comparison(sub, methods);
        entries.push_back(std::move(e));
    }

    if (!config.output_dir.empty()) {
        ordered_json j;
        j["counts"] = counts;
        j["runs"] = config.runs;
        ordered_json list = ordered_json::array();
        for (const auto& e : entries) {
            ordered_json ej;
            ej["num_target_classes"] = e.num_target_classes;
            ordered_json ms = ordered_json::array();
            for (const auto& r : e.methods)
                ms.push_back(method_json(r));
            ej["methods"] = std::move(ms);
            list.push_back(std::move(ej));
        }
        j["entries"] = std::move(list);
        write_json_file(j, config.output_dir / "sweep.json");
    }
    return entries;
}

namespace {

/// Strict object reader: every field must be consumed, unknown keys fail.
class FieldReader {
public:
    FieldReader(const ordered_json& j, std::string what) : j_(j), what_(std::move(what)) {
        if (!j_.is_object())
            throw ConfigError(what_ + " must be a JSON object");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T>
    T get(const std::string& key, T fallback) {
        seen_.insert(key);
        if (!j_.contains(key))
            return fallback;
        return convert<T>(key);
    }

    template <typename T>
    T require(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key))
            throw ConfigError(what_ + ": missing required field '" + key + "'");
        return convert<T>(key);
    }

    const ordered_json& raw(const std::string& key) {
        seen_.insert(key);
        if (!j_.contains(key))
            throw ConfigError(what_ + ": missing required field '" + key + "'");
        return j_.at(key);
    }

    void finish() const {
        for (const auto& [key, value] : j_.items())
            if (!seen_.contains(key))
                throw ConfigError(what_ + ": unknown field '" + key + "'");
    }

private:
    template <typename T>
    T convert(const std::string& key) {
        try {
            return j_.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw ConfigError(what_ + ": field '" + key + "' has the wrong type");
        }
    }

    const ordered_json& j_;
    std::string what_;
    std::set<std::string> seen_;
};

} // namespace

GeneratorSpec parse_generator_spec(const ordered_json& j) {
    FieldReader r(j, "data spec");
    GeneratorSpec spec;
    if (r.has("benchmark"))
        spec = default_benchmark(r.require<std::string>("benchmark"));
    spec.num_source_classes = r.get("num_source_classes", spec.num_source_classes);
    spec.num_target_classes = r.get("num_target_classes", spec.num_target_classes);
    spec.d_in = r.get("d_in", spec.d_in);
    spec.k = r.get("k", spec.k);
    spec.samples_per_class_source =
        r.get("samples_per_class_source", spec.samples_per_class_source);
    spec.samples_per_class_target =
        r.get("samples_per_class_target", spec.samples_per_class_target);
    spec.noise_std = r.get("noise_std", spec.noise_std);
    spec.target_shift.rotation_angle = r.get("rotation_angle", spec.target_shift.rotation_angle);
    spec.target_shift.offset_scale = r.get("offset_scale", spec.target_shift.offset_scale);
    spec.target_shift.noise_multiplier =
        r.get("noise_multiplier", spec.target_shift.noise_multiplier);
    if (r.has("temporal_confusion_pairs")) {
        spec.temporal_confusion_pairs.clear();
        const auto& pairs = r.raw("temporal_confusion_pairs");
        if (!pairs.is_array())
            throw ConfigError("temporal_confusion_pairs must be an array of [outlier, shared]");
        for (const auto& p : pairs) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() ||
                !p[1].is_number_integer())
                throw ConfigError("temporal_confusion_pairs must be an array of [outlier, shared]");
            spec.temporal_confusion_pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
        }
    }
    spec.seed = r.get("seed", spec.seed);
    r.finish();
    return spec;
}

TrainConfig parse_train_config(const ordered_json& j) {
    FieldReader r(j, "train config");
    TrainConfig cfg;
    cfg.method = parse_method(r.get<std::string>("method", method_token(cfg.method)));
    cfg.ablation = parse_ablation(r.get<std::string>("ablation", ablation_token(cfg.ablation)));
    cfg.lr = r.get("lr", cfg.lr);
    cfg.momentum = r.get("momentum", cfg.momentum);
    cfg.weight_decay = r.get("weight_decay", cfg.weight_decay);
    cfg.batch_size = r.get("batch_size", cfg.batch_size);
    cfg.epochs = r.require<int>("epochs");
    cfg.lambda_sp = r.get("lambda_sp", cfg.lambda_sp);
    cfg.lambda_t = r.get("lambda_t", cfg.lambda_t);
    cfg.lambda_aux = r.get("lambda_aux", cfg.lambda_aux);
    if (r.has("lr_drop_epochs")) {
        const auto& drops = r.raw("lr_drop_epochs");
        if (!drops.is_array() || drops.size() != 2 || !drops[0].is_number_integer() ||
            !drops[1].is_number_integer())
            throw ConfigError("lr_drop_epochs must be an array of two integers");
        cfg.lr_drop_epochs = {drops[0].get<int>(), drops[1].get<int>()};
    }
    cfg.seed = r.get("seed", cfg.seed);
    r.finish();
    return cfg;
}

ExperimentConfig parse_experiment_config(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in)
        throw InputError("cannot open " + json_path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError("cannot parse " + json_path.string() + ": " + e.what());
    }

    FieldReader r(j, "experiment config");
    ExperimentConfig cfg;
    cfg.train = parse_train_config(r.raw("train"));
    const ordered_json& dj = r.raw("data");
    if (dj.is_object() && dj.contains("features")) {
        FieldReader dr(dj, "data");
        cfg.data = std::filesystem::path(dr.require<std::string>("features"));
        dr.finish();
    } else {
        cfg.data = parse_generator_spec(dj);
    }
    if (r.has("model")) {
        FieldReader mr(r.raw("model"), "model config");
        cfg.model.d_sp = mr.get("d_sp", cfg.model.d_sp);
        cfg.model.d_t = mr.get("d_t", cfg.model.d_t);
        cfg.model.h_rel = mr.get("h_rel", cfg.model.h_rel);
        cfg.model.max_subsets_per_scale =
            mr.get("max_subsets_per_scale", cfg.model.max_subsets_per_scale);
        cfg.model.stop_grad_attention = mr.get("stop_grad_attention", cfg.model.stop_grad_attention);
        mr.finish();
    }
    cfg.runs = r.get("runs", cfg.runs);
    if (cfg.runs < 1)
        throw ConfigError("experiment config: runs must be at least 1");
    cfg.output_dir = std::filesystem::path(r.get<std::string>("output_dir", ""));
    r.finish();
    return cfg;
}

} // namespace patan
