// Command-line front end: data generation, training, method comparisons,
// target-class sweeps, gradient checking, and feature/class-weight exports.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "patan/data.hpp"
#include "patan/errors.hpp"
#include "patan/eval.hpp"
#include "patan/format.hpp"
#include "patan/training.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

ordered_json load_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in)
        throw patan::InputError("cannot open " + path.string());
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw patan::InputError("cannot parse " + path.string() + ": " + e.what());
    }
    return j;
}

patan::ExperimentConfig load_config(const std::string& path, const std::string& out_dir) {
    patan::ExperimentConfig cfg = patan::parse_experiment_config(path);
    if (!out_dir.empty())
        cfg.output_dir = out_dir;
    return cfg;
}

patan::SplitDataset dataset_for_run0(const patan::ExperimentConfig& cfg) {
    if (const auto* spec = std::get_if<patan::GeneratorSpec>(&cfg.data))
        return patan::generate(*spec);
    return patan::load_features(std::get<fs::path>(cfg.data));
}

void print_method_line(const patan::ExperimentResult& r) {
    std::cout << "  " << std::left << std::setw(26) << r.display_name << " median top-1 "
              << patan::g17(r.median_accuracy) << "  (min " << patan::g17(r.min_accuracy)
              << ", max " << patan::g17(r.max_accuracy) << ")";
    if (r.median_gamma_ratio)
        std::cout << "  outlier/shared weight ratio " << patan::g17(*r.median_gamma_ratio);
    std::cout << '\n';
}

struct TrainOverrides {
    std::string method;
    std::string ablation;
    std::optional<std::int64_t> seed;
};

void apply_overrides(patan::ExperimentConfig& cfg, const TrainOverrides& ov) {
    if (!ov.method.empty()) {
        const patan::MethodSpec ms = patan::parse_method_spec(ov.method);
        cfg.train.method = ms.method;
        cfg.train.ablation = ms.ablation;
    }
    if (!ov.ablation.empty())
        cfg.train.ablation = patan::parse_ablation(ov.ablation);
    if (ov.seed)
        cfg.train.seed = static_cast<std::uint64_t>(*ov.seed);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Partial video domain adaptation: synthetic benchmarks, four trainable "
                 "methods, and a reproducible experiment harness"};
    app.require_subcommand(1);

    // gen-data
    std::string gen_spec_path, gen_out;
    std::optional<std::int64_t> gen_seed;
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset as a feature CSV");
    gen->add_option("--spec", gen_spec_path,
                    "JSON generator spec ({\"benchmark\": name} or explicit fields)")
        ->required();
    gen->add_option("--out", gen_out, "Output CSV path")->required();
    gen->add_option("--seed", gen_seed, "Override the spec's seed");
    gen->callback([&] {
        patan::GeneratorSpec spec = patan::parse_generator_spec(load_json(gen_spec_path));
        if (gen_seed)
            spec.seed = static_cast<std::uint64_t>(*gen_seed);
        const patan::SplitDataset data = patan::generate(spec);
        patan::write_features(data, gen_out);
        std::cout << "wrote " << data.source.size() << " source and " << data.target.size()
                  << " target videos (" << data.num_classes() << " classes, k="
                  << data.frame_count() << ", d=" << data.feature_dim() << ") to " << gen_out
                  << '\n';
    });

    // train
    std::string train_config, train_out;
    TrainOverrides train_ov;
    auto* tr = app.add_subcommand("train", "Train one method for the configured number of seeds");
    tr->add_option("--config", train_config, "Experiment config JSON")->required();
    tr->add_option("--method", train_ov.method,
                   "Override method (source_only|dann|pada|patan|patan_wo_*)");
    tr->add_option("--ablation", train_ov.ablation, "Override ablation flag");
    tr->add_option("--seed", train_ov.seed, "Override the training seed");
    tr->add_option("--out", train_out, "Output directory")->required();
    tr->callback([&] {
        patan::ExperimentConfig cfg = load_config(train_config, train_out);
        apply_overrides(cfg, train_ov);
        const patan::MethodSpec spec{cfg.train.method, cfg.train.ablation};
        const patan::ExperimentResult res = patan::run_single(cfg, spec);
        print_method_line(res);
        std::cout << "results under " << (cfg.output_dir / patan::method_spec_token(spec)).string()
                  << '\n';
    });

    // compare
    std::string cmp_config, cmp_out;
    std::vector<std::string> cmp_methods;
    auto* cmp = app.add_subcommand("compare", "Train several methods on identical data/seeds");
    cmp->add_option("--config", cmp_config, "Experiment config JSON")->required();
    cmp->add_option("--methods", cmp_methods, "Comma-separated method tokens")
        ->required()
        ->delimiter(',');
    cmp->add_option("--out", cmp_out, "Output directory")->required();
    cmp->callback([&] {
        const patan::ExperimentConfig cfg = load_config(cmp_config, cmp_out);
        std::vector<patan::MethodSpec> specs;
        for (const auto& token : cmp_methods)
            specs.push_back(patan::parse_method_spec(token));
        const auto results = patan::run_comparison(cfg, specs);
        std::cout << "comparison over " << cfg.runs << " seeds:\n";
        for (const auto& r : results)
            print_method_line(r);
        std::cout << "table written to " << (cfg.output_dir / "comparison.json").string() << '\n';
    });

    // sweep-targets
    std::string swp_config, swp_out;
    std::vector<int> swp_counts;
    auto* swp = app.add_subcommand("sweep-targets",
                                   "Accuracy of patan vs dann across target-class counts");
    swp->add_option("--config", swp_config, "Experiment config JSON")->required();
    swp->add_option("--counts", swp_counts, "Comma-separated target class counts")
        ->required()
        ->delimiter(',');
    swp->add_option("--out", swp_out, "Output directory")->required();
    swp->callback([&] {
        const patan::ExperimentConfig cfg = load_config(swp_config, swp_out);
        const auto entries = patan::run_target_count_sweep(cfg, swp_counts);
        for (const auto& e : entries) {
            std::cout << "target classes = " << e.num_target_classes << ":\n";
            for (const auto& r : e.methods)
                print_method_line(r);
        }
        std::cout << "table written to " << (cfg.output_dir / "sweep.json").string() << '\n';
    });

    // grad-check
    int gc_trials = 20;
    std::optional<std::int64_t> gc_seed;
    auto* gc = app.add_subcommand("grad-check",
                                  "Check loss gradients of all methods against central differences");
    gc->add_option("--trials", gc_trials, "Randomized trials per method (default 20)");
    gc->add_option("--seed", gc_seed, "Trial seed (default 7)");
    gc->callback([&] {
        const std::uint64_t seed = gc_seed ? static_cast<std::uint64_t>(*gc_seed) : 7;
        bool ok = true;
        for (const patan::Method m : {patan::Method::source_only, patan::Method::dann,
                                      patan::Method::pada, patan::Method::patan}) {
            const double err = patan::max_loss_grad_error(m, gc_trials, seed);
            std::cout << std::left << std::setw(12) << patan::method_token(m)
                      << " max relative gradient error " << patan::g17(err) << '\n';
            ok = ok && err < 1e-4;
        }
        if (!ok)
            throw patan::NumericError("gradient check exceeded the 1e-4 tolerance");
        std::cout << "all gradients within 1e-4 of central differences\n";
    });

    // export-gamma
    std::string eg_config, eg_out;
    TrainOverrides eg_ov;
    auto* eg = app.add_subcommand("export-gamma",
                                  "Train once and export the class-weight histogram CSV");
    eg->add_option("--config", eg_config, "Experiment config JSON")->required();
    eg->add_option("--method", eg_ov.method, "Override method");
    eg->add_option("--seed", eg_ov.seed, "Override the training seed");
    eg->add_option("--out", eg_out, "Output CSV path")->required();
    eg->callback([&] {
        patan::ExperimentConfig cfg = load_config(eg_config, "");
        apply_overrides(cfg, eg_ov);
        cfg.runs = 1;
        cfg.output_dir.clear();
        const patan::MethodSpec spec{cfg.train.method, cfg.train.ablation};
        const patan::ExperimentResult res = patan::run_single(cfg, spec);
        const patan::SplitDataset data = dataset_for_run0(cfg);
        patan::ClassWeights w;
        w.gamma = res.runs.at(0).final_gamma;
        w.epoch_computed = cfg.train.epochs;
        patan::export_gamma_histogram(w, data.class_names, data.num_target_classes, eg_out);
        std::cout << "wrote class weights for " << patan::method_spec_display(spec) << " to "
                  << eg_out << '\n';
    });

    // export-features
    std::string ef_config, ef_out, ef_split = "both";
    TrainOverrides ef_ov;
    auto* ef = app.add_subcommand("export-features",
                                  "Train once and export overall temporal features as CSV");
    ef->add_option("--config", ef_config, "Experiment config JSON")->required();
    ef->add_option("--method", ef_ov.method, "Override method");
    ef->add_option("--seed", ef_ov.seed, "Override the training seed");
    ef->add_option("--split", ef_split, "source|target|both (default both)");
    ef->add_option("--out", ef_out, "Output CSV path")->required();
    ef->callback([&] {
        patan::ExperimentConfig cfg = load_config(ef_config, "");
        apply_overrides(cfg, ef_ov);
        const patan::SplitDataset data = dataset_for_run0(cfg);
        patan::ModelConfig mc = cfg.model;
        mc.d_in = data.feature_dim();
        mc.k = data.frame_count();
        mc.num_classes = data.num_classes();
        mc.seed = cfg.train.seed;
        patan::PatanModel model(mc);
        patan::train(cfg.train, data, model);
        std::vector<patan::VideoSample> samples;
        if (ef_split == "source" || ef_split == "both")
            samples.insert(samples.end(), data.source.begin(), data.source.end());
        if (ef_split == "target" || ef_split == "both")
            samples.insert(samples.end(), data.target.begin(), data.target.end());
        if (ef_split != "source" && ef_split != "target" && ef_split != "both")
            throw patan::UsageError("--split must be source, target, or both");
        const bool force = cfg.train.method == patan::Method::patan &&
                           cfg.train.ablation == patan::Ablation::no_attentive;
        patan::export_features(model, samples, ef_out, force);
        std::cout << "wrote " << samples.size() << " feature rows to " << ef_out << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const patan::UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const patan::ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const patan::InputError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
