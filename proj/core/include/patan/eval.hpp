#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"

#include "patan/data.hpp"
#include "patan/filtration.hpp"
#include "patan/model.hpp"
#include "patan/training.hpp"

namespace patan {

double top1_accuracy(const PatanModel& model, std::span<const VideoSample> samples,
                     bool force_unit_attention = false);
/// Per-class accuracy over `num_classes` entries; classes absent from
/// `samples` report 0.
std::vector<double> per_class_accuracy(const PatanModel& model,
                                       std::span<const VideoSample> samples, int num_classes,
                                       bool force_unit_attention = false);

struct ExperimentConfig {
    TrainConfig train;
    /// Either a generator spec or a path to a feature CSV.
    std::variant<GeneratorSpec, std::filesystem::path> data;
    /// Network dimensions; d_in/k/num_classes/seed are filled per run from
    /// the data and the seed family.
    ModelConfig model;
    std::filesystem::path output_dir; // empty: compute only, write nothing
    int runs = 1;
};

struct RunResult {
    int run = 0;
    std::uint64_t seed = 0;
    std::uint64_t data_fingerprint = 0;
    std::vector<EpochMetrics> epochs;
    double final_target_accuracy = 0.0;
    double final_source_accuracy = 0.0;
    std::vector<double> final_gamma;
    /// Mean final γ over outlier classes / mean over shared classes.
    /// Unset when the task has no outlier classes.
    std::optional<double> gamma_ratio;
};

struct ExperimentResult {
    MethodSpec spec;
    std::string display_name;
    std::vector<RunResult> runs;
    double median_accuracy = 0.0;
    double min_accuracy = 0.0;
    double max_accuracy = 0.0;
    std::optional<double> median_gamma_ratio;
};

struct SweepEntry {
    int num_target_classes = 0;
    std::vector<ExperimentResult> methods;
};

std::optional<double> gamma_outlier_ratio(std::span<const double> gamma, int num_target_classes);
double median(std::vector<double> values);

/// Trains `spec` for config.runs seeds (run i uses data seed spec.seed+i and
/// train/model seed train.seed+i; a feature file is shared across runs).
/// Writes per-run metrics.jsonl and gamma.csv plus result.json under
/// output_dir/<method-token>/ unless output_dir is empty.
ExperimentResult run_single(const ExperimentConfig& config, const MethodSpec& spec);

/// Trains every method on byte-identical per-run datasets (fingerprints
/// asserted equal) and writes comparison.json plus per-method artifacts.
std::vector<ExperimentResult> run_comparison(const ExperimentConfig& config,
                                             const std::vector<MethodSpec>& methods);

/// Regenerates the data per target-class count (same seed family), trains
/// patan and dann, and writes sweep.json. Confusion pairs that stop being
/// valid under a count (outlier class no longer source-only) are dropped.
std::vector<SweepEntry> run_target_count_sweep(const ExperimentConfig& config,
                                               const std::vector<int>& counts);

void export_gamma_histogram(const ClassWeights& gamma, std::span<const std::string> class_names,
                            int num_target_classes, const std::filesystem::path& path);

/// One row per sample: id, domain, label, then the d_t overall temporal
/// feature values (columns t0..t{d_t-1}).
void export_features(const PatanModel& model, std::span<const VideoSample> samples,
                     const std::filesystem::path& path, bool force_unit_attention = false);

/// JSON serialization with stable key order and floats at 17 significant
/// digits, so repeated runs produce byte-identical files.
void write_json_g17(std::ostream& os, const nlohmann::ordered_json& j, int indent = 2);
void write_json_file(const nlohmann::ordered_json& j, const std::filesystem::path& path);

GeneratorSpec parse_generator_spec(const nlohmann::ordered_json& j);
TrainConfig parse_train_config(const nlohmann::ordered_json& j);
ExperimentConfig parse_experiment_config(const std::filesystem::path& json_path);

} // namespace patan
