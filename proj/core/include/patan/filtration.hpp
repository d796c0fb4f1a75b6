#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patan/model.hpp"

namespace patan {

/// Per-source-class filtration weights in [0,1], max entry 1 after
/// normalization. Immutable once computed.
struct ClassWeights {
    std::vector<double> gamma;
    int epoch_computed = 0;

    static ClassWeights ones(int num_classes);
    int size() const { return static_cast<int>(gamma.size()); }
    double operator[](int c) const { return gamma[c]; }
    bool all_ones() const;
};

/// In-place division by the max entry. No-op on empty or all-zero input.
void max_normalize(std::vector<double>& v);

/// Class weights from fused target label predictions: their mean, normalized
/// by its max.
ClassWeights gamma_pada(std::span<const std::vector<double>> target_predictions);

/// Temporal-attentive class weights: per target sample, sum of the temporal
/// and spatial predictions plus the attention-weighted per-scale auxiliary
/// predictions, averaged over samples and heads, then max-normalized.
/// `include_local_weights = false` drops the per-scale sum (averaging the two
/// main heads only). `normalize = false` returns the raw average.
ClassWeights gamma_patan(std::span<const ForwardOutput> target_outputs,
                         bool include_local_weights = true, bool normalize = true);

/// Epoch cadence for γ: epoch 0 (and any epoch without freshly computed
/// weights) trains unfiltered with all-ones; otherwise the supplied weights
/// are used unchanged, stamped with the epoch. Weights hold for the whole
/// epoch.
ClassWeights update_schedule(int epoch, std::optional<ClassWeights> fresh, int num_classes);

/// CSV rows: class_index,class_name,weight,is_target_class. With
/// `summary_row` set, appends mean weight over target (shared) classes, mean
/// over the rest (outlier classes), and their outlier/shared ratio — empty
/// when there are no outlier classes.
void write_gamma_csv(const ClassWeights& weights, std::span<const std::string> class_names,
                     int num_target_classes, const std::filesystem::path& path,
                     bool summary_row = false);

} // namespace patan
