#include "patan/filtration.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "patan/errors.hpp"
#include "patan/format.hpp"

namespace patan {

ClassWeights ClassWeights::ones(int num_classes) {
    if (num_classes < 1)
        throw ConfigError("class weights need at least one class");
    ClassWeights w;
    w.gamma.assign(num_classes, 1.0);
    return w;
}

bool ClassWeights::all_ones() const {
    return std::all_of(gamma.begin(), gamma.end(), [](double g) { return g == 1.0; });
}

void max_normalize(std::vector<double>& v) {
    double m = 0.0;
    for (double x : v)
        m = std::max(m, x);
    if (m <= 0.0)
        return;
    for (double& x : v)
        x /= m;
}

ClassWeights gamma_pada(std::span<const std::vector<double>> target_predictions) {
    if (target_predictions.empty())
        throw UsageError("class weights need at least one target prediction");
    const std::size_t c = target_predictions[0].size();
    ClassWeights w;
    w.gamma.assign(c, 0.0);
    for (const auto& p : target_predictions) {
        if (p.size() != c)
            throw ConfigError("target predictions disagree on class count");
        for (std::size_t i = 0; i < c; ++i)
            w.gamma[i] += p[i];
    }
    for (double& g : w.gamma)
        g /= static_cast<double>(target_predictions.size());
    max_normalize(w.gamma);
    return w;
}

ClassWeights gamma_patan(std::span<const ForwardOutput> target_outputs,
                         bool include_local_weights, bool normalize) {
    if (target_outputs.empty())
        throw UsageError("class weights need at least one target output");
    const std::size_t c = target_outputs[0].spatial_probs.size();
    const std::size_t scales = target_outputs[0].scales.size();
    ClassWeights w;
    w.gamma.assign(c, 0.0);
    for (const auto& out : target_outputs) {
        if (out.spatial_probs.size() != c || out.temporal_probs.size() != c ||
            out.scales.size() != scales)
            throw ConfigError("target outputs disagree on class count or frame count");
        for (std::size_t i = 0; i < c; ++i)
            w.gamma[i] += out.temporal_probs[i] + out.spatial_probs[i];
        if (include_local_weights) {
            for (const auto& sc : out.scales)
                for (std::size_t i = 0; i < c; ++i)
                    w.gamma[i] += sc.weight * sc.probs[i];
        }
    }
    // Heads averaged per sample: the two main classifiers plus, unless
    // dropped, one weighted auxiliary prediction per scale (k-1 of them).
    const double heads = include_local_weights ? static_cast<double>(scales + 2) : 2.0;
    const double denom = heads * static_cast<double>(target_outputs.size());
    for (double& g : w.gamma)
        g /= denom;
    if (normalize)
        max_normalize(w.gamma);
    return w;
}

ClassWeights update_schedule(int epoch, std::optional<ClassWeights> fresh, int num_classes) {
    if (epoch < 0)
        throw UsageError("epoch must be non-negative");
    ClassWeights w =
        (epoch == 0 || !fresh.has_value()) ? ClassWeights::ones(num_classes) : std::move(*fresh);
    if (w.size() != num_classes)
        throw ConfigError("class weight vector length does not match the class count");
    w.epoch_computed = epoch;
    return w;
}

void write_gamma_csv(const ClassWeights& weights, std::span<const std::string> class_names,
                     int num_target_classes, const std::filesystem::path& path,
                     bool summary_row) {
    if (static_cast<std::size_t>(weights.size()) != class_names.size())
        throw ConfigError("one class name per weight required");
    if (num_target_classes < 1 || num_target_classes > weights.size())
        throw ConfigError("target class count outside [1, num_classes]");

    std::ofstream out(path);
    if (!out)
        throw InputError("cannot open " + path.string() + " for writing");
    out << "class_index,class_name,weight,is_target_class\n";
    for (int c = 0; c < weights.size(); ++c) {
        out << c << ',' << class_names[c] << ',' << g17(weights[c]) << ','
            << (c < num_target_classes ? 1 : 0) << '\n';
    }
    if (summary_row) {
        double shared = 0.0, outlier = 0.0;
        for (int c = 0; c < weights.size(); ++c)
            (c < num_target_classes ? shared : outlier) += weights[c];
        shared /= num_target_classes;
        const int num_outlier = weights.size() - num_target_classes;
        out << "summary," << g17(shared) << ',';
        if (num_outlier > 0) {
            outlier /= num_outlier;
            out << g17(outlier) << ',';
            if (shared > 0.0)
                out << g17(outlier / shared);
        } else {
            out << ',';
        }
        out << '\n';
    }
    if (!out)
        throw InputError("failed writing " + path.string());
}

} // namespace patan
