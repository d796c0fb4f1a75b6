#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "patan/matrix.hpp"

namespace patan {

enum class Domain { source, target };

/// Label-access audit. Training code runs inside a TrainingSection; any read
/// of a target label while one is open counts as a quarantine violation. The
/// counter is process-global so a test can assert it stayed at zero across a
/// whole training run.
namespace audit {

class TrainingSection {
public:
    TrainingSection();
    ~TrainingSection();
    TrainingSection(const TrainingSection&) = delete;
    TrainingSection& operator=(const TrainingSection&) = delete;
};

bool in_training_section();
std::uint64_t quarantine_violations();
void reset_quarantine_violations();

} // namespace audit

/// One video as a k x d_in matrix of frame-level features. The label is held
/// privately: source_label() serves training (and rejects target samples);
/// eval_label() serves evaluation and flags the audit counter when called on
/// a target sample inside a training section.
class VideoSample {
public:
    VideoSample(Matrix frames, Domain domain, int label, std::string id);

    const Matrix& frames() const { return frames_; }
    Domain domain() const { return domain_; }
    const std::string& id() const { return id_; }
    int frame_count() const { return frames_.rows(); }
    int feature_dim() const { return frames_.cols(); }

    int source_label() const;
    int eval_label() const;

private:
    Matrix frames_;
    Domain domain_;
    int label_;
    std::string id_;
};

struct TargetShift {
    double rotation_angle = 0.0;   // radians, applied in a seeded random 2-plane
    double offset_scale = 0.0;     // norm of a constant seeded offset
    double noise_multiplier = 1.0; // scales noise_std on the target side
};

struct GeneratorSpec {
    int num_source_classes = 0;
    int num_target_classes = 0; // target classes are the first indices
    int d_in = 0;
    int k = 0;
    int samples_per_class_source = 0;
    int samples_per_class_target = 0;
    double noise_std = 0.0;
    TargetShift target_shift;
    /// (outlier_class, shared_class) pairs that share a motion vector, so
    /// only temporal order separates them spatially-overlapping classes.
    std::vector<std::pair<int, int>> temporal_confusion_pairs;
    std::uint64_t seed = 0;
};

struct SplitDataset {
    std::vector<VideoSample> source;
    std::vector<VideoSample> target;
    std::vector<std::string> class_names;
    int num_target_classes = 0;
    std::uint64_t spec_fingerprint = 0;

    int num_classes() const { return static_cast<int>(class_names.size()); }
    int frame_count() const;
    int feature_dim() const;
};

std::uint64_t fingerprint(const GeneratorSpec& spec);

/// Deterministic synthetic PVDA data: class c draws a unit-norm spatial
/// prototype and a norm-0.5 motion vector; frame j = prototype + (j-1)/(k-1)
/// motion + noise. Confusion-pair classes copy the shared class's motion
/// vector exactly. Target samples pass through a fixed rotation in a random
/// 2-plane plus a constant offset, with noise_std * noise_multiplier.
SplitDataset generate(const GeneratorSpec& spec);

/// Named presets: easy-7of14, hard-5of10-confused (three confusion pairs,
/// strong shift), equal-14of14.
GeneratorSpec default_benchmark(const std::string& name);

void write_features(const SplitDataset& data, const std::filesystem::path& path);
SplitDataset load_features(const std::filesystem::path& path);

} // namespace patan
