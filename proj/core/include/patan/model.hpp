#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "patan/autodiff.hpp"
#include "patan/matrix.hpp"

namespace patan {

struct ModelConfig {
    int d_in = 0;        // frame-level feature dimension
    int k = 0;           // frames per video
    int num_classes = 0; // source label space size
    int d_sp = 32;       // spatial feature dimension
    int d_t = 32;        // shared temporal feature dimension across scales
    int h_rel = 32;      // relation module hidden width
    int max_subsets_per_scale = 32;
    bool stop_grad_attention = true;
    std::uint64_t seed = 0;
};

/// Frame-index tuples (1-based, strictly increasing) for the scale-r clips.
/// All C(k,r) combinations in lexicographic order when they fit under `cap`,
/// otherwise a seeded sample of `cap` distinct combinations, returned sorted.
std::vector<std::vector<int>> clip_subsets(int k, int r, int cap, std::uint64_t seed);

/// Negative entropy of a probability vector, in nats: sum_c p_c ln(max(p_c,
/// 1e-8)). Always <= 0, equal to 0 exactly at one-hot inputs.
double certainty(std::span<const double> probs);

/// Label-attention weight max(0, tanh(1 + certainty(probs))), in
/// [0, tanh(1)]. Predictions whose entropy exceeds 1 nat get weight 0.
double attention_weight(std::span<const double> probs);

std::vector<double> softmax_row(std::span<const double> logits);

struct LinearHead {
    ad::Node* weight = nullptr; // in x out
    ad::Node* bias = nullptr;   // 1 x out
};

struct MlpHead {
    ad::Node* w1 = nullptr;
    ad::Node* b1 = nullptr;
    ad::Node* w2 = nullptr;
    ad::Node* b2 = nullptr;
};

/// Relation module g^r over stacked clips. The hidden bias rides as the last
/// row of w1 against a ones column appended to the clip matrix, so a whole
/// scale runs as one matmul without row broadcasting.
struct RelationHead {
    ad::Node* w1 = nullptr; // (r*d_in + 1) x h_rel, last row = hidden bias
    ad::Node* w2 = nullptr; // h_rel x d_t
    ad::Node* b2 = nullptr; // 1 x d_t
};

/// The trainable network heads: spatial feature extractor / classifier /
/// discriminator, per-scale relation modules with auxiliary classifiers, the
/// temporal classifier and the temporal discriminator.
class PatanModel {
public:
    explicit PatanModel(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ad::ParamSet& params() { return params_; }
    const ad::ParamSet& params() const { return params_; }

    /// Cached clip index tuples for scale r (2 <= r <= k).
    const std::vector<std::vector<int>>& subsets(int r) const;
    int num_scales() const { return cfg_.k - 1; }

    MlpHead spatial_extractor;
    LinearHead spatial_classifier;
    MlpHead spatial_discriminator;
    std::vector<RelationHead> relation;      // index 0 <-> r = 2
    std::vector<LinearHead> aux_classifier;  // index 0 <-> r = 2
    LinearHead temporal_classifier;
    MlpHead temporal_discriminator;

private:
    ModelConfig cfg_;
    ad::ParamSet params_;
    std::vector<std::vector<std::vector<int>>> subsets_;
};

struct ScaleOutput {
    int r = 0;
    ad::Node* local_feature = nullptr; // f^r, 1 x d_t
    ad::Node* aux_logits = nullptr;    // 1 x num_classes
    std::vector<double> probs;
    double weight = 0.0; // attention weight in [0, 1]
};

/// All per-sample heads produced by one forward pass. Node handles stay valid
/// only as long as the graph they were built on.
struct ForwardOutput {
    ad::Node* spatial_feature = nullptr;
    ad::Node* spatial_logits = nullptr;
    std::vector<double> spatial_probs;
    std::vector<ScaleOutput> scales;
    ad::Node* temporal_feature = nullptr;
    ad::Node* temporal_logits = nullptr;
    std::vector<double> temporal_probs;
    ad::Node* spatial_domain_logits = nullptr;  // discriminator over GRL(x)
    ad::Node* temporal_domain_logits = nullptr; // discriminator over GRL(f)
};

/// Support for finite-difference checks of losses that contain gradient
/// reversal. The reversal layer forwards values unchanged but scales
/// gradients by -coeff, so it is not the derivative of its own forward map
/// and no difference quotient of the raw loss can match the backward pass.
/// Freezing each reversal input x0 at the evaluation point and rebuilding the
/// site as (1+coeff)*x0 - coeff*x keeps the forward value and makes -coeff
/// the true local slope, so central differences of the rebuilt loss measure
/// exactly what backward computes.
struct GrlLinearization {
    std::vector<Matrix> inputs;
    std::size_t cursor = 0;
};

struct ForwardOptions {
    double grl_coeff = 0.0;
    /// Pins every attention weight to 1 (feature combination and reported
    /// weights alike).
    bool force_unit_attention = false;
    /// Non-null switches the reversal sites into gradient-check mode: with
    /// record_grl the pass appends each reversal input to `inputs`; without
    /// it the pass consumes them as linearization anchors (two per call,
    /// spatial then temporal).
    GrlLinearization* grl_linearization = nullptr;
    bool record_grl = false;
};

/// Scale-r local temporal feature: the relation module applied to every clip
/// of the scale and summed.
ad::Node* local_temporal_feature(ad::Graph& g, const PatanModel& model, const Matrix& frames,
                                 int r);

/// Weighted combination sum_r w_r * f_r with plain-constant weights.
ad::Node* overall_temporal_feature(ad::Graph& g, std::span<ad::Node* const> locals,
                                   std::span<const double> weights);

ForwardOutput forward(ad::Graph& g, const PatanModel& model, const Matrix& frames,
                      const ForwardOptions& opts);

/// Argmax of the mean of the spatial and temporal class predictions; ties
/// break toward the lower index.
int predict_label(const ForwardOutput& out);

} // namespace patan
