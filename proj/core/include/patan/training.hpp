#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patan/autodiff.hpp"
#include "patan/data.hpp"
#include "patan/filtration.hpp"
#include "patan/model.hpp"

namespace patan {

enum class Method { source_only, dann, pada, patan };
enum class Ablation { none, no_attentive, no_local_weights, no_classifier, no_adversarial };

Method parse_method(const std::string& token);
Ablation parse_ablation(const std::string& token);
std::string method_token(Method m);
std::string ablation_token(Ablation a);

/// Combined method+ablation identity, e.g. "patan_wo_attentive".
struct MethodSpec {
    Method method = Method::patan;
    Ablation ablation = Ablation::none;
    bool operator==(const MethodSpec&) const = default;
};
MethodSpec parse_method_spec(const std::string& token);
std::string method_spec_token(const MethodSpec& spec);
/// Display names used in comparison tables ("Source-only", "DANN", "PADA",
/// "PATAN", "PATAN w/o attentive", ...).
std::string method_spec_display(const MethodSpec& spec);

struct TrainConfig {
    Method method = Method::patan;
    Ablation ablation = Ablation::none;
    double lr = 0.005;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int batch_size = 8;
    int epochs = 0;
    double lambda_sp = 1.0;
    double lambda_t = 1.0;
    double lambda_aux = 1.0;
    /// Epochs at which lr divides by 10. {-1,-1} resolves to
    /// {epochs/2, 3*epochs/4}; non-positive entries are ignored.
    std::array<int, 2> lr_drop_epochs = {-1, -1};
    std::uint64_t seed = 0;
};

struct EpochMetrics {
    int epoch = 0;
    double l_ty = 0.0;  // mean source temporal-classifier CE
    double l_spy = 0.0; // mean source spatial-classifier CE
    double l_spd = 0.0; // mean spatial-domain CE over both domains
    double l_td = 0.0;  // mean temporal-domain CE over both domains
    double l_aux = 0.0; // mean auxiliary CE over scales and source samples
    double source_accuracy = 0.0;
    double target_accuracy = 0.0;
    double lr = 0.0;
    std::vector<double> gamma; // class weights in force during the epoch
};

/// GRL coefficient ramp 2/(1+exp(-10*progress)) - 1 for progress in [0,1].
double grl_schedule(double progress);

/// Unweighted per-sample means of each loss term, for diagnostics.
struct BatchTerms {
    double l_ty = 0.0, l_spy = 0.0, l_spd = 0.0, l_td = 0.0, l_aux = 0.0;
};

using SampleBatch = std::span<const VideoSample* const>;

ad::Node* loss_source_only(ad::Graph& g, const TrainConfig& cfg, const PatanModel& model,
                           SampleBatch source_batch, BatchTerms* terms = nullptr);
ad::Node* loss_dann(ad::Graph& g, const TrainConfig& cfg, const PatanModel& model,
                    SampleBatch source_batch, SampleBatch target_batch, double grl_coeff,
                    BatchTerms* terms = nullptr);
ad::Node* loss_pada(ad::Graph& g, const TrainConfig& cfg, const PatanModel& model,
                    SampleBatch source_batch, SampleBatch target_batch,
                    const ClassWeights& gamma, double grl_coeff, BatchTerms* terms = nullptr);
ad::Node* loss_patan(ad::Graph& g, const TrainConfig& cfg, const PatanModel& model,
                     SampleBatch source_batch, SampleBatch target_batch,
                     const ClassWeights& gamma, double grl_coeff, BatchTerms* terms = nullptr);

/// SGD with classical momentum and decoupled weight decay:
/// v <- momentum*v + grad;  p <- p - lr*v - lr*weight_decay*p.
class SgdOptimizer {
public:
    SgdOptimizer(ad::ParamSet& params, double lr, double momentum, double weight_decay);
    void step();
    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

private:
    ad::ParamSet& params_;
    double lr_;
    double momentum_;
    double weight_decay_;
    std::vector<Matrix> velocity_;
};

/// Class weights recomputed from a full pass over the target split, per the
/// configured method (ones for source_only/dann, fused-prediction mean for
/// pada, temporal-attentive average for patan and its ablations).
ClassWeights compute_class_weights(const TrainConfig& cfg, const PatanModel& model,
                                   const SplitDataset& data, int epoch);

/// Worst relative gradient error over `trials` randomized small-loss checks
/// for the given method (random model sizes k<=4, d_in<=6, classes<=5,
/// random batches/lambdas/class weights; patan cycles its ablations), against
/// central differences. Deterministic for a fixed seed.
double max_loss_grad_error(Method method, int trials, std::uint64_t seed);

/// Full training loop: per epoch, refresh class weights, walk paired
/// source/target mini-batches (the shorter stream cycles with reshuffling),
/// backprop the method loss, and step SGD. Emits one JSON object per epoch to
/// `metrics_path` when given. Target labels are never read inside the loop;
/// the per-epoch accuracies are evaluated outside the audited section.
std::vector<EpochMetrics> train(const TrainConfig& cfg, const SplitDataset& data,
                                PatanModel& model,
                                const std::optional<std::filesystem::path>& metrics_path =
                                    std::nullopt);

} // namespace patan
