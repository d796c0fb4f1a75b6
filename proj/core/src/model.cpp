#include "patan/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "patan/errors.hpp"

namespace patan {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// C(k, r) with saturation so huge values just read as "more than any cap".
unsigned long long binomial_capped(int k, int r, unsigned long long limit) {
    unsigned long long n = 1;
    for (int i = 1; i <= r; ++i) {
        n = n * static_cast<unsigned long long>(k - r + i) / static_cast<unsigned long long>(i);
        if (n > limit)
            return limit + 1;
    }
    return n;
}

} // namespace

std::vector<std::vector<int>> clip_subsets(int k, int r, int cap, std::uint64_t seed) {
    if (r < 2 || r > k) {
        std::ostringstream os;
        os << "clip scale r=" << r << " outside [2, k=" << k << "]";
        throw ConfigError(os.str());
    }
    if (cap < 1)
        throw ConfigError("clip subset cap must be at least 1");

    const auto cap_u = static_cast<unsigned long long>(cap);
    std::vector<std::vector<int>> out;
    if (binomial_capped(k, r, cap_u) <= cap_u) {
        // Full lexicographic enumeration.
        std::vector<int> idx(r);
        for (int i = 0; i < r; ++i)
            idx[i] = i + 1;
        while (true) {
            out.push_back(idx);
            int pos = r - 1;
            while (pos >= 0 && idx[pos] == k - (r - 1 - pos))
                --pos;
            if (pos < 0)
                break;
            ++idx[pos];
            for (int i = pos + 1; i < r; ++i)
                idx[i] = idx[i - 1] + 1;
        }
        return out;
    }

    // Too many combinations: draw `cap` distinct ones, deterministically from
    // (seed, k, r, cap), and return them in lexicographic order.
    std::uint64_t s = splitmix64(seed ^ static_cast<std::uint64_t>(k));
    s = splitmix64(s ^ static_cast<std::uint64_t>(r));
    s = splitmix64(s ^ static_cast<std::uint64_t>(cap));
    std::mt19937_64 rng(s);
    std::set<std::vector<int>> picked;
    std::vector<int> pool(k);
    for (int i = 0; i < k; ++i)
        pool[i] = i + 1;
    while (picked.size() < static_cast<std::size_t>(cap)) {
        for (int i = 0; i < r; ++i) {
            std::uniform_int_distribution<int> dist(i, k - 1);
            std::swap(pool[i], pool[dist(rng)]);
        }
        std::vector<int> tuple(pool.begin(), pool.begin() + r);
        std::sort(tuple.begin(), tuple.end());
        picked.insert(std::move(tuple));
    }
    out.assign(picked.begin(), picked.end());
    return out;
}

double certainty(std::span<const double> probs) {
    double c = 0.0;
    for (double p : probs)
        c += p * std::log(std::max(p, 1e-8));
    return c;
}

double attention_weight(std::span<const double> probs) {
    return std::max(0.0, std::tanh(1.0 + certainty(probs)));
}

std::vector<double> softmax_row(std::span<const double> logits) {
    double m = logits[0];
    for (double v : logits)
        m = std::max(m, v);
    std::vector<double> out(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        z += out[i];
    }
    for (double& v : out)
        v /= z;
    return out;
}

PatanModel::PatanModel(const ModelConfig& cfg) : cfg_(cfg) {
    auto require = [](bool ok, const char* what) {
        if (!ok)
            throw ConfigError(std::string("model config: ") + what);
    };
    require(cfg.d_in >= 1, "d_in must be at least 1");
    require(cfg.k >= 2, "k must be at least 2");
    require(cfg.num_classes >= 2, "num_classes must be at least 2");
    require(cfg.d_sp >= 1, "d_sp must be at least 1");
    require(cfg.d_t >= 1, "d_t must be at least 1");
    require(cfg.h_rel >= 1, "h_rel must be at least 1");
    require(cfg.max_subsets_per_scale >= 1, "max_subsets_per_scale must be at least 1");

    std::mt19937_64 rng(cfg.seed);
    auto xavier = [&rng](int rows, int cols, int fan_in, int fan_out) {
        const double a = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> dist(-a, a);
        Matrix m(rows, cols);
        for (int i = 0; i < rows * cols; ++i)
            m[i] = dist(rng);
        return m;
    };

    auto add_linear = [&](const std::string& stem, int in, int out) {
        LinearHead h;
        h.weight = params_.add(stem + ".w", xavier(in, out, in, out));
        h.bias = params_.add(stem + ".b", Matrix(1, out));
        return h;
    };
    auto add_mlp = [&](const std::string& stem, int in, int hidden, int out) {
        MlpHead h;
        h.w1 = params_.add(stem + ".w1", xavier(in, hidden, in, hidden));
        h.b1 = params_.add(stem + ".b1", Matrix(1, hidden));
        h.w2 = params_.add(stem + ".w2", xavier(hidden, out, hidden, out));
        h.b2 = params_.add(stem + ".b2", Matrix(1, out));
        return h;
    };

    spatial_extractor = add_mlp("spf", cfg.d_in, cfg.d_sp, cfg.d_sp);
    spatial_classifier = add_linear("spy", cfg.d_sp, cfg.num_classes);
    spatial_discriminator = add_mlp("spd", cfg.d_sp, cfg.d_sp, 2);

    for (int r = 2; r <= cfg.k; ++r) {
        const std::string stem = "rel" + std::to_string(r);
        const int in = r * cfg.d_in;
        RelationHead h;
        Matrix w1(in + 1, cfg.h_rel); // last row is the hidden bias, starts at 0
        Matrix body = xavier(in, cfg.h_rel, in, cfg.h_rel);
        std::copy(body.data(), body.data() + in * cfg.h_rel, w1.data());
        h.w1 = params_.add(stem + ".w1", w1);
        h.w2 = params_.add(stem + ".w2", xavier(cfg.h_rel, cfg.d_t, cfg.h_rel, cfg.d_t));
        h.b2 = params_.add(stem + ".b2", Matrix(1, cfg.d_t));
        relation.push_back(h);
    }
    for (int r = 2; r <= cfg.k; ++r)
        aux_classifier.push_back(add_linear("aux" + std::to_string(r), cfg.d_t, cfg.num_classes));

    temporal_classifier = add_linear("ty", cfg.d_t, cfg.num_classes);
    temporal_discriminator = add_mlp("td", cfg.d_t, cfg.d_t, 2);

    for (int r = 2; r <= cfg.k; ++r)
        subsets_.push_back(clip_subsets(cfg.k, r, cfg.max_subsets_per_scale, cfg.seed));
}

const std::vector<std::vector<int>>& PatanModel::subsets(int r) const {
    if (r < 2 || r > cfg_.k) {
        std::ostringstream os;
        os << "scale r=" << r << " outside [2, k=" << cfg_.k << "]";
        throw ConfigError(os.str());
    }
    return subsets_[r - 2];
}

namespace {

ad::Node* apply_mlp(ad::Graph& g, ad::Node* x, const MlpHead& h) {
    ad::Node* hidden = g.relu(g.add(g.matmul(x, h.w1), h.b1));
    return g.add(g.matmul(hidden, h.w2), h.b2);
}

ad::Node* apply_linear(ad::Graph& g, ad::Node* x, const LinearHead& h) {
    return g.add(g.matmul(x, h.weight), h.bias);
}

void check_frames(const ModelConfig& cfg, const Matrix& frames) {
    if (frames.rows() != cfg.k || frames.cols() != cfg.d_in) {
        std::ostringstream os;
        os << "expected " << cfg.k << "x" << cfg.d_in << " frame matrix, got "
           << shape_str(frames);
        throw InputError(os.str());
    }
}

// Gradient reversal entry point; see GrlLinearization for the replay form
// used by finite-difference checks.
ad::Node* reversal_site(ad::Graph& g, ad::Node* x, const ForwardOptions& opts) {
    GrlLinearization* lin = opts.grl_linearization;
    if (lin == nullptr)
        return g.grl(x, opts.grl_coeff);
    if (opts.record_grl) {
        lin->inputs.push_back(x->values);
        return g.grl(x, opts.grl_coeff);
    }
    if (lin->cursor >= lin->inputs.size())
        throw UsageError("gradient-reversal linearization ran out of recorded inputs");
    Matrix anchor = lin->inputs[lin->cursor++];
    const int n = anchor.rows() * anchor.cols();
    for (int i = 0; i < n; ++i)
        anchor[i] *= 1.0 + opts.grl_coeff;
    return g.add(g.constant(std::move(anchor)), g.scale(x, -opts.grl_coeff));
}

} // namespace

ad::Node* local_temporal_feature(ad::Graph& g, const PatanModel& model, const Matrix& frames,
                                 int r) {
    const ModelConfig& cfg = model.config();
    check_frames(cfg, frames);
    const auto& subs = model.subsets(r); // validates r
    const int m = static_cast<int>(subs.size());
    const int d = cfg.d_in;

    Matrix clips(m, r * d + 1);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < r; ++j) {
            const int frame = subs[i][j] - 1;
            for (int c = 0; c < d; ++c)
                clips(i, j * d + c) = frames(frame, c);
        }
        clips(i, r * d) = 1.0; // ones column paired with the bias row of w1
    }

    const RelationHead& rel = model.relation[r - 2];
    ad::Node* hidden = g.relu(g.matmul(g.constant(clips), rel.w1));
    ad::Node* per_clip = g.matmul(hidden, rel.w2); // m x d_t
    ad::Node* summed = g.sum_rows(per_clip);
    return g.add(summed, g.scale(rel.b2, static_cast<double>(m)));
}

ad::Node* overall_temporal_feature(ad::Graph& g, std::span<ad::Node* const> locals,
                                   std::span<const double> weights) {
    if (locals.empty())
        throw ConfigError("overall temporal feature needs at least one scale");
    if (locals.size() != weights.size())
        throw ConfigError("one weight per local temporal feature required");
    ad::Node* acc = g.scale(locals[0], weights[0]);
    for (std::size_t i = 1; i < locals.size(); ++i)
        acc = g.add(acc, g.scale(locals[i], weights[i]));
    return acc;
}

ForwardOutput forward(ad::Graph& g, const PatanModel& model, const Matrix& frames,
                      const ForwardOptions& opts) {
    const ModelConfig& cfg = model.config();
    check_frames(cfg, frames);

    ForwardOutput out;

    // Spatial path works on the frame average.
    Matrix pooled(1, cfg.d_in);
    for (int r = 0; r < cfg.k; ++r)
        for (int c = 0; c < cfg.d_in; ++c)
            pooled(0, c) += frames(r, c);
    for (int c = 0; c < cfg.d_in; ++c)
        pooled(0, c) /= cfg.k;

    ad::Node* x = apply_mlp(g, g.constant(pooled), model.spatial_extractor);
    out.spatial_feature = x;
    out.spatial_logits = apply_linear(g, x, model.spatial_classifier);
    out.spatial_probs = softmax_row(out.spatial_logits->values.values());

    ad::Node* one = nullptr; // lazily created 1x1 constant for the graph attention path
    std::vector<ad::Node*> locals;
    std::vector<ad::Node*> contributions;
    std::vector<double> const_weights;
    for (int r = 2; r <= cfg.k; ++r) {
        ScaleOutput sc;
        sc.r = r;
        sc.local_feature = local_temporal_feature(g, model, frames, r);
        sc.aux_logits = apply_linear(g, sc.local_feature, model.aux_classifier[r - 2]);
        sc.probs = softmax_row(sc.aux_logits->values.values());
        sc.weight = opts.force_unit_attention ? 1.0 : attention_weight(sc.probs);

        locals.push_back(sc.local_feature);
        if (!opts.force_unit_attention && !cfg.stop_grad_attention) {
            // Differentiable weight: relu(tanh(1 + sum p log p)) on the graph.
            if (one == nullptr)
                one = g.constant(Matrix(1, 1, 1.0));
            ad::Node* lp = g.log_softmax(sc.aux_logits);
            ad::Node* neg_entropy = g.sum(g.mul(g.exp(lp), lp));
            ad::Node* w = g.relu(g.tanh(g.add(one, neg_entropy)));
            contributions.push_back(g.scale_by(w, sc.local_feature));
        } else {
            const_weights.push_back(sc.weight);
        }
        out.scales.push_back(std::move(sc));
    }

    if (!contributions.empty()) {
        ad::Node* acc = contributions[0];
        for (std::size_t i = 1; i < contributions.size(); ++i)
            acc = g.add(acc, contributions[i]);
        out.temporal_feature = acc;
    } else {
        out.temporal_feature = overall_temporal_feature(g, locals, const_weights);
    }

    out.temporal_logits = apply_linear(g, out.temporal_feature, model.temporal_classifier);
    out.temporal_probs = softmax_row(out.temporal_logits->values.values());

    out.spatial_domain_logits = apply_mlp(g, reversal_site(g, x, opts), model.spatial_discriminator);
    out.temporal_domain_logits =
        apply_mlp(g, reversal_site(g, out.temporal_feature, opts), model.temporal_discriminator);
    return out;
}

int predict_label(const ForwardOutput& out) {
    int best = 0;
    double best_score = -1.0;
    for (std::size_t c = 0; c < out.spatial_probs.size(); ++c) {
        const double score = 0.5 * (out.spatial_probs[c] + out.temporal_probs[c]);
        if (score > best_score) {
            best_score = score;
            best = static_cast<int>(c);
        }
    }
    return best;
}

} // namespace patan
