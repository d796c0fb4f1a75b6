#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <functional>
#include <initializer_list>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "patan/autodiff.hpp"
#include "patan/errors.hpp"

using namespace patan;

namespace {

Matrix filled(int r, int c, std::initializer_list<double> v) {
    Matrix m(r, c);
    int i = 0;
    for (double x : v)
        m[i++] = x;
    return m;
}

} // namespace

TEST_CASE("tanh at zero has value zero and slope one") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", Matrix(1, 1, 0.0));
    ad::Graph g;
    ad::Node* root = g.tanh(w);
    CHECK(root->scalar() == 0.0);
    g.backward(root);
    CHECK(w->grad[0] == 1.0);
}

TEST_CASE("mean of [2,4] is 3 and distributes gradient evenly") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", filled(1, 2, {2.0, 4.0}));
    ad::Graph g;
    ad::Node* root = g.mean(w);
    CHECK(root->scalar() == 3.0);
    g.backward(root);
    CHECK(w->grad[0] == 0.5);
    CHECK(w->grad[1] == 0.5);
}

TEST_CASE("matmul with identity returns its input") {
    ad::Graph g;
    ad::Node* eye = g.constant(filled(2, 2, {1, 0, 0, 1}));
    ad::Node* x = g.constant(filled(2, 3, {1, 2, 3, 4, 5, 6}));
    ad::Node* y = g.matmul(eye, x);
    for (int i = 0; i < 6; ++i)
        CHECK(y->values[i] == x->values[i]);
}

TEST_CASE("shape mismatches are rejected with the offending shapes") {
    ad::Graph g;
    ad::Node* a = g.constant(Matrix(1, 2, 1.0));
    ad::Node* b = g.constant(Matrix(2, 1, 1.0));
    CHECK_THROWS_AS(g.add(a, b), ConfigError);
    CHECK_THROWS_AS(g.mul(a, b), ConfigError);
    CHECK_THROWS_AS(g.matmul(a, a), ConfigError);
    try {
        g.add(a, b);
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("1x2") != std::string::npos);
        CHECK(msg.find("2x1") != std::string::npos);
    }
}

TEST_CASE("cross entropy of uniform logits is ln C") {
    ad::Graph g;
    for (int c : {2, 5, 14}) {
        ad::Node* logits = g.constant(Matrix(1, c, 0.42));
        ad::Node* ce = g.cross_entropy(logits, c - 1);
        CHECK(ce->scalar() == doctest::Approx(std::log(double(c))).epsilon(1e-12));
    }
}

TEST_CASE("cross entropy stays finite on extreme logits") {
    ad::Graph g;
    ad::Node* logits = g.constant(filled(1, 2, {1000.0, 0.0}));
    ad::Node* ce = g.cross_entropy(logits, 0);
    CHECK(std::isfinite(ce->scalar()));
    CHECK(ce->scalar() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross entropy matches the closed form on a two-class row") {
    ad::ParamSet params;
    ad::Node* logits = params.add("z", filled(1, 2, {0.5, -0.5}));
    ad::Graph g;
    ad::Node* ce = g.cross_entropy(logits, 0);
    CHECK(ce->scalar() == doctest::Approx(std::log(1.0 + std::exp(-1.0))).epsilon(1e-12));
    g.backward(ce);
    // d/dz of -log softmax(z)[0] is p - onehot(0)
    const double p0 = 1.0 / (1.0 + std::exp(-1.0));
    CHECK(logits->grad[0] == doctest::Approx(p0 - 1.0).epsilon(1e-12));
    CHECK(logits->grad[1] == doctest::Approx(1.0 - p0).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range labels") {
    ad::Graph g;
    ad::Node* logits = g.constant(Matrix(1, 3, 0.0));
    CHECK_THROWS_AS(g.cross_entropy(logits, 3), InputError);
    CHECK_THROWS_AS(g.cross_entropy(logits, -1), InputError);
}

TEST_CASE("log softmax exponentials sum to one for magnitudes up to 1e3") {
    ad::Graph g;
    for (double scale : {1.0, 100.0, 1000.0}) {
        ad::Node* z = g.constant(filled(1, 4, {scale, -scale, scale / 3, 0.0}));
        ad::Node* ls = g.log_softmax(z);
        double s = 0.0;
        for (int i = 0; i < 4; ++i)
            s += std::exp(ls->values[i]);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("gradient reversal forwards values bit-for-bit") {
    ad::Graph g;
    ad::Node* x = g.constant(filled(2, 2, {0.1, -2.5, 3.0, 0.0}));
    for (double coeff : {0.0, 0.5, 1.0, 7.25}) {
        ad::Node* y = g.grl(x, coeff);
        for (int i = 0; i < 4; ++i)
            CHECK(y->values[i] == x->values[i]);
    }
}

TEST_CASE("gradient reversal negates and scales the incoming gradient") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", filled(1, 3, {0.2, -0.4, 0.6}));

    // coeff 1: the downstream gradient arrives negated.
    {
        ad::Graph g;
        ad::Node* root = g.mean(g.grl(w, 1.0));
        g.backward(root);
        for (int i = 0; i < 3; ++i)
            CHECK(w->grad[i] == -1.0 / 3.0);
    }
    params.zero_grad();
    // coeff 0: nothing flows through.
    {
        ad::Graph g;
        ad::Node* root = g.mean(g.grl(w, 0.0));
        g.backward(root);
        for (int i = 0; i < 3; ++i)
            CHECK(w->grad[i] == 0.0);
    }
}

TEST_CASE("reversed gradient equals minus coeff times the identity graph's slope") {
    // The reversal layer is not the derivative of its forward map, so the
    // numeric reference is taken on the plain graph without the layer.
    const double coeff = 0.7;
    ad::ParamSet params;
    ad::Node* w = params.add("w", filled(1, 3, {0.3, -0.2, 0.8}));

    ad::Graph g;
    ad::Node* root = g.mean(g.tanh(g.grl(w, coeff)));
    g.backward(root);
    Matrix reversed = w->grad;

    params.zero_grad();
    const double eps = 1e-6;
    for (int i = 0; i < 3; ++i) {
        const double saved = w->values[i];
        auto eval = [&]() {
            ad::Graph h;
            return h.mean(h.tanh(w))->scalar();
        };
        w->values[i] = saved + eps;
        const double fp = eval();
        w->values[i] = saved - eps;
        const double fm = eval();
        w->values[i] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        CHECK(reversed[i] == doctest::Approx(-coeff * numeric).epsilon(1e-7));
    }
}

TEST_CASE("backward of a parameter mean gives 1/n everywhere") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", Matrix(2, 3, 0.77));
    ad::Graph g;
    ad::Node* root = g.mean(w);
    g.backward(root);
    for (int i = 0; i < 6; ++i)
        CHECK(w->grad[i] == 1.0 / 6.0);
}

TEST_CASE("backward rejects non-scalar roots") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", Matrix(1, 2, 1.0));
    ad::Graph g;
    ad::Node* y = g.tanh(w);
    CHECK_THROWS_AS(g.backward(y), UsageError);
}

TEST_CASE("backward without reset accumulates, with reset repeats bitwise") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", filled(1, 2, {0.3, -0.7}));
    ad::Graph g;
    ad::Node* root = g.sum(g.tanh(w));
    g.backward(root);
    const Matrix first = w->grad;

    g.zero_grad();
    g.backward(root);
    for (int i = 0; i < 2; ++i)
        CHECK(w->grad[i] == 2.0 * first[i]);

    g.zero_grad();
    params.zero_grad();
    g.backward(root);
    for (int i = 0; i < 2; ++i)
        CHECK(w->grad[i] == first[i]);
}

TEST_CASE("parameter sets keep insertion order and reject duplicates") {
    ad::ParamSet params;
    params.add("b", Matrix(1, 1, 1.0));
    params.add("a", Matrix(1, 1, 2.0));
    CHECK(params.entries()[0].first == "b");
    CHECK(params.entries()[1].first == "a");
    CHECK(params.find("a")->values[0] == 2.0);
    CHECK(params.find("missing") == nullptr);
    CHECK_THROWS_AS(params.add("a", Matrix(1, 1, 0.0)), ConfigError);
    CHECK(params.value_count() == 2);
}

TEST_CASE("a linear graph grad-checks almost exactly") {
    ad::ParamSet params;
    ad::Node* w = params.add("w", filled(2, 2, {0.5, -1.5, 2.0, 0.25}));
    auto build = [&](ad::Graph& g) { return g.scale(g.sum(w), 0.37); };
    CHECK(ad::grad_check(build, params) < 1e-9);
}

TEST_CASE("every op passes a finite-difference check at random points") {
    // 100 draws per op, values in [-1, 1].
    std::mt19937_64 rng(412841);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    auto redraw = [&](ad::ParamSet& params) {
        for (const auto& [name, node] : params.entries())
            for (std::size_t i = 0; i < node->values.size(); ++i)
                node->values[i] = unit(rng);
    };

    struct OpCase {
        const char* name;
        std::vector<std::pair<const char*, std::pair<int, int>>> shapes;
        std::function<ad::Node*(ad::Graph&, ad::ParamSet&)> build;
    };
    const std::vector<OpCase> cases = {
        {"matmul",
         {{"a", {2, 3}}, {"b", {3, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.sum(g.tanh(g.matmul(p.find("a"), p.find("b"))));
         }},
        {"add",
         {{"a", {2, 2}}, {"b", {2, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.sum(g.tanh(g.add(p.find("a"), p.find("b"))));
         }},
        {"relu",
         {{"a", {2, 3}}},
         [](ad::Graph& g, ad::ParamSet& p) { return g.sum(g.relu(p.find("a"))); }},
        {"tanh",
         {{"a", {2, 3}}},
         [](ad::Graph& g, ad::ParamSet& p) { return g.mean(g.tanh(p.find("a"))); }},
        {"mean",
         {{"a", {3, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) { return g.mean(g.tanh(p.find("a"))); }},
        {"sum",
         {{"a", {2, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) { return g.sum(g.tanh(p.find("a"))); }},
        {"sum_rows",
         {{"a", {3, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.sum(g.tanh(g.sum_rows(p.find("a"))));
         }},
        {"exp",
         {{"a", {1, 4}}},
         [](ad::Graph& g, ad::ParamSet& p) { return g.mean(g.exp(p.find("a"))); }},
        {"mul",
         {{"a", {2, 2}}, {"b", {2, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.sum(g.mul(p.find("a"), p.find("b")));
         }},
        {"scale",
         {{"a", {2, 2}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.scale(g.sum(g.tanh(p.find("a"))), -0.63);
         }},
        {"scale_by",
         {{"s", {1, 1}}, {"a", {1, 4}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.sum(g.tanh(g.scale_by(p.find("s"), p.find("a"))));
         }},
        {"concat_rows",
         {{"a", {1, 2}}, {"b", {1, 3}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             std::vector<ad::Node*> parts{p.find("a"), p.find("b")};
             return g.sum(g.tanh(g.concat_rows(parts)));
         }},
        {"log_softmax",
         {{"a", {1, 4}}},
         [](ad::Graph& g, ad::ParamSet& p) {
             return g.mean(g.mul(g.log_softmax(p.find("a")), p.find("a")));
         }},
        {"cross_entropy",
         {{"a", {1, 4}}},
         [](ad::Graph& g, ad::ParamSet& p) { return g.cross_entropy(p.find("a"), 2); }},
    };

    for (const OpCase& oc : cases) {
        ad::ParamSet params;
        for (const auto& [nm, shape] : oc.shapes)
            params.add(nm, Matrix(shape.first, shape.second));
        double worst = 0.0;
        for (int trial = 0; trial < 100; ++trial) {
            redraw(params);
            auto build = [&](ad::Graph& g) { return oc.build(g, params); };
            worst = std::max(worst, ad::grad_check(build, params));
        }
        INFO(oc.name);
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("a certainty-style composite graph matches finite differences") {
    // sum(exp(log_softmax(z)) * log_softmax(z)) over a logits row: the
    // negative-entropy score assembled from primitive ops.
    std::mt19937_64 rng(99173);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    ad::ParamSet params;
    ad::Node* z = params.add("z", Matrix(1, 5));
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        for (std::size_t i = 0; i < z->values.size(); ++i)
            z->values[i] = unit(rng);
        auto build = [&](ad::Graph& g) {
            ad::Node* lp = g.log_softmax(z);
            return g.sum(g.mul(g.exp(lp), lp));
        };
        worst = std::max(worst, ad::grad_check(build, params));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("grad_check rejects non-positive eps") {
    ad::ParamSet params;
    params.add("w", Matrix(1, 1, 0.5));
    auto build = [&](ad::Graph& g) { return g.sum(params.find("w")); };
    CHECK_THROWS_AS(ad::grad_check(build, params, 0.0), UsageError);
}
