#include "patan/autodiff.hpp"

#include <cmath>
#include <sstream>

#include "patan/errors.hpp"

namespace patan::ad {

std::string_view op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::matmul: return "matmul";
        case Op::add: return "add";
        case Op::relu: return "relu";
        case Op::tanh_: return "tanh";
        case Op::mean: return "mean";
        case Op::sum: return "sum";
        case Op::sum_rows: return "sum_rows";
        case Op::exp_: return "exp";
        case Op::mul: return "mul";
        case Op::scale: return "scale";
        case Op::scale_by: return "scale_by";
        case Op::concat_rows: return "concat_rows";
        case Op::log_softmax: return "log_softmax";
        case Op::cross_entropy: return "cross_entropy";
        case Op::grl: return "grl";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_error(std::string_view op, const Matrix& a, const Matrix& b) {
    std::ostringstream os;
    os << op << ": shape mismatch " << shape_str(a) << " vs " << shape_str(b);
    throw ConfigError(os.str());
}

bool any_requires_grad(const std::vector<Node*>& parents) {
    for (const Node* p : parents)
        if (p->requires_grad) return true;
    return false;
}

} // namespace

Node* Graph::emplace(Matrix values, Op op, std::vector<Node*> parents) {
    Node& n = nodes_.emplace_back();
    n.grad = Matrix(values.rows(), values.cols());
    n.values = std::move(values);
    n.op = op;
    n.parents = std::move(parents);
    n.requires_grad = any_requires_grad(n.parents);
    n.tape_index = static_cast<int>(nodes_.size()) - 1;
    return &n;
}

Node* Graph::constant(Matrix values) { return emplace(std::move(values), Op::leaf, {}); }

Node* Graph::matmul(Node* a, Node* b) {
    if (a->cols() != b->rows()) shape_error("matmul", a->values, b->values);
    Matrix out(a->rows(), b->cols());
    matmul_into(a->values, b->values, out);
    return emplace(std::move(out), Op::matmul, {a, b});
}

Node* Graph::add(Node* a, Node* b) {
    if (!a->values.same_shape(b->values)) shape_error("add", a->values, b->values);
    Matrix out = a->values;
    axpy(out, 1.0, b->values);
    return emplace(std::move(out), Op::add, {a, b});
}

Node* Graph::relu(Node* x) {
    Matrix out = x->values;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (out[i] < 0.0) out[i] = 0.0;
    return emplace(std::move(out), Op::relu, {x});
}

Node* Graph::tanh(Node* x) {
    Matrix out = x->values;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    return emplace(std::move(out), Op::tanh_, {x});
}

Node* Graph::mean(Node* x) {
    if (x->values.empty()) throw ConfigError("mean: empty input");
    double acc = 0.0;
    for (std::size_t i = 0; i < x->values.size(); ++i) acc += x->values[i];
    Matrix out(1, 1, acc / static_cast<double>(x->values.size()));
    return emplace(std::move(out), Op::mean, {x});
}

Node* Graph::sum(Node* x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < x->values.size(); ++i) acc += x->values[i];
    return emplace(Matrix(1, 1, acc), Op::sum, {x});
}

Node* Graph::sum_rows(Node* x) {
    Matrix out(1, x->cols());
    for (int r = 0; r < x->rows(); ++r)
        for (int c = 0; c < x->cols(); ++c) out(0, c) += x->values(r, c);
    return emplace(std::move(out), Op::sum_rows, {x});
}

Node* Graph::exp(Node* x) {
    Matrix out = x->values;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    return emplace(std::move(out), Op::exp_, {x});
}

Node* Graph::mul(Node* a, Node* b) {
    if (!a->values.same_shape(b->values)) shape_error("mul", a->values, b->values);
    Matrix out = a->values;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->values[i];
    return emplace(std::move(out), Op::mul, {a, b});
}

Node* Graph::scale(Node* x, double c) {
    Matrix out = x->values;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    Node* n = emplace(std::move(out), Op::scale, {x});
    n->alpha = c;
    return n;
}

Node* Graph::scale_by(Node* scalar, Node* x) {
    if (!scalar->values.is_scalar()) shape_error("scale_by", scalar->values, x->values);
    const double s = scalar->scalar();
    Matrix out = x->values;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= s;
    return emplace(std::move(out), Op::scale_by, {scalar, x});
}

Node* Graph::concat_rows(std::span<Node* const> parts) {
    if (parts.empty()) throw ConfigError("concat_rows: no inputs");
    const int rows = parts.front()->rows();
    int cols = 0;
    for (Node* p : parts) {
        if (p->rows() != rows) shape_error("concat_rows", parts.front()->values, p->values);
        cols += p->cols();
    }
    Matrix out(rows, cols);
    int off = 0;
    for (Node* p : parts) {
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < p->cols(); ++c) out(r, off + c) = p->values(r, c);
        off += p->cols();
    }
    std::vector<Node*> parents(parts.begin(), parts.end());
    return emplace(std::move(out), Op::concat_rows, std::move(parents));
}

Node* Graph::log_softmax(Node* logits) {
    Matrix out = logits->values;
    for (int r = 0; r < out.rows(); ++r) {
        double mx = out(r, 0);
        for (int c = 1; c < out.cols(); ++c) mx = std::max(mx, out(r, c));
        double lse = 0.0;
        for (int c = 0; c < out.cols(); ++c) lse += std::exp(out(r, c) - mx);
        lse = mx + std::log(lse);
        for (int c = 0; c < out.cols(); ++c) out(r, c) -= lse;
    }
    return emplace(std::move(out), Op::log_softmax, {logits});
}

Node* Graph::cross_entropy(Node* logits, int label) {
    if (logits->rows() != 1) {
        throw ConfigError("cross_entropy: expected a 1xC logits row, got " +
                          shape_str(logits->values));
    }
    if (label < 0 || label >= logits->cols()) {
        std::ostringstream os;
        os << "cross_entropy: label " << label << " out of range [0," << logits->cols() << ")";
        throw InputError(os.str());
    }
    double mx = logits->values(0, 0);
    for (int c = 1; c < logits->cols(); ++c) mx = std::max(mx, logits->values(0, c));
    double lse = 0.0;
    for (int c = 0; c < logits->cols(); ++c) lse += std::exp(logits->values(0, c) - mx);
    lse = mx + std::log(lse);
    Node* n = emplace(Matrix(1, 1, lse - logits->values(0, label)), Op::cross_entropy, {logits});
    n->label = label;
    return n;
}

Node* Graph::grl(Node* x, double coeff) {
    if (coeff < 0.0) throw ConfigError("grl: coefficient must be >= 0");
    Node* n = emplace(x->values, Op::grl, {x});
    n->alpha = coeff;
    return n;
}

void Graph::zero_grad() {
    for (Node& n : nodes_) n.zero_grad();
}

namespace {

void backprop_one(Node& n) {
    const Matrix& g = n.grad;
    switch (n.op) {
        case Op::leaf:
            break;
        case Op::matmul: {
            Node* a = n.parents[0];
            Node* b = n.parents[1];
            if (a->requires_grad) add_matmul_nt(a->grad, g, b->values);
            if (b->requires_grad) add_matmul_tn(b->grad, a->values, g);
            break;
        }
        case Op::add:
            for (Node* p : n.parents)
                if (p->requires_grad) axpy(p->grad, 1.0, g);
            break;
        case Op::relu: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i)
                if (x->values[i] > 0.0) x->grad[i] += g[i];
            break;
        }
        case Op::tanh_: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i)
                x->grad[i] += g[i] * (1.0 - n.values[i] * n.values[i]);
            break;
        }
        case Op::mean: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            const double gv = g(0, 0) / static_cast<double>(x->values.size());
            for (std::size_t i = 0; i < x->values.size(); ++i) x->grad[i] += gv;
            break;
        }
        case Op::sum: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            const double gv = g(0, 0);
            for (std::size_t i = 0; i < x->values.size(); ++i) x->grad[i] += gv;
            break;
        }
        case Op::sum_rows: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            for (int r = 0; r < x->rows(); ++r)
                for (int c = 0; c < x->cols(); ++c) x->grad(r, c) += g(0, c);
            break;
        }
        case Op::exp_: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            for (std::size_t i = 0; i < g.size(); ++i) x->grad[i] += g[i] * n.values[i];
            break;
        }
        case Op::mul: {
            Node* a = n.parents[0];
            Node* b = n.parents[1];
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (a->requires_grad) a->grad[i] += g[i] * b->values[i];
                if (b->requires_grad) b->grad[i] += g[i] * a->values[i];
            }
            break;
        }
        case Op::scale: {
            Node* x = n.parents[0];
            if (x->requires_grad) axpy(x->grad, n.alpha, g);
            break;
        }
        case Op::scale_by: {
            Node* s = n.parents[0];
            Node* x = n.parents[1];
            if (s->requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x->values[i];
                s->grad(0, 0) += acc;
            }
            if (x->requires_grad) axpy(x->grad, s->scalar(), g);
            break;
        }
        case Op::concat_rows: {
            int off = 0;
            for (Node* p : n.parents) {
                if (p->requires_grad) {
                    for (int r = 0; r < p->rows(); ++r)
                        for (int c = 0; c < p->cols(); ++c) p->grad(r, c) += g(r, off + c);
                }
                off += p->cols();
            }
            break;
        }
        case Op::log_softmax: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            for (int r = 0; r < n.rows(); ++r) {
                double gsum = 0.0;
                for (int c = 0; c < n.cols(); ++c) gsum += g(r, c);
                for (int c = 0; c < n.cols(); ++c)
                    x->grad(r, c) += g(r, c) - std::exp(n.values(r, c)) * gsum;
            }
            break;
        }
        case Op::cross_entropy: {
            Node* x = n.parents[0];
            if (!x->requires_grad) break;
            double mx = x->values(0, 0);
            for (int c = 1; c < x->cols(); ++c) mx = std::max(mx, x->values(0, c));
            double z = 0.0;
            for (int c = 0; c < x->cols(); ++c) z += std::exp(x->values(0, c) - mx);
            const double gv = g(0, 0);
            for (int c = 0; c < x->cols(); ++c) {
                const double p = std::exp(x->values(0, c) - mx) / z;
                x->grad(0, c) += gv * (p - (c == n.label ? 1.0 : 0.0));
            }
            break;
        }
        case Op::grl: {
            Node* x = n.parents[0];
            if (x->requires_grad) axpy(x->grad, -n.alpha, g);
            break;
        }
    }
}

} // namespace

void Graph::backward(Node* root) {
    if (!root->values.is_scalar()) {
        throw UsageError("backward: root must be scalar, got " + shape_str(root->values));
    }
    root->grad(0, 0) += 1.0;
    for (int i = root->tape_index; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.requires_grad && n.op != Op::leaf) backprop_one(n);
    }
}

Node* ParamSet::add(const std::string& name, Matrix init) {
    if (find(name) != nullptr) throw ConfigError("ParamSet: duplicate name '" + name + "'");
    Node& n = storage_.emplace_back();
    n.grad = Matrix(init.rows(), init.cols());
    n.values = std::move(init);
    n.op = Op::leaf;
    n.requires_grad = true;
    entries_.emplace_back(name, &n);
    return &n;
}

Node* ParamSet::find(std::string_view name) const {
    for (const auto& [n, node] : entries_)
        if (n == name) return node;
    return nullptr;
}

void ParamSet::zero_grad() {
    for (auto& [name, node] : entries_) node->zero_grad();
}

std::size_t ParamSet::value_count() const {
    std::size_t n = 0;
    for (const auto& [name, node] : entries_) n += node->values.size();
    return n;
}

double grad_check(const GraphBuilder& build, ParamSet& params, double eps) {
    if (eps <= 0.0) throw UsageError("grad_check: eps must be > 0");

    params.zero_grad();
    std::vector<Matrix> analytic;
    {
        Graph g;
        Node* root = build(g);
        g.backward(root);
        for (const auto& [name, node] : params.entries()) analytic.push_back(node->grad);
    }

    auto eval = [&]() {
        Graph g;
        return build(g)->scalar();
    };

    double max_rel = 0.0;
    std::size_t pi = 0;
    for (const auto& [name, node] : params.entries()) {
        for (std::size_t i = 0; i < node->values.size(); ++i) {
            const double saved = node->values[i];
            node->values[i] = saved + eps;
            const double fp = eval();
            node->values[i] = saved - eps;
            const double fm = eval();
            node->values[i] = saved;
            const double numeric = (fp - fm) / (2.0 * eps);
            const double rel =
                std::abs(analytic[pi][i] - numeric) / std::max(1e-8, std::abs(numeric));
            max_rel = std::max(max_rel, rel);
        }
        ++pi;
    }
    params.zero_grad();
    return max_rel;
}

} // namespace patan::ad
