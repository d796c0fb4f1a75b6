#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "patan/matrix.hpp"

namespace patan::ad {

enum class Op : std::uint8_t {
    leaf,
    matmul,
    add,
    relu,
    tanh_,
    mean,
    sum,
    sum_rows,
    exp_,
    mul,
    scale,
    scale_by,
    concat_rows,
    log_softmax,
    cross_entropy,
    grl,
};

std::string_view op_name(Op op);

/// One node of the computation tape. Interior nodes are owned by a Graph,
/// parameter leaves by a ParamSet; both carry value and gradient storage of
/// identical shape.
struct Node {
    Matrix values;
    Matrix grad;
    Op op = Op::leaf;
    bool requires_grad = false;
    std::vector<Node*> parents;
    double alpha = 0.0; // scale factor / reversal coefficient
    int label = -1;     // cross_entropy target index
    int tape_index = -1;

    int rows() const { return values.rows(); }
    int cols() const { return values.cols(); }
    double scalar() const { return values(0, 0); }
    void zero_grad() { grad.set_zero(); }
};

/// Eagerly-evaluated computation tape. Forward values are computed at node
/// creation; backward replays the tape in reverse creation order, which is a
/// reverse topological order by construction. A Graph belongs to a single
/// training run and is not thread-safe.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf holding fixed values; no gradient flows into it.
    Node* constant(Matrix values);

    Node* matmul(Node* a, Node* b);
    Node* add(Node* a, Node* b);
    Node* relu(Node* x);
    Node* tanh(Node* x);
    /// Arithmetic mean of all entries, as a 1x1 node.
    Node* mean(Node* x);
    /// Sum of all entries, as a 1x1 node.
    Node* sum(Node* x);
    /// Column-wise sum over rows: m x n -> 1 x n.
    Node* sum_rows(Node* x);
    Node* exp(Node* x);
    /// Elementwise product of same-shape nodes.
    Node* mul(Node* a, Node* b);
    /// Multiply by a plain constant; the constant gets no gradient.
    Node* scale(Node* x, double c);
    /// Multiply a matrix node by a 1x1 node; gradient flows into both.
    Node* scale_by(Node* scalar, Node* x);
    /// Joins row vectors side by side: [1 x c0 | 1 x c1 | ...] -> 1 x sum(ci).
    /// Inputs with equal row counts > 1 are joined blockwise the same way.
    Node* concat_rows(std::span<Node* const> parts);
    /// Row-wise log-softmax, stabilized by max subtraction.
    Node* log_softmax(Node* logits);
    /// Negative log-softmax at `label` for a 1 x C logits row, as a 1x1 node.
    Node* cross_entropy(Node* logits, int label);
    /// Gradient reversal: identity forward, incoming gradient times -coeff
    /// backward. coeff must be >= 0.
    Node* grl(Node* x, double coeff);

    /// Accumulates d(root)/d(ancestor) into every requires_grad ancestor.
    /// root must be scalar. Calling twice without a gradient reset doubles
    /// the gradients.
    void backward(Node* root);

    /// Zeroes the gradients of interior nodes (parameter leaves are reset
    /// through their ParamSet).
    void zero_grad();

    std::size_t size() const { return nodes_.size(); }
    /// Read-only view of the tape in creation order, for diagnostics.
    const std::deque<Node>& nodes() const { return nodes_; }

private:
    Node* emplace(Matrix values, Op op, std::vector<Node*> parents);
    std::deque<Node> nodes_;
};

/// Named trainable leaves in deterministic insertion order.
class ParamSet {
public:
    ParamSet() = default;
    ParamSet(const ParamSet&) = delete;
    ParamSet& operator=(const ParamSet&) = delete;

    Node* add(const std::string& name, Matrix init);
    Node* find(std::string_view name) const;
    void zero_grad();

    std::size_t size() const { return entries_.size(); }
    std::size_t value_count() const;
    const std::vector<std::pair<std::string, Node*>>& entries() const { return entries_; }

private:
    std::deque<Node> storage_;
    std::vector<std::pair<std::string, Node*>> entries_;
};

/// Builds a fresh graph over the current parameter values and returns its
/// scalar root.
using GraphBuilder = std::function<Node*(Graph&)>;

/// Compares analytic gradients against central differences. Returns the
/// maximum over all parameter entries of |analytic - numeric| / max(1e-8,
/// |numeric|). The numeric side only ever runs the forward pass, so it stays
/// independent of the backward rules it checks.
double grad_check(const GraphBuilder& build, ParamSet& params, double eps = 1e-5);

} // namespace patan::ad
