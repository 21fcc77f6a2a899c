// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dact/error.hpp"
#include "dact/tensor.hpp"

// Per-op finite-value checks are active unless NDEBUG is defined.
#if !defined(NDEBUG)
#define DACT_FINITE_CHECKS 1
#else
#define DACT_FINITE_CHECKS 0
#endif

namespace dact {

/// Index of a node in a GraphT tape.
class NodeId {
public:
    NodeId() = default;
    explicit NodeId(std::size_t i) : index_(i) {}
    std::size_t index() const { return index_; }
    bool valid() const { return index_ != npos; }
    friend bool operator==(const NodeId&, const NodeId&) = default;

private:
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t index_ = npos;
};

enum class OpKind {
    Leaf,
    Matmul,
    MatmulNT,
    Matvec,
    Add,
    Sub,
    Mul,
    AddRowwise,
    Scale,
    Sigmoid,
    Tanh,
    Relu,
    Row,
    StackRows,
    Concat,
    PadRows,
    FirstRows,
    UnfoldWindows,
    Reshape,
    MaxPoolTime,
    EmbedRows,
    Softmax,
    SoftmaxNll,
};

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::Leaf: return "leaf";
        case OpKind::Matmul: return "matmul";
        case OpKind::MatmulNT: return "matmul_nt";
        case OpKind::Matvec: return "matvec";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::AddRowwise: return "add_rowwise";
        case OpKind::Scale: return "scale";
        case OpKind::Sigmoid: return "sigmoid";
        case OpKind::Tanh: return "tanh";
        case OpKind::Relu: return "relu";
        case OpKind::Row: return "row";
        case OpKind::StackRows: return "stack_rows";
        case OpKind::Concat: return "concat";
        case OpKind::PadRows: return "pad_rows";
        case OpKind::FirstRows: return "first_rows";
        case OpKind::UnfoldWindows: return "unfold_windows";
        case OpKind::Reshape: return "reshape";
        case OpKind::MaxPoolTime: return "max_pool_time";
        case OpKind::EmbedRows: return "embed_rows";
        case OpKind::Softmax: return "softmax";
        case OpKind::SoftmaxNll: return "softmax_nll";
    }
    return "?";
}

/// Reverse-mode tape. Nodes are appended in execution order, so the tape is
/// topologically sorted by construction; backward() is a single reverse sweep.
/// Node values are immutable once recorded.
template <typename Real>
class GraphT {
public:
    struct Node {
        OpKind op;
        std::vector<NodeId> inputs;
        TensorT<Real> value;
        bool needs_grad = false;
        std::vector<std::size_t> aux_ids;  // embed token ids
        std::size_t aux_n = 0;             // row index / width / min rows / target
        Real aux_real = Real(0);           // scale factor
    };

    std::size_t size() const { return nodes_.size(); }

    const Node& node(NodeId id) const { return nodes_.at(id.index()); }

    const TensorT<Real>& value(NodeId id) const {
        if (!id.valid() || id.index() >= nodes_.size()) {
            throw ContractError("invalid node id");
        }
        return nodes_[id.index()].value;
    }

    /// Registers an input tensor. Gradients are tracked iff value.requires_grad().
    NodeId leaf(TensorT<Real> value) {
        Node n{OpKind::Leaf, {}, std::move(value)};
        n.needs_grad = n.value.requires_grad();
        return push(std::move(n), /*check_finite=*/false);
    }

    /// Registers a fixed tensor that never receives gradients.
    NodeId constant(TensorT<Real> value) {
        value.set_requires_grad(false);
        return leaf(std::move(value));
    }

    NodeId matmul(NodeId a, NodeId b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require_rank(ta, 2, "matmul lhs");
        require_rank(tb, 2, "matmul rhs");
        if (ta.dim(1) != tb.dim(0)) {
            throw DimensionError("matmul inner dimensions differ: " +
                                 shape_to_string(ta.shape()) + " vs " +
                                 shape_to_string(tb.shape()));
        }
        const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(1);
        TensorT<Real> out(Shape{m, n});
        auto o = out.mutable_data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
                const Real av = ta.at(i, p);
                for (std::size_t j = 0; j < n; ++j) {
                    o[i * n + j] += av * tb.at(p, j);
                }
            }
        }
        return push({OpKind::Matmul, {a, b}, std::move(out)});
    }

    /// out = a * transpose(b), with a:[m x k], b:[n x k].
    NodeId matmul_nt(NodeId a, NodeId b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        require_rank(ta, 2, "matmul_nt lhs");
        require_rank(tb, 2, "matmul_nt rhs");
        if (ta.dim(1) != tb.dim(1)) {
            throw DimensionError("matmul_nt contraction dimensions differ: " +
                                 shape_to_string(ta.shape()) + " vs " +
                                 shape_to_string(tb.shape()));
        }
        const std::size_t m = ta.dim(0), k = ta.dim(1), n = tb.dim(0);
        TensorT<Real> out(Shape{m, n});
        auto o = out.mutable_data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                Real s = 0;
                for (std::size_t p = 0; p < k; ++p) s += ta.at(i, p) * tb.at(j, p);
                o[i * n + j] = s;
            }
        }
        return push({OpKind::MatmulNT, {a, b}, std::move(out)});
    }

    NodeId matvec(NodeId m, NodeId v) {
        const auto& tm = value(m);
        const auto& tv = value(v);
        require_rank(tm, 2, "matvec matrix");
        require_rank(tv, 1, "matvec vector");
        if (tm.dim(1) != tv.dim(0)) {
            throw DimensionError("matvec dimensions differ: " +
                                 shape_to_string(tm.shape()) + " vs " +
                                 shape_to_string(tv.shape()));
        }
        const std::size_t r = tm.dim(0), c = tm.dim(1);
        TensorT<Real> out(Shape{r});
        auto o = out.mutable_data();
        for (std::size_t i = 0; i < r; ++i) {
            Real s = 0;
            for (std::size_t j = 0; j < c; ++j) s += tm.at(i, j) * tv[j];
            o[i] = s;
        }
        return push({OpKind::Matvec, {m, v}, std::move(out)});
    }

    NodeId add(NodeId a, NodeId b) { return binary(OpKind::Add, a, b); }
    NodeId sub(NodeId a, NodeId b) { return binary(OpKind::Sub, a, b); }
    NodeId mul(NodeId a, NodeId b) { return binary(OpKind::Mul, a, b); }

    /// Adds a bias vector to every row of a matrix (the one explicit
    /// broadcast; everything else requires exact shape matches).
    NodeId add_rowwise(NodeId m, NodeId bias) {
        const auto& tm = value(m);
        const auto& tb = value(bias);
        require_rank(tm, 2, "add_rowwise matrix");
        require_rank(tb, 1, "add_rowwise bias");
        if (tm.dim(1) != tb.dim(0)) {
            throw DimensionError("add_rowwise width mismatch: " +
                                 shape_to_string(tm.shape()) + " vs " +
                                 shape_to_string(tb.shape()));
        }
        TensorT<Real> out(tm.shape());
        auto o = out.mutable_data();
        const std::size_t r = tm.dim(0), c = tm.dim(1);
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) o[i * c + j] = tm.at(i, j) + tb[j];
        }
        return push({OpKind::AddRowwise, {m, bias}, std::move(out)});
    }

    NodeId scale(NodeId a, Real factor) {
        const auto& ta = value(a);
        TensorT<Real> out(ta.shape());
        auto o = out.mutable_data();
        auto in = ta.data();
        for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] * factor;
        Node n{OpKind::Scale, {a}, std::move(out)};
        n.aux_real = factor;
        return push(std::move(n));
    }

    NodeId sigmoid(NodeId a) {
        return unary(OpKind::Sigmoid, a, [](Real x) { return stable_sigmoid(x); });
    }
    NodeId tanh(NodeId a) {
        return unary(OpKind::Tanh, a, [](Real x) { return std::tanh(x); });
    }
    NodeId relu(NodeId a) {
        return unary(OpKind::Relu, a, [](Real x) { return x > Real(0) ? x : Real(0); });
    }

    NodeId row(NodeId m, std::size_t r) {
        const auto& tm = value(m);
        require_rank(tm, 2, "row");
        if (r >= tm.dim(0)) {
            throw IndexError("row " + std::to_string(r) + " out of range for " +
                             shape_to_string(tm.shape()));
        }
        const std::size_t c = tm.dim(1);
        TensorT<Real> out(Shape{c});
        auto o = out.mutable_data();
        for (std::size_t j = 0; j < c; ++j) o[j] = tm.at(r, j);
        Node n{OpKind::Row, {m}, std::move(out)};
        n.aux_n = r;
        return push(std::move(n));
    }

    /// Stacks equal-length vectors into a [n x d] matrix.
    NodeId stack_rows(std::span<const NodeId> rows) {
        if (rows.empty()) {
            throw EmptySequenceError("stack_rows over an empty sequence");
        }
        const std::size_t d = value(rows[0]).numel();
        TensorT<Real> out(Shape{rows.size(), d});
        auto o = out.mutable_data();
        std::vector<NodeId> inputs(rows.begin(), rows.end());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& tr = value(rows[i]);
            require_rank(tr, 1, "stack_rows element");
            if (tr.numel() != d) {
                throw DimensionError("stack_rows element " + std::to_string(i) +
                                     " has shape " + shape_to_string(tr.shape()) +
                                     ", expected [" + std::to_string(d) + "]");
            }
            std::copy(tr.data().begin(), tr.data().end(), o.begin() + i * d);
        }
        return push({OpKind::StackRows, std::move(inputs), std::move(out)});
    }

    /// Concatenates vectors end to end.
    NodeId concat(std::span<const NodeId> parts) {
        if (parts.empty()) {
            throw EmptySequenceError("concat over an empty sequence");
        }
        std::size_t total = 0;
        for (NodeId p : parts) {
            require_rank(value(p), 1, "concat element");
            total += value(p).numel();
        }
        TensorT<Real> out(Shape{total});
        auto o = out.mutable_data();
        std::size_t off = 0;
        std::vector<NodeId> inputs(parts.begin(), parts.end());
        for (NodeId p : parts) {
            auto d = value(p).data();
            std::copy(d.begin(), d.end(), o.begin() + off);
            off += d.size();
        }
        return push({OpKind::Concat, std::move(inputs), std::move(out)});
    }

    /// Right-pads a [r x c] matrix with zero rows up to min_rows (identity when
    /// r >= min_rows). Padding rows receive no gradient.
    NodeId pad_rows(NodeId m, std::size_t min_rows) {
        const auto& tm = value(m);
        require_rank(tm, 2, "pad_rows");
        const std::size_t r = tm.dim(0), c = tm.dim(1);
        const std::size_t rr = std::max(r, min_rows);
        TensorT<Real> out(Shape{rr, c});
        auto o = out.mutable_data();
        std::copy(tm.data().begin(), tm.data().end(), o.begin());
        Node n{OpKind::PadRows, {m}, std::move(out)};
        n.aux_n = min_rows;
        return push(std::move(n));
    }

    /// Keeps the leading `count` rows of a matrix. Dropped rows receive no
    /// gradient.
    NodeId first_rows(NodeId m, std::size_t count) {
        const auto& tm = value(m);
        require_rank(tm, 2, "first_rows");
        const std::size_t r = tm.dim(0), c = tm.dim(1);
        if (count == 0 || count > r) {
            throw DimensionError("first_rows count " + std::to_string(count) +
                                 " invalid for " + shape_to_string(tm.shape()));
        }
        TensorT<Real> out(Shape{count, c});
        auto o = out.mutable_data();
        std::copy(tm.data().begin(), tm.data().begin() + count * c, o.begin());
        Node n{OpKind::FirstRows, {m}, std::move(out)};
        n.aux_n = count;
        return push(std::move(n));
    }

    /// im2row: each output row is a flattened window of `width` consecutive
    /// input rows; output is [(r-width+1) x (width*c)].
    NodeId unfold_windows(NodeId m, std::size_t width) {
        const auto& tm = value(m);
        require_rank(tm, 2, "unfold_windows");
        const std::size_t r = tm.dim(0), c = tm.dim(1);
        if (width == 0 || width > r) {
            throw DimensionError("unfold_windows width " + std::to_string(width) +
                                 " invalid for " + shape_to_string(tm.shape()));
        }
        const std::size_t p = r - width + 1;
        TensorT<Real> out(Shape{p, width * c});
        auto o = out.mutable_data();
        for (std::size_t i = 0; i < p; ++i) {
            for (std::size_t q = 0; q < width; ++q) {
                for (std::size_t j = 0; j < c; ++j) {
                    o[i * width * c + q * c + j] = tm.at(i + q, j);
                }
            }
        }
        Node n{OpKind::UnfoldWindows, {m}, std::move(out)};
        n.aux_n = width;
        return push(std::move(n));
    }

    NodeId reshape(NodeId a, Shape shape) {
        const auto& ta = value(a);
        if (shape_numel(shape) != ta.numel()) {
            throw DimensionError("reshape " + shape_to_string(ta.shape()) + " to " +
                                 shape_to_string(shape) + " changes element count");
        }
        TensorT<Real> out(std::move(shape),
                          std::vector<Real>(ta.data().begin(), ta.data().end()));
        return push({OpKind::Reshape, {a}, std::move(out)});
    }

    /// Column-wise max over the time axis of a [T x d] matrix. The gradient
    /// flows to the first argmax row of each column.
    NodeId max_pool_time(NodeId m) {
        const auto& tm = value(m);
        require_rank(tm, 2, "max_pool_time");
        const std::size_t t = tm.dim(0), d = tm.dim(1);
        TensorT<Real> out(Shape{d});
        auto o = out.mutable_data();
        for (std::size_t j = 0; j < d; ++j) {
            Real best = tm.at(0, j);
            for (std::size_t i = 1; i < t; ++i) best = std::max(best, tm.at(i, j));
            o[j] = best;
        }
        return push({OpKind::MaxPoolTime, {m}, std::move(out)});
    }

    /// Gathers rows of an embedding table; out[t] = table[ids[t]]. The
    /// gradient accumulates into the touched rows only.
    NodeId embed_rows(NodeId table, std::vector<std::size_t> ids) {
        const auto& tt = value(table);
        require_rank(tt, 2, "embed_rows table");
        if (ids.empty()) {
            throw EmptySequenceError("embed_rows with an empty id list");
        }
        const std::size_t v = tt.dim(0), d = tt.dim(1);
        TensorT<Real> out(Shape{ids.size(), d});
        auto o = out.mutable_data();
        for (std::size_t t = 0; t < ids.size(); ++t) {
            if (ids[t] >= v) {
                throw IndexError("token id " + std::to_string(ids[t]) +
                                 " out of range for table " + shape_to_string(tt.shape()));
            }
            for (std::size_t j = 0; j < d; ++j) o[t * d + j] = tt.at(ids[t], j);
        }
        Node n{OpKind::EmbedRows, {table}, std::move(out)};
        n.aux_ids = std::move(ids);
        return push(std::move(n));
    }

    NodeId softmax(NodeId logits) {
        const auto& tl = value(logits);
        require_rank(tl, 1, "softmax");
        TensorT<Real> out(tl.shape());
        softmax_into(tl.data(), out.mutable_data());
        return push({OpKind::Softmax, {logits}, std::move(out)});
    }

    /// loss = -log softmax(logits)[target], in the log-sum-exp stable form.
    NodeId softmax_nll(NodeId logits, std::size_t target) {
        const auto& tl = value(logits);
        require_rank(tl, 1, "softmax_nll");
        const std::size_t k = tl.dim(0);
        if (target >= k) {
            throw IndexError("target class " + std::to_string(target) +
                             " out of range for " + std::to_string(k) + " logits");
        }
        auto in = tl.data();
        const Real m = *std::max_element(in.begin(), in.end());
        Real sum = 0;
        for (Real x : in) sum += std::exp(x - m);
        const Real loss = std::log(sum) + m - in[target];
        Node n{OpKind::SoftmaxNll, {logits}, TensorT<Real>::scalar(loss)};
        n.aux_n = target;
        return push(std::move(n));
    }

    /// Runs the reverse sweep from a scalar loss node. Populates gradients for
    /// every node reachable from the loss plus zero gradients for every
    /// requires_grad leaf.
    void backward(NodeId loss) {
        const auto& tl = value(loss);
        if (!tl.is_scalar()) {
            throw ContractError("backward requires a scalar loss, got shape " +
                                shape_to_string(tl.shape()));
        }
        gradients_.assign(nodes_.size(), std::nullopt);
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].op == OpKind::Leaf && nodes_[i].needs_grad) {
                gradients_[i] = TensorT<Real>::zeros(nodes_[i].value.shape());
            }
        }
        if (!nodes_[loss.index()].needs_grad) return;  // constant graph
        grad_at(loss.index()).mutable_data()[0] += Real(1);
        for (std::size_t i = loss.index() + 1; i-- > 0;) {
            const Node& n = nodes_[i];
            if (!n.needs_grad || !gradients_[i].has_value() || n.op == OpKind::Leaf) {
                continue;
            }
            backprop_node(i);
        }
    }

    bool has_gradient(NodeId id) const {
        return id.index() < gradients_.size() && gradients_[id.index()].has_value();
    }

    const TensorT<Real>& gradient(NodeId id) const {
        if (!has_gradient(id)) {
            throw ContractError("no gradient recorded for node " +
                                std::to_string(id.index()));
        }
        return *gradients_[id.index()];
    }

    static Real stable_sigmoid(Real x) {
        if (x >= Real(0)) {
            return Real(1) / (Real(1) + std::exp(-x));
        }
        const Real e = std::exp(x);
        return e / (Real(1) + e);
    }

private:
    void require_rank(const TensorT<Real>& t, std::size_t r, const char* what) const {
        if (t.rank() != r) {
            throw DimensionError(std::string(what) + " expects rank " +
                                 std::to_string(r) + ", got " +
                                 shape_to_string(t.shape()));
        }
    }

    NodeId push(Node n, bool check_finite = true) {
        n.needs_grad = n.needs_grad || std::any_of(n.inputs.begin(), n.inputs.end(),
                                                   [this](NodeId in) {
                                                       return nodes_[in.index()].needs_grad;
                                                   });
#if DACT_FINITE_CHECKS
        if (check_finite && !n.value.all_finite()) {
            throw NumericError(std::string("non-finite value in output of ") +
                               op_name(n.op));
        }
#else
        (void)check_finite;
#endif
        nodes_.push_back(std::move(n));
        return NodeId(nodes_.size() - 1);
    }

    NodeId binary(OpKind op, NodeId a, NodeId b) {
        const auto& ta = value(a);
        const auto& tb = value(b);
        if (!ta.same_shape(tb)) {
            throw DimensionError(std::string(op_name(op)) + " shape mismatch: " +
                                 shape_to_string(ta.shape()) + " vs " +
                                 shape_to_string(tb.shape()));
        }
        TensorT<Real> out(ta.shape());
        auto o = out.mutable_data();
        auto da = ta.data();
        auto db = tb.data();
        for (std::size_t i = 0; i < o.size(); ++i) {
            switch (op) {
                case OpKind::Add: o[i] = da[i] + db[i]; break;
                case OpKind::Sub: o[i] = da[i] - db[i]; break;
                default: o[i] = da[i] * db[i]; break;
            }
        }
        return push({op, {a, b}, std::move(out)});
    }

    template <typename F>
    NodeId unary(OpKind op, NodeId a, F f) {
        const auto& ta = value(a);
        TensorT<Real> out(ta.shape());
        auto o = out.mutable_data();
        auto in = ta.data();
        for (std::size_t i = 0; i < o.size(); ++i) o[i] = f(in[i]);
        return push({op, {a}, std::move(out)});
    }

    static void softmax_into(std::span<const Real> logits, std::span<Real> out) {
        const Real m = *std::max_element(logits.begin(), logits.end());
        Real sum = 0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            out[i] = std::exp(logits[i] - m);
            sum += out[i];
        }
        for (Real& v : out) v /= sum;
    }

    TensorT<Real>& grad_at(std::size_t i) {
        if (!gradients_[i].has_value()) {
            gradients_[i] = TensorT<Real>::zeros(nodes_[i].value.shape());
        }
        return *gradients_[i];
    }

    bool input_tracked(const Node& n, std::size_t k) const {
        return nodes_[n.inputs[k].index()].needs_grad;
    }

    void backprop_node(std::size_t i) {
        const Node& n = nodes_[i];
        const TensorT<Real>& gy = *gradients_[i];
        auto g = gy.data();
        switch (n.op) {
            case OpKind::Matmul: {
                const auto& ta = nodes_[n.inputs[0].index()].value;
                const auto& tb = nodes_[n.inputs[1].index()].value;
                const std::size_t m = ta.dim(0), k = ta.dim(1), c = tb.dim(1);
                if (input_tracked(n, 0)) {
                    auto ga = grad_at(n.inputs[0].index()).mutable_data();
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t p = 0; p < k; ++p) {
                            Real s = 0;
                            for (std::size_t j = 0; j < c; ++j)
                                s += g[r * c + j] * tb.at(p, j);
                            ga[r * k + p] += s;
                        }
                }
                if (input_tracked(n, 1)) {
                    auto gb = grad_at(n.inputs[1].index()).mutable_data();
                    for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t j = 0; j < c; ++j) {
                            Real s = 0;
                            for (std::size_t r = 0; r < m; ++r)
                                s += ta.at(r, p) * g[r * c + j];
                            gb[p * c + j] += s;
                        }
                }
                break;
            }
            case OpKind::MatmulNT: {
                const auto& ta = nodes_[n.inputs[0].index()].value;
                const auto& tb = nodes_[n.inputs[1].index()].value;
                const std::size_t m = ta.dim(0), k = ta.dim(1), c = tb.dim(0);
                if (input_tracked(n, 0)) {
                    auto ga = grad_at(n.inputs[0].index()).mutable_data();
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t p = 0; p < k; ++p) {
                            Real s = 0;
                            for (std::size_t j = 0; j < c; ++j)
                                s += g[r * c + j] * tb.at(j, p);
                            ga[r * k + p] += s;
                        }
                }
                if (input_tracked(n, 1)) {
                    auto gb = grad_at(n.inputs[1].index()).mutable_data();
                    for (std::size_t j = 0; j < c; ++j)
                        for (std::size_t p = 0; p < k; ++p) {
                            Real s = 0;
                            for (std::size_t r = 0; r < m; ++r)
                                s += g[r * c + j] * ta.at(r, p);
                            gb[j * k + p] += s;
                        }
                }
                break;
            }
            case OpKind::Matvec: {
                const auto& tm = nodes_[n.inputs[0].index()].value;
                const auto& tv = nodes_[n.inputs[1].index()].value;
                const std::size_t r = tm.dim(0), c = tm.dim(1);
                if (input_tracked(n, 0)) {
                    auto gm = grad_at(n.inputs[0].index()).mutable_data();
                    for (std::size_t i2 = 0; i2 < r; ++i2)
                        for (std::size_t j = 0; j < c; ++j)
                            gm[i2 * c + j] += g[i2] * tv[j];
                }
                if (input_tracked(n, 1)) {
                    auto gv = grad_at(n.inputs[1].index()).mutable_data();
                    for (std::size_t j = 0; j < c; ++j) {
                        Real s = 0;
                        for (std::size_t i2 = 0; i2 < r; ++i2) s += tm.at(i2, j) * g[i2];
                        gv[j] += s;
                    }
                }
                break;
            }
            case OpKind::Add:
            case OpKind::Sub: {
                const Real sign = (n.op == OpKind::Sub) ? Real(-1) : Real(1);
                if (input_tracked(n, 0)) {
                    auto ga = grad_at(n.inputs[0].index()).mutable_data();
                    for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
                }
                if (input_tracked(n, 1)) {
                    auto gb = grad_at(n.inputs[1].index()).mutable_data();
                    for (std::size_t j = 0; j < g.size(); ++j) gb[j] += sign * g[j];
                }
                break;
            }
            case OpKind::Mul: {
                const auto& ta = nodes_[n.inputs[0].index()].value;
                const auto& tb = nodes_[n.inputs[1].index()].value;
                if (input_tracked(n, 0)) {
                    auto ga = grad_at(n.inputs[0].index()).mutable_data();
                    auto db = tb.data();
                    for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * db[j];
                }
                if (input_tracked(n, 1)) {
                    auto gb = grad_at(n.inputs[1].index()).mutable_data();
                    auto da = ta.data();
                    for (std::size_t j = 0; j < g.size(); ++j) gb[j] += g[j] * da[j];
                }
                break;
            }
            case OpKind::AddRowwise: {
                const auto& tm = nodes_[n.inputs[0].index()].value;
                const std::size_t r = tm.dim(0), c = tm.dim(1);
                if (input_tracked(n, 0)) {
                    auto gm = grad_at(n.inputs[0].index()).mutable_data();
                    for (std::size_t j = 0; j < g.size(); ++j) gm[j] += g[j];
                }
                if (input_tracked(n, 1)) {
                    auto gb = grad_at(n.inputs[1].index()).mutable_data();
                    for (std::size_t i2 = 0; i2 < r; ++i2)
                        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i2 * c + j];
                }
                break;
            }
            case OpKind::Scale: {
                if (input_tracked(n, 0)) {
                    auto ga = grad_at(n.inputs[0].index()).mutable_data();
                    for (std::size_t j = 0; j < g.size(); ++j)
                        ga[j] += g[j] * n.aux_real;
                }
                break;
            }
            case OpKind::Sigmoid: {
                auto s = n.value.data();
                auto ga = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += g[j] * s[j] * (Real(1) - s[j]);
                break;
            }
            case OpKind::Tanh: {
                auto t = n.value.data();
                auto ga = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += g[j] * (Real(1) - t[j] * t[j]);
                break;
            }
            case OpKind::Relu: {
                auto x = nodes_[n.inputs[0].index()].value.data();
                auto ga = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (x[j] > Real(0)) ga[j] += g[j];
                break;
            }
            case OpKind::Row: {
                auto gm = grad_at(n.inputs[0].index()).mutable_data();
                const std::size_t c = n.value.numel();
                for (std::size_t j = 0; j < c; ++j) gm[n.aux_n * c + j] += g[j];
                break;
            }
            case OpKind::StackRows: {
                const std::size_t d = n.value.dim(1);
                for (std::size_t r = 0; r < n.inputs.size(); ++r) {
                    if (!input_tracked(n, r)) continue;
                    auto gr = grad_at(n.inputs[r].index()).mutable_data();
                    for (std::size_t j = 0; j < d; ++j) gr[j] += g[r * d + j];
                }
                break;
            }
            case OpKind::Concat: {
                std::size_t off = 0;
                for (std::size_t p = 0; p < n.inputs.size(); ++p) {
                    const std::size_t len = nodes_[n.inputs[p].index()].value.numel();
                    if (input_tracked(n, p)) {
                        auto gp = grad_at(n.inputs[p].index()).mutable_data();
                        for (std::size_t j = 0; j < len; ++j) gp[j] += g[off + j];
                    }
                    off += len;
                }
                break;
            }
            case OpKind::PadRows: {
                const auto& tm = nodes_[n.inputs[0].index()].value;
                auto gm = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < tm.numel(); ++j) gm[j] += g[j];
                break;
            }
            case OpKind::FirstRows: {
                auto gm = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < g.size(); ++j) gm[j] += g[j];
                break;
            }
            case OpKind::UnfoldWindows: {
                const auto& tm = nodes_[n.inputs[0].index()].value;
                const std::size_t c = tm.dim(1), w = n.aux_n;
                const std::size_t p = n.value.dim(0);
                auto gm = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t i2 = 0; i2 < p; ++i2)
                    for (std::size_t q = 0; q < w; ++q)
                        for (std::size_t j = 0; j < c; ++j)
                            gm[(i2 + q) * c + j] += g[i2 * w * c + q * c + j];
                break;
            }
            case OpKind::Reshape: {
                auto ga = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
                break;
            }
            case OpKind::MaxPoolTime: {
                const auto& tm = nodes_[n.inputs[0].index()].value;
                const std::size_t t = tm.dim(0), d = tm.dim(1);
                auto gm = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t j = 0; j < d; ++j) {
                    std::size_t best = 0;
                    for (std::size_t i2 = 1; i2 < t; ++i2)
                        if (tm.at(i2, j) > tm.at(best, j)) best = i2;
                    gm[best * d + j] += g[j];
                }
                break;
            }
            case OpKind::EmbedRows: {
                const std::size_t d = n.value.dim(1);
                auto gt = grad_at(n.inputs[0].index()).mutable_data();
                for (std::size_t t = 0; t < n.aux_ids.size(); ++t)
                    for (std::size_t j = 0; j < d; ++j)
                        gt[n.aux_ids[t] * d + j] += g[t * d + j];
                break;
            }
            case OpKind::Softmax: {
                auto s = n.value.data();
                auto ga = grad_at(n.inputs[0].index()).mutable_data();
                Real dot = 0;
                for (std::size_t j = 0; j < g.size(); ++j) dot += g[j] * s[j];
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += s[j] * (g[j] - dot);
                break;
            }
            case OpKind::SoftmaxNll: {
                const auto& tl = nodes_[n.inputs[0].index()].value;
                std::vector<Real> p(tl.numel());
                softmax_into(tl.data(), p);
                auto ga = grad_at(n.inputs[0].index()).mutable_data();
                const Real gs = g[0];
                for (std::size_t j = 0; j < p.size(); ++j) {
                    Real v = p[j];
                    if (j == n.aux_n) v -= Real(1);
                    ga[j] += gs * v;
                }
                break;
            }
            case OpKind::Leaf:
                break;
        }
    }

    std::vector<Node> nodes_;
    std::vector<std::optional<TensorT<Real>>> gradients_;
};

using Graph = GraphT<double>;

}  // namespace dact
