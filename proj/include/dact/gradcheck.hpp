// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "dact/graph.hpp"
#include "dact/tensor.hpp"

namespace dact {

/// One checked function: `inputs` share storage with whatever `eval` reads, so
/// the checker can perturb entries in place and re-run the forward pass.
struct GradCheckCase {
    std::string name;
    std::vector<Tensor> inputs;
    std::function<double()> eval;                    // scalar loss at current inputs
    std::function<std::vector<Tensor>()> analytic;   // gradient per input tensor
};

struct GradCheckResult {
    std::string name;
    std::size_t entries = 0;     // scalar entries compared
    double max_rel_err = 0.0;
    bool passed = false;
    std::string worst;           // location of the worst entry
};

/// Compares analytic gradients against central differences
/// (f(x+h) - f(x-h)) / 2h, entry by entry. The error is relative to the
/// larger gradient magnitude, floored so that finite-difference noise on
/// near-zero gradients does not dominate. `fault`, when nonzero, is added to
/// the first analytic entry; it exists so tests can watch the check fail.
inline GradCheckResult run_grad_check(const GradCheckCase& c, double h = 1e-5,
                                      double tol = 1e-4, double fault = 0.0) {
    constexpr double kDenomFloor = 1e-2;
    GradCheckResult res;
    res.name = c.name;
    std::vector<Tensor> grads = c.analytic();
    if (grads.size() != c.inputs.size()) {
        throw ContractError("gradient check '" + c.name + "' returned " +
                            std::to_string(grads.size()) + " gradients for " +
                            std::to_string(c.inputs.size()) + " inputs");
    }
    if (fault != 0.0 && !grads.empty()) {
        grads[0].mutable_data()[0] += fault;
    }
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        Tensor x = c.inputs[i];  // shares storage with the evaluated function
        if (!grads[i].same_shape(x)) {
            throw ContractError("gradient check '" + c.name + "' input " +
                                std::to_string(i) + " has shape " +
                                shape_to_string(x.shape()) + " but gradient " +
                                shape_to_string(grads[i].shape()));
        }
        auto xd = x.mutable_data();
        for (std::size_t e = 0; e < xd.size(); ++e) {
            const double orig = xd[e];
            xd[e] = orig + h;
            const double lp = c.eval();
            xd[e] = orig - h;
            const double lm = c.eval();
            xd[e] = orig;
            const double num = (lp - lm) / (2.0 * h);
            const double ana = grads[i][e];
            const double denom =
                std::max({kDenomFloor, std::abs(ana), std::abs(num)});
            const double rel = std::abs(ana - num) / denom;
            ++res.entries;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = "input " + std::to_string(i) + " entry " +
                            std::to_string(e) + " analytic " + std::to_string(ana) +
                            " numeric " + std::to_string(num);
            }
        }
    }
    res.passed = res.max_rel_err < tol;
    return res;
}

/// Wraps a graph-building function into a GradCheckCase. The builder receives
/// fresh leaves (one per input, gradients tracked) and must return a scalar
/// loss node.
inline GradCheckCase make_graph_check(
    std::string name, std::vector<Tensor> inputs,
    std::function<NodeId(Graph&, const std::vector<NodeId>&)> build) {
    GradCheckCase c;
    c.name = std::move(name);
    for (Tensor& t : inputs) t.set_requires_grad(true);
    c.inputs = inputs;
    c.eval = [inputs, build]() {
        Graph g;
        std::vector<NodeId> leaves;
        leaves.reserve(inputs.size());
        for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
        return g.value(build(g, leaves)).item();
    };
    c.analytic = [inputs, build]() {
        Graph g;
        std::vector<NodeId> leaves;
        leaves.reserve(inputs.size());
        for (const Tensor& t : inputs) leaves.push_back(g.leaf(t));
        g.backward(build(g, leaves));
        std::vector<Tensor> grads;
        grads.reserve(leaves.size());
        for (NodeId id : leaves) grads.push_back(g.gradient(id).clone());
        return grads;
    };
    return c;
}

namespace detail {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (double& v : t.mutable_data()) v = dist(rng);
    return t;
}

/// Values bounded away from zero, so ReLU checks never straddle the kink.
inline Tensor random_signed_tensor(Shape shape, std::mt19937_64& rng) {
    Tensor t = random_tensor(std::move(shape), rng, 0.1, 1.5);
    std::bernoulli_distribution flip(0.5);
    for (double& v : t.mutable_data()) {
        if (flip(rng)) v = -v;
    }
    return t;
}

/// Columns with well-separated values, so max-pool checks never change their
/// argmax under a 1e-5 perturbation.
inline Tensor random_separated_columns(std::size_t rows, std::size_t cols,
                                       std::mt19937_64& rng) {
    Tensor t(Shape{rows, cols});
    auto d = t.mutable_data();
    std::uniform_real_distribution<double> jitter(-0.2, 0.2);
    std::vector<std::size_t> order(rows);
    for (std::size_t j = 0; j < cols; ++j) {
        for (std::size_t i = 0; i < rows; ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < rows; ++i) {
            d[order[i] * cols + j] = static_cast<double>(i) + jitter(rng);
        }
    }
    return t;
}

/// Reduces any node to a scalar as a weighted sum with fixed random weights.
/// Distinct weights make the reduction sensitive to transposition mistakes.
inline NodeId weighted_sum(Graph& g, NodeId x, std::mt19937_64& rng) {
    const std::size_t n = g.value(x).numel();
    NodeId flat = g.reshape(x, Shape{1, n});
    NodeId w = g.constant(random_tensor(Shape{n}, rng, 0.5, 1.5));
    return g.matvec(flat, w);
}

}  // namespace detail

/// One finite-difference check per differentiable tape operation, at toy
/// sizes, using `seed` to draw the inputs.
inline std::vector<GradCheckResult> run_builtin_op_checks(
    std::uint64_t seed, const std::string& fault_op = "", double h = 1e-5,
    double tol = 1e-4) {
    using detail::random_separated_columns;
    using detail::random_signed_tensor;
    using detail::random_tensor;
    std::vector<GradCheckResult> results;
    std::mt19937_64 rng(seed);

    auto run = [&](GradCheckCase c) {
        const double fault = (c.name == fault_op) ? 0.5 : 0.0;
        results.push_back(run_grad_check(c, h, tol, fault));
    };
    // Weight draws inside the builders must be identical across re-evaluations,
    // so each builder gets its own frozen weight seed.
    auto wseed = [&rng]() { return rng(); };

    {
        auto ws = wseed();
        run(make_graph_check("matmul",
                             {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.matmul(in[0], in[1]), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("matmul_nt",
                             {random_tensor({3, 4}, rng), random_tensor({2, 4}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.matmul_nt(in[0], in[1]), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("matvec",
                             {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.matvec(in[0], in[1]), wr);
                             }));
    }
    for (const char* name : {"add", "sub", "mul"}) {
        auto ws = wseed();
        std::string op = name;
        run(make_graph_check(op,
                             {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)},
                             [ws, op](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 NodeId y = op == "add"   ? g.add(in[0], in[1])
                                            : op == "sub" ? g.sub(in[0], in[1])
                                                          : g.mul(in[0], in[1]);
                                 return detail::weighted_sum(g, y, wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("add_rowwise",
                             {random_tensor({3, 4}, rng), random_tensor({4}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.add_rowwise(in[0], in[1]), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("scale", {random_tensor({2, 3}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.scale(in[0], 1.7), wr);
                             }));
    }
    for (const char* name : {"sigmoid", "tanh"}) {
        auto ws = wseed();
        std::string op = name;
        run(make_graph_check(op, {random_tensor({2, 3}, rng, -2.0, 2.0)},
                             [ws, op](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 NodeId y = op == "sigmoid" ? g.sigmoid(in[0])
                                                            : g.tanh(in[0]);
                                 return detail::weighted_sum(g, y, wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("relu", {random_signed_tensor({2, 3}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(g, g.relu(in[0]), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("row", {random_tensor({3, 4}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(g, g.row(in[0], 1), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("stack_rows",
                             {random_tensor({4}, rng), random_tensor({4}, rng),
                              random_tensor({4}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.stack_rows(in), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("concat",
                             {random_tensor({3}, rng), random_tensor({2}, rng),
                              random_tensor({4}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(g, g.concat(in), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("pad_rows", {random_tensor({2, 3}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.pad_rows(in[0], 4), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("first_rows", {random_tensor({4, 3}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.first_rows(in[0], 2), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("unfold_windows", {random_tensor({5, 3}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.unfold_windows(in[0], 2), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("reshape", {random_tensor({2, 6}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.reshape(in[0], Shape{3, 4}), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("max_pool_time",
                             {random_separated_columns(4, 3, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.max_pool_time(in[0]), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("embed_rows", {random_tensor({5, 3}, rng)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 // a repeated id exercises gradient accumulation
                                 return detail::weighted_sum(
                                     g, g.embed_rows(in[0], {1, 3, 1}), wr);
                             }));
    }
    {
        auto ws = wseed();
        run(make_graph_check("softmax", {random_tensor({4}, rng, -2.0, 2.0)},
                             [ws](Graph& g, const std::vector<NodeId>& in) {
                                 std::mt19937_64 wr(ws);
                                 return detail::weighted_sum(
                                     g, g.softmax(in[0]), wr);
                             }));
    }
    {
        run(make_graph_check("softmax_nll", {random_tensor({5}, rng, -2.0, 2.0)},
                             [](Graph& g, const std::vector<NodeId>& in) {
                                 return g.softmax_nll(in[0], 2);
                             }));
    }
    return results;
}

}  // namespace dact
