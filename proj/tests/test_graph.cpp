// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "dact/graph.hpp"

using dact::Graph;
using dact::NodeId;
using dact::Shape;
using dact::Tensor;

namespace {
constexpr double kSigma1 = 0.7310585786300049;
constexpr double kTanh1 = 0.7615941559557649;
constexpr double kLn43 = 3.7612001156935624;
constexpr double kHotNll = 2.0611536203143807e-9;  // softmax_nll([10,-10], 0)

Tensor random_tensor(Shape shape, std::mt19937_64& rng) {
    Tensor t{std::move(shape)};
    std::uniform_real_distribution<double> d(-1.5, 1.5);
    for (double& v : t.mutable_data()) v = d(rng);
    return t;
}
}  // namespace

TEST_CASE("matmul and matvec match hand-computed products") {
    Graph g;
    const NodeId a = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
    const NodeId b = g.constant(Tensor::matrix({{5.0, 6.0}, {7.0, 8.0}}));
    const Tensor ab = g.value(g.matmul(a, b));
    CHECK(ab.at(0, 0) == 19.0);
    CHECK(ab.at(0, 1) == 22.0);
    CHECK(ab.at(1, 0) == 43.0);
    CHECK(ab.at(1, 1) == 50.0);

    // a . b^T: second operand stored row-major as [n x k]
    const Tensor abt = g.value(g.matmul_nt(a, b));
    CHECK(abt.at(0, 0) == 17.0);   // 1*5 + 2*6
    CHECK(abt.at(0, 1) == 23.0);   // 1*7 + 2*8
    CHECK(abt.at(1, 0) == 39.0);
    CHECK(abt.at(1, 1) == 53.0);

    const NodeId v = g.constant(Tensor::vector({1.0, -1.0}));
    const Tensor mv = g.value(g.matvec(a, v));
    CHECK(mv[0] == -1.0);
    CHECK(mv[1] == -1.0);
}

TEST_CASE("shape mismatches are rejected") {
    Graph g;
    const NodeId m23 = g.constant(Tensor::zeros({2, 3}));
    const NodeId m22 = g.constant(Tensor::zeros({2, 2}));
    const NodeId v3 = g.constant(Tensor::zeros({3}));
    CHECK_THROWS_AS(g.matmul(m23, m22), dact::DimensionError);
    CHECK_THROWS_AS(g.add(m23, m22), dact::DimensionError);
    CHECK_THROWS_AS(g.matvec(m22, v3), dact::DimensionError);
    CHECK_THROWS_AS(g.row(m23, 2), dact::IndexError);
}

TEST_CASE("elementwise ops, bias add, and scale") {
    Graph g;
    const NodeId a = g.constant(Tensor::vector({1.0, -2.0}));
    const NodeId b = g.constant(Tensor::vector({3.0, 5.0}));
    CHECK(g.value(g.add(a, b))[1] == 3.0);
    CHECK(g.value(g.sub(a, b))[0] == -2.0);
    CHECK(g.value(g.mul(a, b))[1] == -10.0);
    CHECK(g.value(g.scale(a, -2.0))[1] == 4.0);

    const NodeId m = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
    const NodeId bias = g.constant(Tensor::vector({10.0, 20.0}));
    const Tensor r = g.value(g.add_rowwise(m, bias));
    CHECK(r.at(0, 0) == 11.0);
    CHECK(r.at(1, 1) == 24.0);
}

TEST_CASE("activations hit their frozen one-point values") {
    Graph g;
    const NodeId one = g.constant(Tensor::vector({1.0, -1.0, 0.0}));
    const Tensor s = g.value(g.sigmoid(one));
    CHECK_THAT(s[0], Catch::Matchers::WithinAbs(kSigma1, 1e-15));
    CHECK_THAT(s[1], Catch::Matchers::WithinAbs(1.0 - kSigma1, 1e-15));
    CHECK(s[2] == 0.5);

    const Tensor t = g.value(g.tanh(one));
    CHECK_THAT(t[0], Catch::Matchers::WithinAbs(kTanh1, 1e-15));
    CHECK_THAT(t[1], Catch::Matchers::WithinAbs(-kTanh1, 1e-15));
    CHECK(t[2] == 0.0);

    const Tensor r = g.value(g.relu(one));
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.0);
    CHECK(r[2] == 0.0);
}

TEST_CASE("sigmoid stays finite and ordered for extreme inputs") {
    Graph g;
    const NodeId x = g.constant(Tensor::vector({-745.0, 745.0}));
    const Tensor s = g.value(g.sigmoid(x));
    CHECK(s[0] >= 0.0);
    CHECK(s[0] < 1e-300);
    CHECK(s[1] == 1.0);
    CHECK(std::isfinite(s[0]));
}

TEST_CASE("row, stack_rows, concat, reshape move values faithfully") {
    Graph g;
    const NodeId m = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
    CHECK(g.value(g.row(m, 1))[0] == 3.0);

    const NodeId r0 = g.constant(Tensor::vector({1.0, 2.0}));
    const NodeId r1 = g.constant(Tensor::vector({3.0, 4.0}));
    const std::vector<NodeId> rows = {r0, r1};
    const Tensor stacked = g.value(g.stack_rows(rows));
    CHECK(stacked.shape() == Shape{2, 2});
    CHECK(stacked.at(1, 0) == 3.0);

    const std::vector<NodeId> parts = {r0, r1};
    const Tensor cat = g.value(g.concat(parts));
    CHECK(cat.shape() == Shape{4});
    CHECK(cat[2] == 3.0);

    const Tensor reshaped = g.value(g.reshape(m, Shape{4}));
    CHECK(reshaped[1] == 2.0);
    CHECK_THROWS_AS(g.reshape(m, Shape{3}), dact::DimensionError);
}

TEST_CASE("pad_rows and first_rows grow and slice the row dimension") {
    Graph g;
    const NodeId m = g.constant(Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}}));
    const Tensor padded = g.value(g.pad_rows(m, 4));
    CHECK(padded.shape() == Shape{4, 2});
    CHECK(padded.at(1, 1) == 4.0);
    CHECK(padded.at(3, 0) == 0.0);
    // already tall enough: unchanged
    CHECK(g.value(g.pad_rows(m, 2)).shape() == Shape{2, 2});

    const Tensor first = g.value(g.first_rows(m, 1));
    CHECK(first.shape() == Shape{1, 2});
    CHECK(first.at(0, 1) == 2.0);
    CHECK_THROWS_AS(g.first_rows(m, 3), dact::DimensionError);
    CHECK_THROWS_AS(g.first_rows(m, 0), dact::DimensionError);
}

TEST_CASE("unfold_windows lays out sliding windows row-major") {
    Graph g;
    const NodeId m = g.constant(
        Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}}));
    const Tensor w = g.value(g.unfold_windows(m, 2));
    REQUIRE(w.shape() == Shape{2, 4});
    CHECK(w.at(0, 0) == 1.0);
    CHECK(w.at(0, 3) == 4.0);
    CHECK(w.at(1, 0) == 3.0);
    CHECK(w.at(1, 3) == 6.0);
    CHECK_THROWS_AS(g.unfold_windows(m, 4), dact::DimensionError);
}

TEST_CASE("max_pool_time takes the per-column maximum") {
    Graph g;
    const NodeId m = g.constant(
        Tensor::matrix({{1.0, 9.0}, {4.0, 2.0}, {4.0, 8.0}}));
    const Tensor pooled = g.value(g.max_pool_time(m));
    REQUIRE(pooled.shape() == Shape{2});
    CHECK(pooled[0] == 4.0);
    CHECK(pooled[1] == 9.0);
}

TEST_CASE("max_pool_time routes gradient to the first maximum on ties") {
    Graph g;
    Tensor m = Tensor::matrix({{4.0, 1.0}, {4.0, 2.0}});
    const NodeId leaf = g.leaf(m.set_requires_grad(true));
    const NodeId pooled = g.max_pool_time(leaf);
    const NodeId loss = g.matvec(
        g.reshape(pooled, Shape{1, 2}),
        g.constant(Tensor::vector({1.0, 1.0})));
    g.backward(loss);
    const Tensor grad = g.gradient(leaf);
    CHECK(grad.at(0, 0) == 1.0);  // first of the tied rows
    CHECK(grad.at(1, 0) == 0.0);
    CHECK(grad.at(1, 1) == 1.0);
}

TEST_CASE("embed_rows gathers rows and accumulates duplicate gradients") {
    Graph g;
    Tensor table = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
    const NodeId t = g.leaf(table.set_requires_grad(true));
    const NodeId e = g.embed_rows(t, {2, 0, 2});
    const Tensor v = g.value(e);
    REQUIRE(v.shape() == Shape{3, 2});
    CHECK(v.at(0, 0) == 5.0);
    CHECK(v.at(1, 1) == 2.0);

    const NodeId loss = g.matvec(
        g.reshape(e, Shape{1, 6}),
        g.constant(Tensor::ones({6})));
    g.backward(loss);
    const Tensor grad = g.gradient(t);
    CHECK(grad.at(2, 0) == 2.0);  // row 2 used twice
    CHECK(grad.at(0, 0) == 1.0);
    CHECK(grad.at(1, 0) == 0.0);

    CHECK_THROWS_AS(g.embed_rows(t, {3}), dact::IndexError);
    CHECK_THROWS_AS(g.embed_rows(t, {}), dact::EmptySequenceError);
}

TEST_CASE("softmax normalizes, stays in (0,1), and survives huge logits") {
    std::mt19937_64 rng(11);
    for (int seed = 0; seed < 12; ++seed) {
        Graph g;
        const Tensor logits = random_tensor({7}, rng);
        const Tensor s = g.value(g.softmax(g.constant(logits)));
        double sum = 0.0;
        for (double v : s.data()) {
            CHECK(v > 0.0);
            CHECK(v < 1.0);
            sum += v;
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-12));
    }

    Graph g;
    const Tensor s =
        g.value(g.softmax(g.constant(Tensor::vector({1000.0, 0.0, -1000.0}))));
    CHECK(s[0] > 0.999);
    CHECK(std::isfinite(s[1]));
    CHECK(std::isfinite(s[2]));
}

TEST_CASE("softmax_nll matches frozen oracles") {
    Graph g;
    // uniform logits over 43 classes: loss is ln 43
    const NodeId uniform = g.constant(Tensor::zeros({43}));
    CHECK_THAT(g.value(g.softmax_nll(uniform, 7)).item(),
               Catch::Matchers::WithinAbs(kLn43, 1e-14));

    // Confident correct prediction: tiny but nonzero loss. The log-sum-exp
    // is anchored at the max logit (ulp ~1.8e-15 at 10.0), so a ~2e-9 loss
    // carries absolute rounding error of a few units at that scale.
    const NodeId hot = g.constant(Tensor::vector({10.0, -10.0}));
    const double loss = g.value(g.softmax_nll(hot, 0)).item();
    CHECK(loss > 0.0);
    CHECK_THAT(loss, Catch::Matchers::WithinAbs(kHotNll, 1e-14));

    CHECK_THROWS_AS(g.softmax_nll(hot, 2), dact::IndexError);
}

TEST_CASE("softmax_nll gradient is softmax minus one-hot") {
    Graph g;
    Tensor logits = Tensor::vector({0.2, -0.4, 0.9});
    const NodeId leaf = g.leaf(logits.set_requires_grad(true));
    const NodeId loss = g.softmax_nll(leaf, 1);
    const Tensor probs = g.value(g.softmax(g.constant(logits)));
    g.backward(loss);
    const Tensor grad = g.gradient(leaf);
    CHECK_THAT(grad[0], Catch::Matchers::WithinAbs(probs[0], 1e-12));
    CHECK_THAT(grad[1], Catch::Matchers::WithinAbs(probs[1] - 1.0, 1e-12));
    CHECK_THAT(grad[2], Catch::Matchers::WithinAbs(probs[2], 1e-12));
}

TEST_CASE("backward demands a scalar loss and a tracked graph") {
    Graph g;
    const NodeId v = g.constant(Tensor::vector({1.0, 2.0}));
    CHECK_THROWS_AS(g.backward(v), dact::ContractError);
}

TEST_CASE("gradients accumulate when a leaf feeds the loss twice") {
    Graph g;
    Tensor x = Tensor::scalar(3.0);
    const NodeId leaf = g.leaf(x.set_requires_grad(true));
    const NodeId loss = g.add(leaf, leaf);  // d(2x)/dx = 2
    g.backward(loss);
    CHECK(g.gradient(leaf)[0] == 2.0);
}

TEST_CASE("tracked leaves cut off from the loss get zero gradients") {
    Graph g;
    Tensor used = Tensor::scalar(1.0);
    Tensor unused = Tensor::vector({5.0, 6.0});
    const NodeId a = g.leaf(used.set_requires_grad(true));
    const NodeId b = g.leaf(unused.set_requires_grad(true));
    g.backward(g.scale(a, 4.0));
    CHECK(g.gradient(a)[0] == 4.0);
    REQUIRE(g.has_gradient(b));
    CHECK(g.gradient(b)[0] == 0.0);
    CHECK(g.gradient(b)[1] == 0.0);
}

TEST_CASE("untracked constants receive no gradient") {
    Graph g;
    Tensor x = Tensor::scalar(2.0);
    const NodeId leaf = g.leaf(x.set_requires_grad(true));
    const NodeId c = g.constant(Tensor::scalar(3.0));
    g.backward(g.mul(leaf, c));
    CHECK(g.gradient(leaf)[0] == 3.0);
    CHECK_FALSE(g.has_gradient(c));
    CHECK_THROWS_AS(g.gradient(c), dact::ContractError);
}

TEST_CASE("forward results are checked for finiteness") {
    Graph g;
    const NodeId huge = g.constant(Tensor::scalar(1e308));
    CHECK_THROWS_AS(g.add(huge, huge), dact::NumericError);
}

TEST_CASE("chained backward matches a hand-derived gradient") {
    // loss = sum(sigmoid(W x)) for 1x2 W: dloss/dW = s(1-s) * x^T
    Graph g;
    Tensor w = Tensor::matrix({{0.5, -1.0}});
    const NodeId wid = g.leaf(w.set_requires_grad(true));
    const NodeId x = g.constant(Tensor::vector({2.0, 1.0}));
    const NodeId act = g.sigmoid(g.matvec(wid, x));
    const NodeId loss = g.matvec(g.reshape(act, Shape{1, 1}),
                                 g.constant(Tensor::ones({1})));
    g.backward(loss);
    const double z = 0.5 * 2.0 + (-1.0) * 1.0;  // = 0
    const double s = 1.0 / (1.0 + std::exp(-z));
    const double ds = s * (1.0 - s);
    const Tensor grad = g.gradient(wid);
    CHECK_THAT(grad.at(0, 0), Catch::Matchers::WithinAbs(ds * 2.0, 1e-12));
    CHECK_THAT(grad.at(0, 1), Catch::Matchers::WithinAbs(ds * 1.0, 1e-12));
}

TEST_CASE("value and gradient lookups validate node ids") {
    Graph g;
    CHECK_THROWS_AS(g.value(dact::NodeId{}), dact::ContractError);
}
