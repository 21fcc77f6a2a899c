// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>

#include "dact/tensor.hpp"

using dact::Shape;
using dact::Tensor;

TEST_CASE("tensor factories produce the advertised shapes and values") {
    const Tensor s = Tensor::scalar(2.5);
    CHECK(s.shape() == Shape{1});
    CHECK(s.is_scalar());
    CHECK(s.item() == 2.5);

    const Tensor z = Tensor::zeros({2, 3});
    CHECK(z.shape() == Shape{2, 3});
    CHECK(z.numel() == 6);
    for (double v : z.data()) CHECK(v == 0.0);

    const Tensor o = Tensor::ones({4});
    for (double v : o.data()) CHECK(v == 1.0);

    const Tensor f = Tensor::full({2, 2, 2}, -1.5);
    CHECK(f.rank() == 3);
    for (double v : f.data()) CHECK(v == -1.5);

    const Tensor vec = Tensor::vector({1.0, 2.0, 3.0});
    CHECK(vec.shape() == Shape{3});
    CHECK(vec[2] == 3.0);

    const Tensor m = Tensor::matrix({{1.0, 2.0}, {3.0, 4.0}});
    CHECK(m.shape() == Shape{2, 2});
    CHECK(m.at(1, 0) == 3.0);
}

TEST_CASE("tensor rejects invalid shapes") {
    CHECK_THROWS_AS(Tensor(Shape{}), dact::DimensionError);
    CHECK_THROWS_AS(Tensor(Shape{2, 0}), dact::DimensionError);
    CHECK_THROWS_AS(Tensor(Shape{1, 2, 3, 4}), dact::DimensionError);
    CHECK_THROWS_AS(Tensor(Shape{2}, {1.0, 2.0, 3.0}), dact::DimensionError);
    CHECK_THROWS_AS(Tensor::matrix({{1.0, 2.0}, {3.0}}), dact::DimensionError);
}

TEST_CASE("item() demands a scalar") {
    CHECK_THROWS_AS(Tensor::zeros({2}).item(), dact::ContractError);
    CHECK(Tensor::scalar(7.0).item() == 7.0);
}

TEST_CASE("copies share storage, clones do not") {
    Tensor a = Tensor::vector({1.0, 2.0});
    Tensor b = a;           // shares the buffer
    Tensor c = a.clone();   // independent buffer
    a[0] = 9.0;
    CHECK(b[0] == 9.0);
    CHECK(c[0] == 1.0);
}

TEST_CASE("requires_grad is per-object, not per-buffer") {
    Tensor a = Tensor::vector({1.0});
    Tensor b = a;
    a.set_requires_grad(true);
    CHECK(a.requires_grad());
    CHECK_FALSE(b.requires_grad());
    CHECK(a.clone().requires_grad());
}

TEST_CASE("all_finite flags NaN and infinity") {
    Tensor t = Tensor::vector({1.0, 2.0});
    CHECK(t.all_finite());
    t[1] = std::numeric_limits<double>::quiet_NaN();
    CHECK_FALSE(t.all_finite());
    t[1] = std::numeric_limits<double>::infinity();
    CHECK_FALSE(t.all_finite());
}

TEST_CASE("float instantiation works alongside double") {
    dact::TensorT<float> t = dact::TensorT<float>::full({2, 2}, 0.5f);
    CHECK(t.numel() == 4);
    CHECK(t.at(1, 1) == 0.5f);
    CHECK(t.all_finite());
}

TEST_CASE("shape helpers format and count") {
    CHECK(dact::shape_to_string(Shape{2, 3, 4}) == "[2x3x4]");
    CHECK(dact::shape_numel(Shape{2, 3, 4}) == 24);
}
