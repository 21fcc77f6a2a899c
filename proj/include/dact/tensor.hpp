// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dact/error.hpp"

namespace dact {

using Shape = std::vector<std::size_t>;

inline std::string shape_to_string(std::span<const std::size_t> shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

inline std::size_t shape_numel(std::span<const std::size_t> shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

/// Dense rank-1/2/3 real array. Copies share the underlying buffer; graphs
/// treat tensors as immutable, so shared storage is safe there. Use clone()
/// (or mutable_data() on a uniquely owned tensor) when mutation is intended,
/// e.g. optimizer updates on parameter tensors between steps.
template <typename Real>
class TensorT {
public:
    TensorT() : TensorT(Shape{1}) {}

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<Real>>(checked_numel(shape_), Real(0))) {}

    TensorT(Shape shape, std::vector<Real> values)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<Real>>(std::move(values))) {
        if (checked_numel(shape_) != data_->size()) {
            throw DimensionError("tensor shape " + shape_to_string(shape_) +
                                 " does not match " + std::to_string(data_->size()) +
                                 " values");
        }
    }

    static TensorT scalar(Real v) { return TensorT(Shape{1}, {v}); }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape)); }

    static TensorT full(Shape shape, Real v) {
        TensorT t(std::move(shape));
        for (Real& x : t.mutable_data()) x = v;
        return t;
    }

    static TensorT ones(Shape shape) { return full(std::move(shape), Real(1)); }

    static TensorT vector(std::vector<Real> values) {
        const std::size_t n = values.size();
        return TensorT(Shape{n}, std::move(values));
    }

    static TensorT matrix(std::initializer_list<std::initializer_list<Real>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<Real> flat;
        flat.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) {
                throw DimensionError("ragged matrix initializer");
            }
            flat.insert(flat.end(), row.begin(), row.end());
        }
        return TensorT(Shape{r, c}, std::move(flat));
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_->size(); }
    bool is_scalar() const { return numel() == 1; }

    std::span<const Real> data() const { return *data_; }
    std::span<Real> mutable_data() { return *data_; }

    Real operator[](std::size_t i) const { return (*data_)[i]; }
    Real& operator[](std::size_t i) { return (*data_)[i]; }

    Real at(std::size_t i, std::size_t j) const {
        return (*data_)[i * shape_[1] + j];
    }
    Real& at(std::size_t i, std::size_t j) {
        return (*data_)[i * shape_[1] + j];
    }
    Real at(std::size_t i, std::size_t j, std::size_t k) const {
        return (*data_)[(i * shape_[1] + j) * shape_[2] + k];
    }

    Real item() const {
        if (!is_scalar()) {
            throw ContractError("item() on non-scalar tensor of shape " +
                                shape_to_string(shape_));
        }
        return (*data_)[0];
    }

    bool requires_grad() const { return requires_grad_; }
    TensorT& set_requires_grad(bool v) {
        requires_grad_ = v;
        return *this;
    }

    /// Deep copy with its own buffer.
    TensorT clone() const {
        TensorT t(shape_, std::vector<Real>(*data_));
        t.requires_grad_ = requires_grad_;
        return t;
    }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (Real v : *data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

private:
    static std::size_t checked_numel(const Shape& shape) {
        if (shape.empty() || shape.size() > 3) {
            throw DimensionError("tensor rank must be 1..3, got shape " +
                                 shape_to_string(shape));
        }
        for (std::size_t d : shape) {
            if (d == 0) {
                throw DimensionError("tensor dimensions must be positive, got " +
                                     shape_to_string(shape));
            }
        }
        return shape_numel(shape);
    }

    Shape shape_;
    std::shared_ptr<std::vector<Real>> data_;
    bool requires_grad_ = false;
};

using Tensor = TensorT<double>;

}  // namespace dact
