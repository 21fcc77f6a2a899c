// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "dact/error.hpp"
#include "dact/model.hpp"
#include "dact/tensor.hpp"

namespace dact {

struct AdamConfig {
    double alpha = 1e-3;   // learning rate
    double beta1 = 0.9;    // first-moment decay
    double beta2 = 0.999;  // second-moment decay
    double eps = 1e-8;
};

/// Adam with bias correction:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2;  t <- t+1
///   theta <- theta - alpha * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
/// Moment buffers mirror the parameter store order.
template <typename Real>
class AdamT {
public:
    explicit AdamT(AdamConfig config = {}) : config_(config) {}

    const AdamConfig& config() const { return config_; }
    std::uint64_t steps() const { return t_; }

    /// One update over every parameter; `grads` must be in store order.
    void step(ParamStoreT<Real>& params, const std::vector<TensorT<Real>>& grads) {
        if (grads.size() != params.size()) {
            throw ContractError("adam got " + std::to_string(grads.size()) +
                                " gradients for " + std::to_string(params.size()) +
                                " parameters");
        }
        if (m_.empty()) {
            for (const auto& [name, t] : params) {
                m_.push_back(TensorT<Real>::zeros(t.shape()));
                v_.push_back(TensorT<Real>::zeros(t.shape()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
        std::size_t i = 0;
        for (auto& [name, theta] : params) {
            const TensorT<Real>& g = grads[i];
            if (!g.same_shape(theta)) {
                throw DimensionError("gradient for '" + name + "' has shape " +
                                     shape_to_string(g.shape()) + ", expected " +
                                     shape_to_string(theta.shape()));
            }
            auto gd = g.data();
            auto md = m_[i].mutable_data();
            auto vd = v_[i].mutable_data();
            auto td = theta.mutable_data();
            for (std::size_t e = 0; e < gd.size(); ++e) {
                const double ge = static_cast<double>(gd[e]);
                const double me =
                    config_.beta1 * static_cast<double>(md[e]) +
                    (1.0 - config_.beta1) * ge;
                const double ve =
                    config_.beta2 * static_cast<double>(vd[e]) +
                    (1.0 - config_.beta2) * ge * ge;
                md[e] = static_cast<Real>(me);
                vd[e] = static_cast<Real>(ve);
                td[e] = static_cast<Real>(
                    static_cast<double>(td[e]) -
                    config_.alpha * (me / c1) / (std::sqrt(ve / c2) + config_.eps));
            }
            ++i;
        }
    }

private:
    AdamConfig config_;
    std::vector<TensorT<Real>> m_, v_;
    std::uint64_t t_ = 0;
};

using Adam = AdamT<double>;

/// Scales all gradients in place so their global norm does not exceed
/// `max_norm` (no-op when max_norm <= 0 or the norm is already within it).
/// Returns the pre-clip norm.
template <typename Real>
double clip_global_norm(std::vector<TensorT<Real>>& grads, double max_norm) {
    double sq = 0.0;
    for (const TensorT<Real>& g : grads) {
        for (Real v : g.data()) {
            sq += static_cast<double>(v) * static_cast<double>(v);
        }
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (TensorT<Real>& g : grads) {
            for (Real& v : g.mutable_data()) {
                v = static_cast<Real>(static_cast<double>(v) * s);
            }
        }
    }
    return norm;
}

}  // namespace dact
