// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dact/error.hpp"
#include "dact/graph.hpp"
#include "dact/tensor.hpp"

namespace dact {

// ---------------------------------------------------------------------------
// Parameter initialization
// ---------------------------------------------------------------------------

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

template <typename Real>
TensorT<Real> uniform_init(Shape shape, double lo, double hi,
                           std::mt19937_64& rng) {
    TensorT<Real> t(std::move(shape));
    std::uniform_real_distribution<double> dist(lo, hi);
    for (Real& v : t.mutable_data()) v = static_cast<Real>(dist(rng));
    return t;
}

/// Glorot-uniform [rows x cols] weight matrix mapping cols -> rows.
template <typename Real>
TensorT<Real> glorot_matrix(std::size_t rows, std::size_t cols,
                            std::mt19937_64& rng) {
    const double b = glorot_bound(cols, rows);
    return uniform_init<Real>(Shape{rows, cols}, -b, b, rng);
}

/// Glorot-uniform convolution filter bank [maps x width x depth]; each map
/// reads width*depth values.
template <typename Real>
TensorT<Real> glorot_filters(std::size_t maps, std::size_t width,
                             std::size_t depth, std::mt19937_64& rng) {
    const double b = glorot_bound(width * depth, maps);
    return uniform_init<Real>(Shape{maps, width, depth}, -b, b, rng);
}

// ---------------------------------------------------------------------------
// Affine / feed-forward layer
// ---------------------------------------------------------------------------

template <typename Real>
struct LinearParamsT {
    TensorT<Real> w;  // [out x in]
    TensorT<Real> b;  // [out]

    std::size_t in_size() const { return w.dim(1); }
    std::size_t out_size() const { return w.dim(0); }

    void validate() const {
        if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) {
            throw DimensionError("linear layer weights " +
                                 shape_to_string(w.shape()) + " and bias " +
                                 shape_to_string(b.shape()) + " do not match");
        }
    }
};

struct LinearNodes {
    NodeId w, b;
};

template <typename Real>
LinearNodes bind_linear(GraphT<Real>& g, const LinearParamsT<Real>& p) {
    return LinearNodes{g.leaf(p.w), g.leaf(p.b)};
}

template <typename Real>
NodeId linear_apply(GraphT<Real>& g, const LinearNodes& n, NodeId x) {
    return g.add(g.matvec(n.w, x), n.b);
}

/// Single hidden transform used for the non-textual feature branch:
/// relu(W x + b).
template <typename Real>
NodeId ffnn_apply(GraphT<Real>& g, const LinearNodes& n, NodeId x) {
    return g.relu(linear_apply(g, n, x));
}

// ---------------------------------------------------------------------------
// Gated recurrent unit
// ---------------------------------------------------------------------------

/// GRU weights. Input weights w_* are [H x I], recurrent weights u_* are
/// [H x H]. Gate biases are optional but all-or-none.
template <typename Real>
struct GruParamsT {
    TensorT<Real> w_z, u_z;
    TensorT<Real> w_r, u_r;
    TensorT<Real> w_h, u_h;
    std::optional<TensorT<Real>> b_z, b_r, b_h;

    std::size_t input_size() const { return w_z.dim(1); }
    std::size_t hidden_size() const { return w_z.dim(0); }
    bool has_bias() const { return b_z.has_value(); }

    void validate() const {
        const std::size_t h = hidden_size();
        const std::size_t i = input_size();
        auto check = [&](const TensorT<Real>& t, std::size_t rows,
                         std::size_t cols, const char* what) {
            if (t.rank() != 2 || t.dim(0) != rows || t.dim(1) != cols) {
                throw DimensionError(std::string("gru ") + what + " has shape " +
                                     shape_to_string(t.shape()) + ", expected [" +
                                     std::to_string(rows) + " x " +
                                     std::to_string(cols) + "]");
            }
        };
        check(w_z, h, i, "w_z");
        check(w_r, h, i, "w_r");
        check(w_h, h, i, "w_h");
        check(u_z, h, h, "u_z");
        check(u_r, h, h, "u_r");
        check(u_h, h, h, "u_h");
        const int biases = int(b_z.has_value()) + int(b_r.has_value()) +
                           int(b_h.has_value());
        if (biases != 0 && biases != 3) {
            throw ContractError("gru biases must be present for all gates or none");
        }
        if (has_bias()) {
            for (const auto* b : {&*b_z, &*b_r, &*b_h}) {
                if (b->rank() != 1 || b->dim(0) != h) {
                    throw DimensionError("gru bias has shape " +
                                         shape_to_string(b->shape()) +
                                         ", expected [" + std::to_string(h) + "]");
                }
            }
        }
    }
};

struct GruNodes {
    NodeId w_z, u_z, w_r, u_r, w_h, u_h;
    NodeId b_z, b_r, b_h;  // unset when the cell has no biases
    bool has_bias = false;
    std::size_t hidden = 0;
};

template <typename Real>
GruNodes bind_gru(GraphT<Real>& g, const GruParamsT<Real>& p) {
    GruNodes n;
    n.w_z = g.leaf(p.w_z);
    n.u_z = g.leaf(p.u_z);
    n.w_r = g.leaf(p.w_r);
    n.u_r = g.leaf(p.u_r);
    n.w_h = g.leaf(p.w_h);
    n.u_h = g.leaf(p.u_h);
    n.has_bias = p.has_bias();
    if (n.has_bias) {
        n.b_z = g.leaf(*p.b_z);
        n.b_r = g.leaf(*p.b_r);
        n.b_h = g.leaf(*p.b_h);
    }
    n.hidden = p.hidden_size();
    return n;
}

/// One GRU transition:
///   z = sigmoid(W_z x + U_z h)
///   r = sigmoid(W_r x + U_r h)
///   hc = tanh(W_h x + U_h (r * h))
///   h' = (1 - z) * h + z * hc
template <typename Real>
NodeId gru_step(GraphT<Real>& g, const GruNodes& n, NodeId x, NodeId h_prev) {
    auto gate = [&](NodeId w, NodeId u, NodeId b, NodeId hin) {
        NodeId pre = g.add(g.matvec(w, x), g.matvec(u, hin));
        if (n.has_bias) pre = g.add(pre, b);
        return pre;
    };
    NodeId z = g.sigmoid(gate(n.w_z, n.u_z, n.b_z, h_prev));
    NodeId r = g.sigmoid(gate(n.w_r, n.u_r, n.b_r, h_prev));
    NodeId hc = g.tanh(gate(n.w_h, n.u_h, n.b_h, g.mul(r, h_prev)));
    NodeId one = g.constant(TensorT<Real>::full(Shape{n.hidden}, Real(1)));
    return g.add(g.mul(g.sub(one, z), h_prev), g.mul(z, hc));
}

/// Runs the cell over a sequence of input vectors starting from a zero state;
/// returns every hidden state in order.
template <typename Real>
std::vector<NodeId> gru_states(GraphT<Real>& g, const GruNodes& n,
                               std::span<const NodeId> xs) {
    if (xs.empty()) {
        throw EmptySequenceError("gru over an empty input sequence");
    }
    std::vector<NodeId> hs;
    hs.reserve(xs.size());
    NodeId h = g.constant(TensorT<Real>::zeros(Shape{n.hidden}));
    for (NodeId x : xs) {
        h = gru_step(g, n, x, h);
        hs.push_back(h);
    }
    return hs;
}

/// Word-level recurrent sentence encoder: runs the cell over the rows of a
/// [T x D] embedding matrix and max-pools the hidden states over time.
template <typename Real>
NodeId grnn_encode(GraphT<Real>& g, const GruNodes& n, NodeId embedded) {
    const std::size_t t = g.value(embedded).dim(0);
    std::vector<NodeId> xs;
    xs.reserve(t);
    for (std::size_t i = 0; i < t; ++i) xs.push_back(g.row(embedded, i));
    std::vector<NodeId> hs = gru_states(g, n, xs);
    return g.max_pool_time(g.stack_rows(hs));
}

// ---------------------------------------------------------------------------
// Convolutional sentence encoder
// ---------------------------------------------------------------------------

/// One filter width: `filters` is [maps x width x depth], `bias` is [maps].
template <typename Real>
struct ConvBankT {
    TensorT<Real> filters;
    TensorT<Real> bias;

    std::size_t maps() const { return filters.dim(0); }
    std::size_t width() const { return filters.dim(1); }
    std::size_t depth() const { return filters.dim(2); }
};

template <typename Real>
struct CnnParamsT {
    std::vector<ConvBankT<Real>> banks;  // ordered by ascending width

    std::size_t out_size() const {
        std::size_t n = 0;
        for (const auto& b : banks) n += b.maps();
        return n;
    }

    void validate() const {
        if (banks.empty()) {
            throw ContractError("convolutional encoder needs at least one bank");
        }
        for (const auto& b : banks) {
            if (b.filters.rank() != 3) {
                throw DimensionError("conv filters must be rank 3, got " +
                                     shape_to_string(b.filters.shape()));
            }
            if (b.bias.rank() != 1 || b.bias.dim(0) != b.maps()) {
                throw DimensionError("conv bias " + shape_to_string(b.bias.shape()) +
                                     " does not match " + std::to_string(b.maps()) +
                                     " maps");
            }
            if (b.depth() != banks.front().depth()) {
                throw DimensionError("conv banks disagree on embedding depth");
            }
        }
        for (std::size_t i = 1; i < banks.size(); ++i) {
            if (banks[i].width() <= banks[i - 1].width()) {
                throw ContractError("conv banks must use strictly increasing widths");
            }
        }
    }
};

struct CnnNodes {
    struct Bank {
        NodeId filters, bias;
        std::size_t maps = 0, width = 0, depth = 0;
    };
    std::vector<Bank> banks;
};

template <typename Real>
CnnNodes bind_cnn(GraphT<Real>& g, const CnnParamsT<Real>& p) {
    CnnNodes n;
    for (const auto& b : p.banks) {
        n.banks.push_back({g.leaf(b.filters), g.leaf(b.bias), b.maps(), b.width(),
                           b.depth()});
    }
    return n;
}

/// Convolutional sentence encoder over a [T x D] embedding matrix holding
/// `token_count` real tokens (T >= token_count; any further rows are padding).
/// Each bank slides its filters over windows of `width` consecutive rows,
/// padding with zero rows only when the sentence is shorter than the filter,
/// then applies relu, max-pools over window positions, and the per-bank
/// outputs are concatenated. The window count is derived from the token
/// count — max(token_count, width) - width + 1 — so rows appended beyond the
/// required padding are never read and cannot change the result.
template <typename Real>
NodeId cnn_encode(GraphT<Real>& g, const CnnNodes& n, NodeId embedded,
                  std::size_t token_count) {
    const std::size_t t = g.value(embedded).dim(0);
    if (token_count == 0 || token_count > t) {
        throw ContractError("cnn encoder got token count " +
                            std::to_string(token_count) + " for a " +
                            shape_to_string(g.value(embedded).shape()) + " matrix");
    }
    std::vector<NodeId> parts;
    parts.reserve(n.banks.size());
    for (const auto& bank : n.banks) {
        NodeId m = embedded;
        if (t < bank.width) m = g.pad_rows(m, bank.width);
        NodeId windows = g.unfold_windows(m, bank.width);  // [? x width*depth]
        const std::size_t positions =
            std::max(token_count, bank.width) - bank.width + 1;
        if (g.value(windows).dim(0) > positions) {
            windows = g.first_rows(windows, positions);
        }
        NodeId f = g.reshape(bank.filters, Shape{bank.maps, bank.width * bank.depth});
        NodeId y = g.add_rowwise(g.matmul_nt(windows, f), bank.bias);  // [P x maps]
        parts.push_back(g.max_pool_time(g.relu(y)));
    }
    return g.concat(parts);
}

/// Convenience overload for an exactly-sized [L x D] matrix.
template <typename Real>
NodeId cnn_encode(GraphT<Real>& g, const CnnNodes& n, NodeId embedded) {
    return cnn_encode(g, n, embedded, g.value(embedded).dim(0));
}

using LinearParams = LinearParamsT<double>;
using GruParams = GruParamsT<double>;
using ConvBank = ConvBankT<double>;
using CnnParams = CnnParamsT<double>;

}  // namespace dact
