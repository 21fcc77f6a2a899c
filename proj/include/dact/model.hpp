// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dact/corpus.hpp"
#include "dact/error.hpp"
#include "dact/gradcheck.hpp"
#include "dact/graph.hpp"
#include "dact/layers.hpp"
#include "dact/tensor.hpp"

namespace dact {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class SentenceEncoderKind { None, Cnn, Grnn };
enum class ContextKind { None, Grnn };

inline const char* to_string(SentenceEncoderKind k) {
    switch (k) {
        case SentenceEncoderKind::None: return "none";
        case SentenceEncoderKind::Cnn: return "cnn";
        case SentenceEncoderKind::Grnn: return "grnn";
    }
    return "?";
}

inline const char* to_string(ContextKind k) {
    return k == ContextKind::Grnn ? "grnn" : "none";
}

/// Convolutional encoder geometry: 100 feature maps for each filter width in
/// {2, 3, 4}, giving a 300-wide sentence vector.
inline constexpr std::size_t kCnnWidths[] = {2, 3, 4};
inline constexpr std::size_t kCnnMaps = 100;

struct ModelSizes {
    std::size_t embedding = 300;   // word vector width D
    std::size_t sentence = 300;    // sentence-level GRU hidden width
    std::size_t nontextual = 300;  // feed-forward hidden width
    std::size_t context = 300;     // conversation-level GRU hidden width
};

struct ModelConfig {
    SentenceEncoderKind sentence_encoder = SentenceEncoderKind::Grnn;
    bool use_nontextual = true;
    ContextKind context = ContextKind::Grnn;
    ModelSizes sizes;
    std::size_t num_classes = 43;
    std::uint64_t seed = 0;
    bool gru_bias = false;  // gate biases for both GRUs (all gates or none)

    bool uses_text() const {
        return sentence_encoder != SentenceEncoderKind::None;
    }

    /// Width of the per-sentence textual vector (0 when text is unused).
    std::size_t textual_width() const {
        switch (sentence_encoder) {
            case SentenceEncoderKind::None: return 0;
            case SentenceEncoderKind::Cnn:
                return kCnnMaps * std::size(kCnnWidths);
            case SentenceEncoderKind::Grnn: return sizes.sentence;
        }
        return 0;
    }

    /// Width of the combined sentence vector fed to the context stage.
    std::size_t combined_width() const {
        return textual_width() + (use_nontextual ? sizes.nontextual : 0);
    }

    /// Input width of the output layer.
    std::size_t output_input_width() const {
        return context == ContextKind::Grnn ? sizes.context : combined_width();
    }

    void validate() const {
        if (!uses_text() && !use_nontextual) {
            throw ConfigError("model has no inputs: sentence encoder is 'none' "
                              "and non-textual features are disabled");
        }
        if (num_classes < 2) {
            throw ConfigError("model needs at least 2 classes, got " +
                              std::to_string(num_classes));
        }
        if (uses_text() && (sizes.embedding == 0 ||
                            (sentence_encoder == SentenceEncoderKind::Grnn &&
                             sizes.sentence == 0))) {
            throw ConfigError("textual encoder sizes must be positive");
        }
        if (use_nontextual && sizes.nontextual == 0) {
            throw ConfigError("non-textual hidden size must be positive");
        }
        if (context == ContextKind::Grnn && sizes.context == 0) {
            throw ConfigError("context hidden size must be positive");
        }
    }

    /// One-line human-readable summary of the architecture.
    std::string describe() const {
        std::string out = "sentence=" + std::string(to_string(sentence_encoder));
        out += " non-textual=";
        out += use_nontextual ? "on" : "off";
        out += " context=" + std::string(to_string(context));
        out += " sizes=" + std::to_string(sizes.embedding) + "/" +
               std::to_string(sizes.sentence) + "/" +
               std::to_string(sizes.nontextual) + "/" +
               std::to_string(sizes.context);
        out += " classes=" + std::to_string(num_classes);
        if (gru_bias) out += " gru-bias";
        return out;
    }
};

/// The ten named architectures (lowercase canonical spellings). Lookup
/// ignores case and the separators ' ', '-', '+', '_', so e.g.
/// "multi-level GRNN+non-textual" and "multi-level-grnn-nontextual" both
/// resolve.
inline const std::vector<std::pair<std::string, ModelConfig>>& model_presets() {
    static const std::vector<std::pair<std::string, ModelConfig>> presets = [] {
        std::vector<std::pair<std::string, ModelConfig>> p;
        auto add = [&p](const char* name, SentenceEncoderKind enc, bool nt,
                        ContextKind ctx) {
            ModelConfig cfg;
            cfg.sentence_encoder = enc;
            cfg.use_nontextual = nt;
            cfg.context = ctx;
            p.emplace_back(name, cfg);
        };
        add("cnn", SentenceEncoderKind::Cnn, false, ContextKind::None);
        add("single-level-grnn", SentenceEncoderKind::Grnn, false,
            ContextKind::None);
        add("non-textual", SentenceEncoderKind::None, true, ContextKind::None);
        add("cnn+non-textual", SentenceEncoderKind::Cnn, true, ContextKind::None);
        add("single-level-grnn+non-textual", SentenceEncoderKind::Grnn, true,
            ContextKind::None);
        add("non-textual+grnn", SentenceEncoderKind::None, true,
            ContextKind::Grnn);
        add("cnn+grnn", SentenceEncoderKind::Cnn, false, ContextKind::Grnn);
        add("multi-level-grnn", SentenceEncoderKind::Grnn, false,
            ContextKind::Grnn);
        add("cnn+non-textual+grnn", SentenceEncoderKind::Cnn, true,
            ContextKind::Grnn);
        add("multi-level-grnn+non-textual", SentenceEncoderKind::Grnn, true,
            ContextKind::Grnn);
        return p;
    }();
    return presets;
}

namespace detail {

inline std::string preset_key(std::string_view name) {
    std::string key;
    for (char c : name) {
        if (c == ' ' || c == '-' || c == '+' || c == '_') continue;
        key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return key;
}

}  // namespace detail

inline ModelConfig preset_config(std::string_view name) {
    const std::string key = detail::preset_key(name);
    for (const auto& [preset_name, cfg] : model_presets()) {
        if (detail::preset_key(preset_name) == key) return cfg;
    }
    std::string known;
    for (const auto& [preset_name, cfg] : model_presets()) {
        if (!known.empty()) known += ", ";
        known += preset_name;
    }
    throw ConfigError("unknown model preset '" + std::string(name) +
                      "'; known presets: " + known);
}

// ---------------------------------------------------------------------------
// Parameter store
// ---------------------------------------------------------------------------

/// Named parameter tensors in a stable insertion order (the order drives
/// optimizer state, checkpoint layout, and gradient collection).
template <typename Real>
class ParamStoreT {
public:
    TensorT<Real>& add(const std::string& name, TensorT<Real> t) {
        if (index_.count(name)) {
            throw ContractError("duplicate parameter name '" + name + "'");
        }
        t.set_requires_grad(true);
        index_.emplace(name, items_.size());
        items_.emplace_back(name, std::move(t));
        return items_.back().second;
    }

    bool contains(const std::string& name) const { return index_.count(name); }

    TensorT<Real>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw ContractError("unknown parameter '" + name + "'");
        }
        return items_[it->second].second;
    }

    const TensorT<Real>& at(const std::string& name) const {
        return const_cast<ParamStoreT*>(this)->at(name);
    }

    std::size_t size() const { return items_.size(); }

    std::size_t total_elements() const {
        std::size_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }

private:
    std::vector<std::pair<std::string, TensorT<Real>>> items_;
    std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// A configured architecture with its parameters. Forward passes build a
/// fresh tape per conversation; the parameter tensors are shared between the
/// store and the structured layer views.
template <typename Real>
class ModelT {
public:
    ModelT(ModelConfig config, std::size_t vocab_size)
        : config_(std::move(config)), vocab_size_(vocab_size) {
        config_.validate();
        if (config_.uses_text() && vocab_size_ == 0) {
            throw ConfigError("textual model built with an empty vocabulary");
        }
        init_params();
    }

    const ModelConfig& config() const { return config_; }
    std::size_t vocab_size() const { return vocab_size_; }
    ParamStoreT<Real>& params() { return params_; }
    const ParamStoreT<Real>& params() const { return params_; }

    /// Replaces the embedding table contents (for pretrained vectors).
    void set_embeddings(const TensorT<Real>& table) {
        if (!config_.uses_text()) {
            throw ConfigError("model has no embedding table to set");
        }
        TensorT<Real>& e = params_.at("embedding");
        if (!e.same_shape(table)) {
            throw DimensionError("embedding table shape " +
                                 shape_to_string(table.shape()) +
                                 " does not match model " +
                                 shape_to_string(e.shape()));
        }
        auto dst = e.mutable_data();
        auto src = table.data();
        std::copy(src.begin(), src.end(), dst.begin());
    }

    /// Builds per-sentence class scores on `g`, before softmax. When
    /// `param_ids` is given it receives one leaf id per parameter, in store
    /// order, for gradient collection.
    std::vector<NodeId> sentence_logits(GraphT<Real>& g, const Conversation& conv,
                                        const LengthStats& stats,
                                        std::vector<NodeId>* param_ids = nullptr) const {
        if (conv.records.empty()) {
            throw EmptySequenceError("forward pass over an empty conversation");
        }
        Bound b = bind(g, param_ids);
        std::vector<NodeId> combined;
        combined.reserve(conv.records.size());
        for (const UtteranceRecord& r : conv.records) {
            std::vector<NodeId> parts;
            if (config_.uses_text()) {
                if (r.tokens.empty()) {
                    throw ContractError("record without token ids in conversation '" +
                                        conv.id + "'");
                }
                NodeId emb = g.embed_rows(b.embedding, r.tokens);
                if (config_.sentence_encoder == SentenceEncoderKind::Grnn) {
                    parts.push_back(grnn_encode(g, *b.sentence_gru, emb));
                } else {
                    parts.push_back(cnn_encode(g, *b.cnn, emb, r.tokens.size()));
                }
            }
            if (config_.use_nontextual) {
                NodeId x = g.constant(nontextual_features<Real>(r, stats));
                parts.push_back(ffnn_apply(g, *b.ffnn, x));
            }
            combined.push_back(parts.size() == 1 ? parts[0] : g.concat(parts));
        }
        std::vector<NodeId> logits;
        logits.reserve(combined.size());
        if (config_.context == ContextKind::Grnn) {
            std::vector<NodeId> hs = gru_states(g, *b.context_gru, combined);
            for (NodeId h : hs) logits.push_back(linear_apply(g, b.output, h));
        } else {
            for (NodeId c : combined) logits.push_back(linear_apply(g, b.output, c));
        }
        return logits;
    }

    /// Per-sentence class distributions (softmax over the logits).
    std::vector<TensorT<Real>> forward_conversation(const Conversation& conv,
                                                    const LengthStats& stats) const {
        GraphT<Real> g;
        std::vector<TensorT<Real>> out;
        for (NodeId l : sentence_logits(g, conv, stats)) {
            out.push_back(g.value(g.softmax(l)));
        }
        return out;
    }

    /// Argmax class per sentence, first index on ties.
    std::vector<std::size_t> predict_tags(const Conversation& conv,
                                          const LengthStats& stats) const {
        std::vector<std::size_t> tags;
        for (const TensorT<Real>& dist : forward_conversation(conv, stats)) {
            auto d = dist.data();
            tags.push_back(static_cast<std::size_t>(
                std::max_element(d.begin(), d.end()) - d.begin()));
        }
        return tags;
    }

    /// Mean over sentences of the negative log-likelihood at the gold class.
    NodeId conversation_loss(GraphT<Real>& g, const Conversation& conv,
                             const LengthStats& stats,
                             std::vector<NodeId>* param_ids = nullptr) const {
        std::vector<NodeId> logits = sentence_logits(g, conv, stats, param_ids);
        NodeId total;
        for (std::size_t t = 0; t < logits.size(); ++t) {
            const UtteranceRecord& r = conv.records[t];
            if (!r.act_tag.has_value()) {
                throw DataError("record " + std::to_string(t + 1) +
                                " of conversation '" + conv.id +
                                "' has no gold tag");
            }
            if (*r.act_tag >= config_.num_classes) {
                throw DataError("gold tag id " + std::to_string(*r.act_tag) +
                                " out of range for " +
                                std::to_string(config_.num_classes) + " classes");
            }
            NodeId nll = g.softmax_nll(logits[t], *r.act_tag);
            total = t == 0 ? nll : g.add(total, nll);
        }
        return g.scale(total, Real(1) / static_cast<Real>(logits.size()));
    }

private:
    struct Bound {
        NodeId embedding;
        std::optional<GruNodes> sentence_gru;
        std::optional<CnnNodes> cnn;
        std::optional<LinearNodes> ffnn;
        std::optional<GruNodes> context_gru;
        LinearNodes output;
    };

    Bound bind(GraphT<Real>& g, std::vector<NodeId>* param_ids) const {
        Bound b;
        std::vector<NodeId> ids;
        auto track = [&](NodeId id) {
            ids.push_back(id);
            return id;
        };
        // Binding follows store order exactly so `ids` lines up with it.
        if (config_.uses_text()) {
            b.embedding = track(g.leaf(params_.at("embedding")));
            if (config_.sentence_encoder == SentenceEncoderKind::Grnn) {
                b.sentence_gru = bind_tracked_gru(g, *sentence_gru_, ids);
            } else {
                CnnNodes n;
                for (const auto& bank : cnn_->banks) {
                    CnnNodes::Bank bn;
                    bn.filters = track(g.leaf(bank.filters));
                    bn.bias = track(g.leaf(bank.bias));
                    bn.maps = bank.maps();
                    bn.width = bank.width();
                    bn.depth = bank.depth();
                    n.banks.push_back(bn);
                }
                b.cnn = std::move(n);
            }
        }
        if (config_.use_nontextual) {
            b.ffnn = LinearNodes{track(g.leaf(ffnn_->w)), track(g.leaf(ffnn_->b))};
        }
        if (config_.context == ContextKind::Grnn) {
            b.context_gru = bind_tracked_gru(g, *context_gru_, ids);
        }
        b.output = LinearNodes{track(g.leaf(output_.w)), track(g.leaf(output_.b))};
        if (param_ids) *param_ids = std::move(ids);
        return b;
    }

    static GruNodes bind_tracked_gru(GraphT<Real>& g, const GruParamsT<Real>& p,
                                     std::vector<NodeId>& ids) {
        GruNodes n = bind_gru(g, p);
        ids.push_back(n.w_z);
        ids.push_back(n.u_z);
        ids.push_back(n.w_r);
        ids.push_back(n.u_r);
        ids.push_back(n.w_h);
        ids.push_back(n.u_h);
        if (n.has_bias) {
            ids.push_back(n.b_z);
            ids.push_back(n.b_r);
            ids.push_back(n.b_h);
        }
        return n;
    }

    /// Allocates and seeds every parameter. The draw order is fixed and
    /// documented so that identical seeds give identical parameters across
    /// runs and across manual layer-by-layer reconstructions: embedding
    /// table; sentence encoder (GRU gates w_z,u_z,w_r,u_r,w_h,u_h, or CNN
    /// banks by ascending width); feed-forward branch; context GRU; output
    /// layer. Biases and initial states are zero and consume no draws.
    void init_params() {
        std::mt19937_64 rng(config_.seed);
        const ModelSizes& s = config_.sizes;
        if (config_.uses_text()) {
            params_.add("embedding",
                        uniform_init<Real>(Shape{vocab_size_, s.embedding}, -0.05,
                                           0.05, rng));
            if (config_.sentence_encoder == SentenceEncoderKind::Grnn) {
                sentence_gru_ =
                    make_gru("sentence_gru", s.embedding, s.sentence, rng);
            } else {
                CnnParamsT<Real> cnn;
                for (std::size_t w : kCnnWidths) {
                    const std::string prefix = "cnn.w" + std::to_string(w);
                    ConvBankT<Real> bank;
                    bank.filters =
                        params_.add(prefix + ".filters",
                                    glorot_filters<Real>(kCnnMaps, w,
                                                         s.embedding, rng));
                    bank.bias = params_.add(prefix + ".bias",
                                            TensorT<Real>::zeros(Shape{kCnnMaps}));
                    cnn.banks.push_back(std::move(bank));
                }
                cnn.validate();
                cnn_ = std::move(cnn);
            }
        }
        if (config_.use_nontextual) {
            LinearParamsT<Real> f;
            f.w = params_.add("ffnn.w", glorot_matrix<Real>(s.nontextual, 4, rng));
            f.b = params_.add("ffnn.b", TensorT<Real>::zeros(Shape{s.nontextual}));
            f.validate();
            ffnn_ = std::move(f);
        }
        if (config_.context == ContextKind::Grnn) {
            context_gru_ =
                make_gru("context_gru", config_.combined_width(), s.context, rng);
        }
        output_.w = params_.add(
            "output.w", glorot_matrix<Real>(config_.num_classes,
                                            config_.output_input_width(), rng));
        output_.b = params_.add("output.b",
                                TensorT<Real>::zeros(Shape{config_.num_classes}));
        output_.validate();
    }

    // Views returned by ParamStoreT::add share both the buffer and the
    // gradient-tracking flag with the stored tensor.
    GruParamsT<Real> make_gru(const std::string& prefix, std::size_t in,
                              std::size_t hidden, std::mt19937_64& rng) {
        GruParamsT<Real> p;
        p.w_z = params_.add(prefix + ".w_z", glorot_matrix<Real>(hidden, in, rng));
        p.u_z =
            params_.add(prefix + ".u_z", glorot_matrix<Real>(hidden, hidden, rng));
        p.w_r = params_.add(prefix + ".w_r", glorot_matrix<Real>(hidden, in, rng));
        p.u_r =
            params_.add(prefix + ".u_r", glorot_matrix<Real>(hidden, hidden, rng));
        p.w_h = params_.add(prefix + ".w_h", glorot_matrix<Real>(hidden, in, rng));
        p.u_h =
            params_.add(prefix + ".u_h", glorot_matrix<Real>(hidden, hidden, rng));
        if (config_.gru_bias) {
            p.b_z = params_.add(prefix + ".b_z", TensorT<Real>::zeros(Shape{hidden}));
            p.b_r = params_.add(prefix + ".b_r", TensorT<Real>::zeros(Shape{hidden}));
            p.b_h = params_.add(prefix + ".b_h", TensorT<Real>::zeros(Shape{hidden}));
        }
        p.validate();
        return p;
    }

    ModelConfig config_;
    std::size_t vocab_size_ = 0;
    ParamStoreT<Real> params_;
    std::optional<GruParamsT<Real>> sentence_gru_;
    std::optional<CnnParamsT<Real>> cnn_;
    std::optional<LinearParamsT<Real>> ffnn_;
    std::optional<GruParamsT<Real>> context_gru_;
    LinearParamsT<Real> output_;
};

using Model = ModelT<double>;

/// Wraps a model's conversation loss as a finite-difference check over every
/// parameter (the model's tensors are perturbed in place through the shared
/// buffers).
inline GradCheckCase make_model_grad_check(std::string name, Model& model,
                                           Conversation conv,
                                           LengthStats stats) {
    GradCheckCase c;
    c.name = std::move(name);
    for (auto& [pname, tensor] : model.params()) c.inputs.push_back(tensor);
    Model* m = &model;
    c.eval = [m, conv, stats]() {
        Graph g;
        return g.value(m->conversation_loss(g, conv, stats)).item();
    };
    c.analytic = [m, conv, stats]() {
        Graph g;
        std::vector<NodeId> ids;
        g.backward(m->conversation_loss(g, conv, stats, &ids));
        std::vector<Tensor> grads;
        grads.reserve(ids.size());
        for (NodeId id : ids) grads.push_back(g.gradient(id).clone());
        return grads;
    };
    return c;
}

}  // namespace dact
