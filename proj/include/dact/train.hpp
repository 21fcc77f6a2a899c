// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dact/adam.hpp"
#include "dact/checkpoint.hpp"
#include "dact/corpus.hpp"
#include "dact/error.hpp"
#include "dact/model.hpp"

namespace dact {

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
    std::size_t total = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;  // 0 on an empty split
    std::vector<std::vector<std::size_t>> confusion;  // [gold][predicted]
};

template <typename Real>
EvalResult evaluate_model(const ModelT<Real>& model,
                          const std::vector<Conversation>& split,
                          const LengthStats& stats) {
    const std::size_t k = model.config().num_classes;
    EvalResult res;
    res.confusion.assign(k, std::vector<std::size_t>(k, 0));
    for (const Conversation& conv : split) {
        const std::vector<std::size_t> pred = model.predict_tags(conv, stats);
        for (std::size_t t = 0; t < conv.records.size(); ++t) {
            const UtteranceRecord& r = conv.records[t];
            if (!r.act_tag.has_value()) {
                throw DataError("record " + std::to_string(t + 1) +
                                " of conversation '" + conv.id +
                                "' has no gold tag for evaluation");
            }
            ++res.total;
            if (pred[t] == *r.act_tag) ++res.correct;
            res.confusion[*r.act_tag][pred[t]] += 1;
        }
    }
    res.accuracy = res.total == 0
                       ? 0.0
                       : static_cast<double>(res.correct) /
                             static_cast<double>(res.total);
    return res;
}

struct ClassMetrics {
    std::size_t gold_total = 0;
    std::size_t predicted_total = 0;
    std::size_t correct = 0;
    double precision = 0.0;
    double recall = 0.0;
};

inline std::vector<ClassMetrics> per_class_metrics(
    const std::vector<std::vector<std::size_t>>& confusion) {
    const std::size_t k = confusion.size();
    std::vector<ClassMetrics> out(k);
    for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            out[i].gold_total += confusion[i][j];
            out[j].predicted_total += confusion[i][j];
        }
        out[i].correct = confusion[i][i];
    }
    for (ClassMetrics& m : out) {
        if (m.predicted_total > 0) {
            m.precision = static_cast<double>(m.correct) /
                          static_cast<double>(m.predicted_total);
        }
        if (m.gold_total > 0) {
            m.recall =
                static_cast<double>(m.correct) / static_cast<double>(m.gold_total);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double valid_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;  // 1-based; argmax validation accuracy, first on ties
    double test_accuracy = 0.0;
    std::vector<std::vector<std::size_t>> confusion;  // test split, at best epoch
};

struct TrainOptions {
    std::size_t epochs = 10;
    std::uint64_t seed = 0;  // conversation shuffle seed
    AdamConfig adam;
    double clip_norm = 0.0;   // 0 disables global-norm gradient clipping
    std::size_t accumulate = 1;  // conversations whose gradients share one step
    std::filesystem::path checkpoint_path;  // saved at each new validation best
    std::function<void(const std::string&)> log;  // optional progress sink
    // Called once per conversation visit, in visit order (for tests that
    // audit the shuffle).
    std::function<void(std::size_t epoch, const std::string& conversation_id)>
        visit_hook;
};

/// Epoch loop: seeded shuffle of conversation order (sentence order within a
/// conversation never changes), one optimizer step per conversation (or per
/// `accumulate` conversations), per-epoch train/validation metrics, and
/// best-validation-epoch selection. The model ends up holding the
/// best-epoch parameters; the returned report carries test metrics at that
/// epoch.
template <typename Real>
TrainReport train_model(ModelT<Real>& model, const LoadedCorpus& corpus,
                        const TrainOptions& options = {}) {
    if (options.epochs == 0) {
        throw ConfigError("training needs at least one epoch");
    }
    if (options.accumulate == 0) {
        throw ConfigError("gradient accumulation span must be positive");
    }
    if (corpus.splits.train.empty()) {
        throw DataError("training split is empty");
    }

    AdamT<Real> adam(options.adam);
    std::mt19937_64 shuffle_rng(options.seed);
    std::vector<std::size_t> order(corpus.splits.train.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    double best_valid = -1.0;
    std::vector<TensorT<Real>> best_params;

    std::vector<TensorT<Real>> acc;  // accumulation buffers, store order
    auto reset_acc = [&]() {
        acc.clear();
        for (const auto& [name, t] : model.params()) {
            acc.push_back(TensorT<Real>::zeros(t.shape()));
        }
    };

    for (std::size_t epoch = 1; epoch <= options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double loss_sum = 0.0;
        std::size_t pending = 0;
        if (options.accumulate > 1) reset_acc();

        auto apply = [&](std::vector<TensorT<Real>>& grads) {
            clip_global_norm(grads, options.clip_norm);
            adam.step(model.params(), grads);
        };

        for (std::size_t idx : order) {
            const Conversation& conv = corpus.splits.train[idx];
            if (options.visit_hook) options.visit_hook(epoch, conv.id);
            GraphT<Real> g;
            std::vector<NodeId> param_ids;
            const NodeId loss =
                model.conversation_loss(g, conv, corpus.stats, &param_ids);
            g.backward(loss);
            loss_sum += static_cast<double>(g.value(loss).item());
            std::vector<TensorT<Real>> grads;
            grads.reserve(param_ids.size());
            for (NodeId id : param_ids) grads.push_back(g.gradient(id));
            if (options.accumulate <= 1) {
                apply(grads);
            } else {
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    auto a = acc[i].mutable_data();
                    auto gd = grads[i].data();
                    for (std::size_t e = 0; e < gd.size(); ++e) a[e] += gd[e];
                }
                if (++pending == options.accumulate) {
                    apply(acc);
                    reset_acc();
                    pending = 0;
                }
            }
        }
        if (pending > 0) {
            apply(acc);
            pending = 0;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = loss_sum / static_cast<double>(order.size());
        stats.train_accuracy =
            evaluate_model(model, corpus.splits.train, corpus.stats).accuracy;
        stats.valid_accuracy =
            evaluate_model(model, corpus.splits.valid, corpus.stats).accuracy;
        report.epochs.push_back(stats);

        const bool is_best = stats.valid_accuracy > best_valid;
        if (is_best) {
            best_valid = stats.valid_accuracy;
            report.best_epoch = epoch;
            best_params.clear();
            for (const auto& [name, t] : model.params()) {
                best_params.push_back(t.clone());
            }
            if (!options.checkpoint_path.empty()) {
                save_checkpoint(options.checkpoint_path, model, corpus.vocab,
                                corpus.tags, corpus.stats);
            }
        }
        if (options.log) {
            std::ostringstream line;
            line << "epoch " << epoch << ": train_loss=" << std::fixed
                 << std::setprecision(6) << stats.train_loss
                 << " train_acc=" << stats.train_accuracy
                 << " valid_acc=" << stats.valid_accuracy
                 << (is_best ? " (new best)" : "");
            options.log(line.str());
        }
    }

    // Restore the best-epoch parameters in place, keeping buffer sharing.
    std::size_t i = 0;
    for (auto& [name, t] : model.params()) {
        auto dst = t.mutable_data();
        auto src = best_params[i++].data();
        std::copy(src.begin(), src.end(), dst.begin());
    }
    const EvalResult test =
        evaluate_model(model, corpus.splits.test, corpus.stats);
    report.test_accuracy = test.accuracy;
    report.confusion = test.confusion;
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const TrainReport& report) {
    nlohmann::json j;
    j["epochs"] = nlohmann::json::array();
    for (const EpochStats& e : report.epochs) {
        j["epochs"].push_back({{"epoch", e.epoch},
                               {"train_loss", e.train_loss},
                               {"train_accuracy", e.train_accuracy},
                               {"valid_accuracy", e.valid_accuracy}});
    }
    j["best_epoch"] = report.best_epoch;
    j["test_accuracy"] = report.test_accuracy;
    j["confusion"] = report.confusion;
    return j;
}

inline TrainReport report_from_json(const nlohmann::json& j) {
    TrainReport report;
    for (const auto& e : j.at("epochs")) {
        EpochStats s;
        s.epoch = e.at("epoch").get<std::size_t>();
        s.train_loss = e.at("train_loss").get<double>();
        s.train_accuracy = e.at("train_accuracy").get<double>();
        s.valid_accuracy = e.at("valid_accuracy").get<double>();
        report.epochs.push_back(s);
    }
    report.best_epoch = j.at("best_epoch").get<std::size_t>();
    report.test_accuracy = j.at("test_accuracy").get<double>();
    report.confusion =
        j.at("confusion").get<std::vector<std::vector<std::size_t>>>();
    return report;
}

inline std::string report_to_text(const TrainReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    out << "epoch  train_loss  train_acc  valid_acc\n";
    for (const EpochStats& e : report.epochs) {
        out << std::setw(5) << e.epoch << "  " << std::setw(10) << e.train_loss
            << "  " << std::setw(9) << e.train_accuracy << "  " << std::setw(9)
            << e.valid_accuracy << (e.epoch == report.best_epoch ? "  *" : "")
            << "\n";
    }
    out << "best epoch: " << report.best_epoch << "\n";
    out << "test accuracy at best epoch: " << report.test_accuracy << "\n";
    return out.str();
}

}  // namespace dact
