// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>

#include "dact/adam.hpp"
#include "dact/corpus.hpp"
#include "dact/error.hpp"
#include "dact/model.hpp"
#include "dact/train.hpp"

namespace dact {

/// Flat experiment configuration. Loadable from a `key=value` file ('#'
/// comments, blank lines allowed) and overridable one key at a time; unknown
/// keys are rejected. `resolved()` prints every key so a run can log its
/// exact configuration.
struct RunConfig {
    // corpus inputs
    std::string corpus_dir;       // directory of <id>.csv conversation files
    std::string train_manifest;   // id list files, one id per line
    std::string valid_manifest;
    std::string test_manifest;
    std::string tag_map;          // raw-prefix -> collapsed tag TSV
    std::string embeddings;       // optional pretrained embedding text file
    std::string out_dir = "out";

    // model
    std::string preset = "multi-level-grnn+non-textual";
    std::size_t embedding_size = 300;
    std::size_t sentence_size = 300;
    std::size_t nontextual_size = 300;
    std::size_t context_size = 300;
    bool gru_bias = false;

    // corpus policy
    bool keep_continuations = false;  // true keeps '+' as its own class

    // training
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double clip_norm = 0.0;
    std::size_t accumulate = 1;

    void set(std::string_view key, std::string_view value);
    static RunConfig load(const std::filesystem::path& path);
    std::string resolved() const;

    ModelConfig model_config(std::size_t num_classes) const {
        ModelConfig cfg = preset_config(preset);
        cfg.sizes.embedding = embedding_size;
        cfg.sizes.sentence = sentence_size;
        cfg.sizes.nontextual = nontextual_size;
        cfg.sizes.context = context_size;
        cfg.gru_bias = gru_bias;
        cfg.num_classes = num_classes;
        cfg.seed = seed;
        return cfg;
    }

    CorpusOptions corpus_options() const {
        return CorpusOptions{!keep_continuations};
    }

    TrainOptions train_options() const {
        TrainOptions opt;
        opt.epochs = epochs;
        opt.seed = seed;
        opt.adam = AdamConfig{learning_rate, beta1, beta2, epsilon};
        opt.clip_norm = clip_norm;
        opt.accumulate = accumulate;
        return opt;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
        s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.remove_suffix(1);
    return s;
}

inline bool config_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    throw ConfigError("key '" + std::string(key) + "' expects a boolean, got '" +
                      std::string(value) + "'");
}

inline std::size_t config_size(std::string_view key, std::string_view value) {
    std::size_t out = 0;
    const auto [p, ec] =
        std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size()) {
        throw ConfigError("key '" + std::string(key) +
                          "' expects a non-negative integer, got '" +
                          std::string(value) + "'");
    }
    return out;
}

inline double config_double(std::string_view key, std::string_view value) {
    try {
        std::size_t used = 0;
        const double out = std::stod(std::string(value), &used);
        if (used != value.size()) throw std::invalid_argument("trailing data");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("key '" + std::string(key) +
                          "' expects a number, got '" + std::string(value) + "'");
    }
}

}  // namespace detail

inline void RunConfig::set(std::string_view key, std::string_view value) {
    using detail::config_bool;
    using detail::config_double;
    using detail::config_size;
    const std::string v(value);
    if (key == "corpus_dir") corpus_dir = v;
    else if (key == "train_manifest") train_manifest = v;
    else if (key == "valid_manifest") valid_manifest = v;
    else if (key == "test_manifest") test_manifest = v;
    else if (key == "tag_map") tag_map = v;
    else if (key == "embeddings") embeddings = v;
    else if (key == "out_dir") out_dir = v;
    else if (key == "preset") preset = v;
    else if (key == "embedding_size") embedding_size = config_size(key, value);
    else if (key == "sentence_size") sentence_size = config_size(key, value);
    else if (key == "nontextual_size") nontextual_size = config_size(key, value);
    else if (key == "context_size") context_size = config_size(key, value);
    else if (key == "gru_bias") gru_bias = config_bool(key, value);
    else if (key == "keep_continuations")
        keep_continuations = config_bool(key, value);
    else if (key == "epochs") epochs = config_size(key, value);
    else if (key == "seed") seed = config_size(key, value);
    else if (key == "learning_rate") learning_rate = config_double(key, value);
    else if (key == "beta1") beta1 = config_double(key, value);
    else if (key == "beta2") beta2 = config_double(key, value);
    else if (key == "epsilon") epsilon = config_double(key, value);
    else if (key == "clip_norm") clip_norm = config_double(key, value);
    else if (key == "accumulate") accumulate = config_size(key, value);
    else {
        throw ConfigError("unknown configuration key '" + std::string(key) + "'");
    }
}

inline RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path.string());
    }
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = detail::trim(line);
        if (row.empty() || row.front() == '#') continue;
        const std::size_t eq = row.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(path.filename().string() + ":" +
                              std::to_string(line_no) +
                              ": expected 'key=value', got '" + std::string(row) +
                              "'");
        }
        try {
            cfg.set(detail::trim(row.substr(0, eq)),
                    detail::trim(row.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(path.filename().string() + ":" +
                              std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

inline std::string RunConfig::resolved() const {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "corpus_dir=" << corpus_dir << "\n";
    out << "train_manifest=" << train_manifest << "\n";
    out << "valid_manifest=" << valid_manifest << "\n";
    out << "test_manifest=" << test_manifest << "\n";
    out << "tag_map=" << tag_map << "\n";
    out << "embeddings=" << embeddings << "\n";
    out << "out_dir=" << out_dir << "\n";
    out << "preset=" << preset << "\n";
    out << "embedding_size=" << embedding_size << "\n";
    out << "sentence_size=" << sentence_size << "\n";
    out << "nontextual_size=" << nontextual_size << "\n";
    out << "context_size=" << context_size << "\n";
    out << "gru_bias=" << (gru_bias ? "true" : "false") << "\n";
    out << "keep_continuations=" << (keep_continuations ? "true" : "false")
        << "\n";
    out << "epochs=" << epochs << "\n";
    out << "seed=" << seed << "\n";
    out << "learning_rate=" << learning_rate << "\n";
    out << "beta1=" << beta1 << "\n";
    out << "beta2=" << beta2 << "\n";
    out << "epsilon=" << epsilon << "\n";
    out << "clip_norm=" << clip_norm << "\n";
    out << "accumulate=" << accumulate << "\n";
    return out.str();
}

}  // namespace dact
