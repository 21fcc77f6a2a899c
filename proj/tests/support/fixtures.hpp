// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0
//
// Shared fixtures: hand-built conversations and synthetic corpora used
// across the unit tests and the acceptance suite.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <tuple>
#include <vector>

#include "dact/corpus.hpp"
#include "dact/model.hpp"

namespace dact_tests {

// Frozen oracle values (computed independently at high precision).
inline constexpr double kLn43 = 3.7612001156935624;
inline constexpr double kSigma1 = 0.7310585786300049;       // 1/(1+e^-1)
inline constexpr double kTanh1 = 0.7615941559557649;
inline constexpr double kSigma1Tanh1 = 0.5567699411459397;  // product
inline constexpr double kInvSqrt2 = 0.7071067811865476;

// ---------------------------------------------------------------------------
// Record / conversation builders
// ---------------------------------------------------------------------------

inline dact::UtteranceRecord make_record(std::string conv_id, char caller,
                                         std::size_t utt, std::size_t sub,
                                         std::string raw_tag,
                                         std::string text) {
    dact::UtteranceRecord r;
    r.conversation_id = std::move(conv_id);
    r.caller = caller == 'A' ? dact::Caller::A : dact::Caller::B;
    r.utterance_index = utt;
    r.sub_utterance_index = sub;
    r.act_tag_raw = std::move(raw_tag);
    r.text = std::move(text);
    return r;
}

// rows: (caller, utterance_index, sub_utterance_index, raw_tag, text)
using Row = std::tuple<char, std::size_t, std::size_t, std::string, std::string>;

inline dact::Conversation make_conversation(std::string id,
                                            const std::vector<Row>& rows) {
    dact::Conversation conv;
    conv.id = std::move(id);
    for (const Row& row : rows) {
        conv.records.push_back(make_record(conv.id, std::get<0>(row),
                                           std::get<1>(row), std::get<2>(row),
                                           std::get<3>(row), std::get<4>(row)));
    }
    dact::validate_conversation(conv);
    return conv;
}

// ---------------------------------------------------------------------------
// Reference transcript fragment (six rows spanning a mid-utterance start,
// same-speaker continuations, and a dangling '+' record).
// ---------------------------------------------------------------------------

inline const std::vector<Row>& reference_rows() {
    static const std::vector<Row> rows = {
        {'A', 5, 2, "qy",
         "{F Um, } {F uh, } do you live right in the city itself? /"},
        {'B', 6, 1, "nn", "No,  /"},
        {'B', 6, 2, "sd", "I'm more out in the suburbs,  /"},
        {'B', 6, 3, "sd", "{C but } I certainly work near a city. /"},
        {'A', 7, 1, "bk", "Okay,  /"},
        {'A', 7, 2, "qy", "{C so } [ ca-, +"},
    };
    return rows;
}

inline dact::Conversation reference_conversation() {
    return make_conversation("sw0001", reference_rows());
}

// ---------------------------------------------------------------------------
// In-memory corpus assembly (mirrors load_corpus without touching disk)
// ---------------------------------------------------------------------------

inline dact::LoadedCorpus assemble_corpus(
    std::vector<dact::Conversation> train,
    std::vector<dact::Conversation> valid,
    std::vector<dact::Conversation> test, dact::TagSet tags) {
    dact::LoadedCorpus corpus;
    corpus.tags = std::move(tags);
    corpus.splits.train = std::move(train);
    corpus.splits.valid = std::move(valid);
    corpus.splits.test = std::move(test);
    for (auto* split :
         {&corpus.splits.train, &corpus.splits.valid, &corpus.splits.test}) {
        for (dact::Conversation& conv : *split) {
            dact::assign_tags(conv, corpus.tags);
        }
    }
    corpus.vocab = dact::Vocabulary::build(corpus.splits.train);
    for (auto* split :
         {&corpus.splits.train, &corpus.splits.valid, &corpus.splits.test}) {
        for (dact::Conversation& conv : *split) {
            dact::tokenize_conversation(conv, corpus.vocab);
        }
    }
    corpus.stats = dact::compute_length_stats(corpus.splits.train);
    return corpus;
}

// ---------------------------------------------------------------------------
// Memorization corpus: 5 conversations x 10 sentences over a 50-entry
// vocabulary (48 words + the two specials). Each sentence contains one of
// five key words that determines its tag, so the task is fully learnable
// from sentence content alone.
// ---------------------------------------------------------------------------

inline dact::LoadedCorpus memorization_corpus() {
    auto filler = [](std::size_t i) {
        return "f" + std::to_string(i % 43);
    };
    auto key = [](std::size_t cls) { return "k" + std::to_string(cls); };

    std::vector<dact::Conversation> train;
    for (std::size_t c = 0; c < 5; ++c) {
        dact::Conversation conv;
        conv.id = "mem" + std::to_string(c);
        for (std::size_t s = 1; s <= 10; ++s) {
            const std::size_t cls = (s + c) % 5;
            const std::size_t len = 3 + ((s + 2 * c) % 4);  // 3..6 tokens
            const std::size_t g = 10 * c + (s - 1);
            std::vector<std::string> words;
            for (std::size_t j = 0; j + 1 < len; ++j) {
                words.push_back(filler(7 * g + 3 * j));
            }
            words.insert(words.begin() + static_cast<std::ptrdiff_t>(s % len),
                         key(cls));
            std::string text;
            for (const std::string& w : words) {
                if (!text.empty()) text += ' ';
                text += w;
            }
            conv.records.push_back(make_record(conv.id, s % 2 ? 'A' : 'B', s,
                                               1, key(cls), text));
        }
        dact::validate_conversation(conv);
        train.push_back(std::move(conv));
    }
    std::vector<dact::Conversation> valid = train;
    std::vector<dact::Conversation> test = train;
    dact::LoadedCorpus corpus = assemble_corpus(
        std::move(train), std::move(valid), std::move(test),
        dact::TagSet::from_names({"k0", "k1", "k2", "k3", "k4"}));
    if (corpus.vocab.size() != 50) {
        throw dact::DataError("memorization fixture vocabulary is " +
                              std::to_string(corpus.vocab.size()) +
                              " entries, expected 50");
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// Marker corpus: the tag of sentence t is determined solely by which of two
// marker words appeared in sentence t-1. A sentence's own tokens carry no
// signal about its own tag (its marker is drawn independently), so only a
// model with conversation context can solve it. Sentence 1 is a fixed
// greeting with a fixed tag.
// ---------------------------------------------------------------------------

inline dact::LoadedCorpus marker_corpus(std::size_t train_convs,
                                        std::size_t valid_convs,
                                        std::size_t test_convs,
                                        std::uint64_t seed,
                                        std::size_t sentences = 9) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<std::size_t> filler_pick(0, 5);
    std::uniform_int_distribution<std::size_t> extra_len(1, 3);

    std::size_t serial = 0;
    auto make_conv = [&]() {
        dact::Conversation conv;
        conv.id = "mk" + std::to_string(serial++);
        int prev_marker = 0;
        for (std::size_t s = 1; s <= sentences; ++s) {
            const int marker = coin(rng);
            std::string text;
            std::string tag;
            if (s == 1) {
                tag = "alpha";
                text = "hello there " + std::string(marker ? "mb" : "ma");
            } else {
                tag = prev_marker ? "beta" : "alpha";
                const std::size_t extras = extra_len(rng);
                std::vector<std::string> words(extras);
                for (std::string& w : words) {
                    w = "g" + std::to_string(filler_pick(rng));
                }
                std::uniform_int_distribution<std::size_t> pos(0, words.size());
                words.insert(
                    words.begin() + static_cast<std::ptrdiff_t>(pos(rng)),
                    marker ? "mb" : "ma");
                for (const std::string& w : words) {
                    if (!text.empty()) text += ' ';
                    text += w;
                }
            }
            conv.records.push_back(
                make_record(conv.id, s % 2 ? 'A' : 'B', s, 1, tag, text));
            prev_marker = marker;
        }
        dact::validate_conversation(conv);
        return conv;
    };

    std::vector<dact::Conversation> train, valid, test;
    for (std::size_t i = 0; i < train_convs; ++i) train.push_back(make_conv());
    for (std::size_t i = 0; i < valid_convs; ++i) valid.push_back(make_conv());
    for (std::size_t i = 0; i < test_convs; ++i) test.push_back(make_conv());
    return assemble_corpus(std::move(train), std::move(valid), std::move(test),
                           dact::TagSet::from_names({"alpha", "beta"}));
}

// ---------------------------------------------------------------------------
// Small prepared conversations for model-level tests
// ---------------------------------------------------------------------------

struct PreparedSetup {
    dact::Conversation conv;
    dact::Vocabulary vocab;
    dact::TagSet tags;
    dact::LengthStats stats;
};

/// Two-sentence conversation, tokenized against its own vocabulary.
inline PreparedSetup tiny_setup() {
    PreparedSetup s;
    s.conv = make_conversation(
        "toy", {{'A', 1, 1, "qy", "do you live right in the city? /"},
                {'B', 2, 1, "ny", "yes, i do. /"}});
    s.tags = dact::TagSet::from_names({"qy", "ny", "sd"});
    dact::assign_tags(s.conv, s.tags);
    s.vocab = dact::Vocabulary::build({s.conv});
    dact::tokenize_conversation(s.conv, s.vocab);
    s.stats = dact::compute_length_stats({s.conv});
    return s;
}

/// Five-sentence conversation with varied lengths (for causality tests).
inline PreparedSetup five_sentence_setup() {
    PreparedSetup s;
    s.conv = make_conversation(
        "five", {{'A', 1, 1, "qw", "what do you do for a living? /"},
                 {'B', 2, 1, "sd", "i work at a bank downtown, /"},
                 {'A', 3, 1, "b", "uh-huh. /"},
                 {'B', 4, 1, "sv", "i think it's a pretty good job. /"},
                 {'A', 5, 1, "aa", "that sounds right. /"}});
    s.tags = dact::TagSet::from_names({"qw", "sd", "b", "sv", "aa"});
    dact::assign_tags(s.conv, s.tags);
    s.vocab = dact::Vocabulary::build({s.conv});
    dact::tokenize_conversation(s.conv, s.vocab);
    s.stats = dact::compute_length_stats({s.conv});
    return s;
}

/// Small full-architecture configuration used by model-level tests.
inline dact::ModelConfig small_full_config(std::size_t num_classes,
                                           std::uint64_t seed) {
    dact::ModelConfig cfg;
    cfg.sentence_encoder = dact::SentenceEncoderKind::Grnn;
    cfg.use_nontextual = true;
    cfg.context = dact::ContextKind::Grnn;
    cfg.sizes = dact::ModelSizes{5, 4, 3, 4};
    cfg.num_classes = num_classes;
    cfg.seed = seed;
    return cfg;
}

}  // namespace dact_tests
