// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dact/corpus.hpp"
#include "dact/error.hpp"
#include "dact/model.hpp"
#include "dact/tensor.hpp"

namespace dact {

// Binary checkpoint layout (all multi-byte values little-endian):
//   magic "DACTCKPT", u32 version;
//   model config: u8 sentence_encoder (0 none / 1 cnn / 2 grnn),
//     u8 use_nontextual, u8 context (0 none / 1 grnn), u8 gru_bias,
//     u32 sizes (embedding, sentence, nontextual, context), u32 num_classes,
//     u64 seed;
//   u32 parameter count, then per parameter: string name, u32 rank,
//     u32 dims[rank], f64 values row-major;
//   u32 vocabulary size, then tokens in id order (specials last);
//   u32 class count, then collapsed tag names in id order;
//   u32 mapping entry count, then (raw, collapsed) string pairs;
//   f64 length range, f64 length standard deviation.
// Strings are u32 byte length + bytes. Values are always stored as 64-bit
// floats regardless of the in-memory precision.

inline constexpr char kCheckpointMagic[8] = {'D', 'A', 'C', 'T',
                                             'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {
        static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    write_bytes(out, b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    write_bytes(out, b, 8);
}

inline void write_f64(std::ostream& out, double v) {
    write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    write_bytes(out, s.data(), s.size());
}

inline void read_bytes(std::istream& in, void* p, std::size_t n,
                       const char* what) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw CheckpointError(std::string("checkpoint truncated while reading ") +
                              what);
    }
}

inline std::uint32_t read_u32(std::istream& in, const char* what) {
    unsigned char b[4];
    read_bytes(in, b, 4, what);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
           (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

inline std::uint64_t read_u64(std::istream& in, const char* what) {
    unsigned char b[8];
    read_bytes(in, b, 8, what);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

inline double read_f64(std::istream& in, const char* what) {
    return std::bit_cast<double>(read_u64(in, what));
}

inline std::string read_string(std::istream& in, const char* what) {
    const std::uint32_t n = read_u32(in, what);
    std::string s(n, '\0');
    if (n > 0) read_bytes(in, s.data(), n, what);
    return s;
}

}  // namespace detail

template <typename Real>
void write_checkpoint(std::ostream& out, const ModelT<Real>& model,
                      const Vocabulary& vocab, const TagSet& tags,
                      const LengthStats& stats) {
    using namespace detail;
    const ModelConfig& cfg = model.config();
    write_bytes(out, kCheckpointMagic, sizeof(kCheckpointMagic));
    write_u32(out, kCheckpointVersion);

    auto encoder_code = [&]() -> unsigned char {
        switch (cfg.sentence_encoder) {
            case SentenceEncoderKind::None: return 0;
            case SentenceEncoderKind::Cnn: return 1;
            case SentenceEncoderKind::Grnn: return 2;
        }
        return 0;
    };
    const unsigned char head[4] = {
        encoder_code(), static_cast<unsigned char>(cfg.use_nontextual ? 1 : 0),
        static_cast<unsigned char>(cfg.context == ContextKind::Grnn ? 1 : 0),
        static_cast<unsigned char>(cfg.gru_bias ? 1 : 0)};
    write_bytes(out, head, 4);
    write_u32(out, static_cast<std::uint32_t>(cfg.sizes.embedding));
    write_u32(out, static_cast<std::uint32_t>(cfg.sizes.sentence));
    write_u32(out, static_cast<std::uint32_t>(cfg.sizes.nontextual));
    write_u32(out, static_cast<std::uint32_t>(cfg.sizes.context));
    write_u32(out, static_cast<std::uint32_t>(cfg.num_classes));
    write_u64(out, cfg.seed);

    write_u32(out, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& [name, tensor] : model.params()) {
        write_string(out, name);
        write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) {
            write_u32(out, static_cast<std::uint32_t>(d));
        }
        for (Real v : tensor.data()) write_f64(out, static_cast<double>(v));
    }

    const std::vector<std::string> tokens = vocab.listing();
    write_u32(out, static_cast<std::uint32_t>(tokens.size()));
    for (const std::string& t : tokens) write_string(out, t);

    write_u32(out, static_cast<std::uint32_t>(tags.names().size()));
    for (const std::string& n : tags.names()) write_string(out, n);
    write_u32(out, static_cast<std::uint32_t>(tags.entries().size()));
    for (const auto& [raw, collapsed] : tags.entries()) {
        write_string(out, raw);
        write_string(out, collapsed);
    }

    write_f64(out, stats.range);
    write_f64(out, stats.std_dev);
}

template <typename Real>
void save_checkpoint(const std::filesystem::path& path,
                     const ModelT<Real>& model, const Vocabulary& vocab,
                     const TagSet& tags, const LengthStats& stats) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot open checkpoint for writing: " +
                              path.string());
    }
    write_checkpoint(out, model, vocab, tags, stats);
    out.flush();
    if (!out) {
        throw CheckpointError("failed writing checkpoint " + path.string());
    }
}

template <typename Real = double>
struct LoadedCheckpointT {
    ModelT<Real> model;
    Vocabulary vocab;
    TagSet tags;
    LengthStats stats;
};

using LoadedCheckpoint = LoadedCheckpointT<double>;

template <typename Real = double>
LoadedCheckpointT<Real> read_checkpoint(std::istream& in) {
    using namespace detail;
    char magic[8];
    read_bytes(in, magic, 8, "magic");
    if (!std::equal(magic, magic + 8, kCheckpointMagic)) {
        throw CheckpointError("not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = read_u32(in, "version");
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " +
                              std::to_string(version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    }

    unsigned char head[4];
    read_bytes(in, head, 4, "model config");
    ModelConfig cfg;
    switch (head[0]) {
        case 0: cfg.sentence_encoder = SentenceEncoderKind::None; break;
        case 1: cfg.sentence_encoder = SentenceEncoderKind::Cnn; break;
        case 2: cfg.sentence_encoder = SentenceEncoderKind::Grnn; break;
        default:
            throw CheckpointError("bad sentence encoder code " +
                                  std::to_string(head[0]));
    }
    cfg.use_nontextual = head[1] != 0;
    if (head[2] > 1) {
        throw CheckpointError("bad context code " + std::to_string(head[2]));
    }
    cfg.context = head[2] == 1 ? ContextKind::Grnn : ContextKind::None;
    cfg.gru_bias = head[3] != 0;
    cfg.sizes.embedding = read_u32(in, "embedding size");
    cfg.sizes.sentence = read_u32(in, "sentence size");
    cfg.sizes.nontextual = read_u32(in, "nontextual size");
    cfg.sizes.context = read_u32(in, "context size");
    cfg.num_classes = read_u32(in, "class count");
    cfg.seed = read_u64(in, "seed");

    const std::uint32_t param_count = read_u32(in, "parameter count");
    std::vector<std::pair<std::string, Tensor>> params;
    params.reserve(param_count);
    for (std::uint32_t i = 0; i < param_count; ++i) {
        std::string name = read_string(in, "parameter name");
        const std::uint32_t rank = read_u32(in, "parameter rank");
        if (rank == 0 || rank > 3) {
            throw CheckpointError("parameter '" + name + "' has rank " +
                                  std::to_string(rank));
        }
        Shape shape(rank);
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape[d] = read_u32(in, "parameter shape");
        }
        Tensor t(shape);
        for (double& v : t.mutable_data()) v = read_f64(in, "parameter values");
        params.emplace_back(std::move(name), std::move(t));
    }

    const std::uint32_t vocab_count = read_u32(in, "vocabulary size");
    std::vector<std::string> tokens;
    tokens.reserve(vocab_count);
    for (std::uint32_t i = 0; i < vocab_count; ++i) {
        tokens.push_back(read_string(in, "vocabulary token"));
    }

    const std::uint32_t class_count = read_u32(in, "class count");
    std::vector<std::string> names;
    names.reserve(class_count);
    for (std::uint32_t i = 0; i < class_count; ++i) {
        names.push_back(read_string(in, "tag name"));
    }
    const std::uint32_t entry_count = read_u32(in, "tag mapping count");
    std::vector<std::pair<std::string, std::string>> entries;
    entries.reserve(entry_count);
    for (std::uint32_t i = 0; i < entry_count; ++i) {
        std::string raw = read_string(in, "tag mapping raw");
        std::string collapsed = read_string(in, "tag mapping target");
        entries.emplace_back(std::move(raw), std::move(collapsed));
    }

    LengthStats stats;
    stats.range = read_f64(in, "length range");
    stats.std_dev = read_f64(in, "length std");

    Vocabulary vocab = Vocabulary::from_tokens(std::move(tokens));
    TagSet tags;
    try {
        tags = TagSet::from_parts(names, entries);
    } catch (const DataError& e) {
        throw CheckpointError(std::string("bad tag section: ") + e.what());
    }
    if (tags.size() != cfg.num_classes) {
        throw CheckpointError("checkpoint lists " + std::to_string(tags.size()) +
                              " tag classes but the model has " +
                              std::to_string(cfg.num_classes));
    }

    ModelT<Real> model = [&]() {
        try {
            return ModelT<Real>(cfg, vocab.size());
        } catch (const ConfigError& e) {
            throw CheckpointError(std::string("bad model config: ") + e.what());
        }
    }();
    if (params.size() != model.params().size()) {
        throw CheckpointError("checkpoint has " + std::to_string(params.size()) +
                              " parameters but the config needs " +
                              std::to_string(model.params().size()));
    }
    for (auto& [name, stored] : params) {
        if (!model.params().contains(name)) {
            throw CheckpointError("unexpected parameter '" + name + "'");
        }
        TensorT<Real>& dst = model.params().at(name);
        if (stored.shape() != dst.shape()) {
            throw CheckpointError("parameter '" + name + "' has shape " +
                                  shape_to_string(stored.shape()) +
                                  ", expected " + shape_to_string(dst.shape()));
        }
        auto d = dst.mutable_data();
        auto s = stored.data();
        for (std::size_t i = 0; i < d.size(); ++i) {
            d[i] = static_cast<Real>(s[i]);
        }
    }

    return LoadedCheckpointT<Real>{std::move(model), std::move(vocab),
                                   std::move(tags), stats};
}

template <typename Real = double>
LoadedCheckpointT<Real> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open checkpoint " + path.string());
    }
    return read_checkpoint<Real>(in);
}

}  // namespace dact
