// Copyright (c) 2026 The dact authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dact/error.hpp"
#include "dact/tensor.hpp"

namespace dact {

// ---------------------------------------------------------------------------
// Records and conversations
// ---------------------------------------------------------------------------

enum class Caller { A, B };

inline char caller_letter(Caller c) { return c == Caller::A ? 'A' : 'B'; }

/// One tagged sub-utterance. `word_count` is the token count of the raw text
/// (zero for whitespace-only text); `tokens` holds vocabulary ids and
/// substitutes the empty-sentence id when there are no words.
struct UtteranceRecord {
    std::string conversation_id;
    Caller caller = Caller::A;
    std::size_t utterance_index = 0;
    std::size_t sub_utterance_index = 0;
    std::string act_tag_raw;
    std::optional<std::size_t> act_tag;  // collapsed class id, once assigned
    std::string text;
    std::vector<std::size_t> tokens;
    std::size_t word_count = 0;
};

struct Conversation {
    std::string id;
    std::vector<UtteranceRecord> records;
};

/// Checks the structural invariants: non-empty, a single shared conversation
/// id, indices non-decreasing, and the sub-utterance counter restarting at 1
/// whenever the utterance index advances.
inline void validate_conversation(const Conversation& conv) {
    if (conv.records.empty()) {
        throw DataError("conversation '" + conv.id + "' has no records");
    }
    for (std::size_t i = 0; i < conv.records.size(); ++i) {
        const UtteranceRecord& r = conv.records[i];
        if (r.conversation_id != conv.id) {
            throw DataError("conversation '" + conv.id + "' record " +
                            std::to_string(i + 1) + " carries id '" +
                            r.conversation_id + "'");
        }
        if (r.utterance_index == 0 || r.sub_utterance_index == 0) {
            throw DataError("conversation '" + conv.id + "' record " +
                            std::to_string(i + 1) + " has a zero index");
        }
        if (i == 0) continue;
        const UtteranceRecord& p = conv.records[i - 1];
        if (r.utterance_index < p.utterance_index) {
            throw DataError("conversation '" + conv.id + "': utterance index " +
                            std::to_string(r.utterance_index) + " after " +
                            std::to_string(p.utterance_index));
        }
        if (r.utterance_index == p.utterance_index) {
            if (r.sub_utterance_index < p.sub_utterance_index) {
                throw DataError("conversation '" + conv.id +
                                "': sub-utterance index " +
                                std::to_string(r.sub_utterance_index) + " after " +
                                std::to_string(p.sub_utterance_index) +
                                " within utterance " +
                                std::to_string(r.utterance_index));
            }
        } else if (r.sub_utterance_index != 1) {
            throw DataError("conversation '" + conv.id + "': utterance " +
                            std::to_string(r.utterance_index) +
                            " starts at sub-utterance " +
                            std::to_string(r.sub_utterance_index) + ", expected 1");
        }
    }
}

// ---------------------------------------------------------------------------
// Conversation CSV
// ---------------------------------------------------------------------------

inline constexpr std::string_view kConversationCsvHeader =
    "conversation_id,caller,utterance_index,sub_utterance_index,act_tag,text";

namespace detail {

inline std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

inline std::size_t parse_positive_int(std::string_view field,
                                      const std::string& source,
                                      std::size_t line_no, const char* what) {
    std::size_t value = 0;
    const auto [ptr, ec] =
        std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc() || ptr != field.data() + field.size() || value == 0) {
        throw ParseError(source + ":" + std::to_string(line_no) + ": " + what +
                         " must be a positive integer, got '" +
                         std::string(field) + "'");
    }
    return value;
}

}  // namespace detail

/// Reads one conversation from the normalized CSV format: a fixed header row,
/// then one record per line with the text field double-quoted (embedded
/// quotes doubled). Unquoted text is accepted on input when it contains no
/// commas; the serializer always quotes.
inline Conversation parse_conversation_csv(std::istream& in,
                                           const std::string& source) {
    Conversation conv;
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw ParseError(source + ": empty file");
    }
    ++line_no;
    if (detail::strip_cr(line) != kConversationCsvHeader) {
        throw ParseError(source + ":1: bad header row, expected '" +
                         std::string(kConversationCsvHeader) + "'");
    }
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = detail::strip_cr(line);
        if (row.empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);

        // Five plain comma-separated fields, then the text field.
        std::array<std::string_view, 5> head;
        std::size_t pos = 0;
        for (std::size_t f = 0; f < 5; ++f) {
            const std::size_t comma = row.find(',', pos);
            if (comma == std::string_view::npos) {
                throw ParseError(where + ": expected 6 fields");
            }
            head[f] = row.substr(pos, comma - pos);
            pos = comma + 1;
        }
        std::string_view rest = row.substr(pos);

        UtteranceRecord r;
        r.conversation_id = std::string(head[0]);
        if (r.conversation_id.empty()) {
            throw ParseError(where + ": empty conversation id");
        }
        if (head[1] == "A") {
            r.caller = Caller::A;
        } else if (head[1] == "B") {
            r.caller = Caller::B;
        } else {
            throw ParseError(where + ": caller must be A or B, got '" +
                             std::string(head[1]) + "'");
        }
        r.utterance_index =
            detail::parse_positive_int(head[2], source, line_no, "utterance index");
        r.sub_utterance_index = detail::parse_positive_int(
            head[3], source, line_no, "sub-utterance index");
        r.act_tag_raw = std::string(head[4]);

        if (!rest.empty() && rest.front() == '"') {
            std::string text;
            bool closed = false;
            std::size_t i = 1;
            for (; i < rest.size(); ++i) {
                if (rest[i] == '"') {
                    if (i + 1 < rest.size() && rest[i + 1] == '"') {
                        text.push_back('"');
                        ++i;
                    } else {
                        closed = true;
                        ++i;
                        break;
                    }
                } else {
                    text.push_back(rest[i]);
                }
            }
            if (!closed || i != rest.size()) {
                throw ParseError(where + ": malformed quoted text field");
            }
            r.text = std::move(text);
        } else {
            if (rest.find(',') != std::string_view::npos) {
                throw ParseError(where + ": unquoted text contains a comma");
            }
            r.text = std::string(rest);
        }

        if (conv.records.empty()) conv.id = r.conversation_id;
        conv.records.push_back(std::move(r));
    }
    validate_conversation(conv);
    return conv;
}

inline Conversation load_conversation_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open conversation file " + path.string());
    }
    return parse_conversation_csv(in, path.filename().string());
}

/// Writes the normalized form: header row, LF endings, text always quoted.
inline void write_conversation_csv(std::ostream& out, const Conversation& conv) {
    out << kConversationCsvHeader << '\n';
    for (const UtteranceRecord& r : conv.records) {
        std::string quoted;
        quoted.reserve(r.text.size() + 2);
        quoted.push_back('"');
        for (char c : r.text) {
            if (c == '"') quoted.push_back('"');
            quoted.push_back(c);
        }
        quoted.push_back('"');
        out << r.conversation_id << ',' << caller_letter(r.caller) << ','
            << r.utterance_index << ',' << r.sub_utterance_index << ','
            << r.act_tag_raw << ',' << quoted << '\n';
    }
}

inline std::string serialize_conversation_csv(const Conversation& conv) {
    std::ostringstream out;
    write_conversation_csv(out, conv);
    return out.str();
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

/// Lowercases ASCII letters and splits on whitespace. Disfluency markup,
/// punctuation, and partial words stay attached to their tokens exactly as
/// they appear; whitespace-only text yields an empty list.
inline std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!current.empty()) {
                out.push_back(std::move(current));
                current.clear();
            }
        } else {
            current.push_back(static_cast<char>(
                std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

// ---------------------------------------------------------------------------
// Act-tag collapsing
// ---------------------------------------------------------------------------

/// Maps raw act tags to collapsed classes. Entries come from a TSV file
/// (`raw_prefix<TAB>collapsed`, '#' comments); lookup is exact match first,
/// then the longest prefix present in the table. Class ids follow the first
/// appearance order of collapsed names in the file.
class TagSet {
public:
    static TagSet from_stream(std::istream& in, const std::string& source) {
        TagSet t;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view row = detail::strip_cr(line);
            if (row.empty() || row.front() == '#') continue;
            const std::size_t tab = row.find('\t');
            if (tab == std::string_view::npos || tab == 0 ||
                tab + 1 >= row.size()) {
                throw ParseError(source + ":" + std::to_string(line_no) +
                                 ": expected 'raw<TAB>collapsed'");
            }
            t.add_entry(std::string(row.substr(0, tab)),
                        std::string(row.substr(tab + 1)));
        }
        if (t.names_.empty()) {
            throw DataError(source + ": tag mapping defines no classes");
        }
        return t;
    }

    static TagSet load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) {
            throw DataError("cannot open tag mapping " + path.string());
        }
        return from_stream(in, path.filename().string());
    }

    /// Rebuilds a bare class index (no raw mapping) from an ordered name
    /// list, as stored in checkpoints. Each name maps to itself.
    static TagSet from_names(const std::vector<std::string>& names) {
        TagSet t;
        for (const std::string& n : names) t.add_entry(n, n);
        return t;
    }

    /// Rebuilds from the serialized form: the ordered class names plus the
    /// raw-prefix entries.
    static TagSet from_parts(
        const std::vector<std::string>& names,
        const std::vector<std::pair<std::string, std::string>>& entries) {
        TagSet t;
        for (const std::string& n : names) {
            if (t.name_index_.count(n)) {
                throw DataError("duplicate tag class '" + n + "'");
            }
            t.name_index_.emplace(n, t.names_.size());
            t.names_.push_back(n);
        }
        for (const auto& [raw, collapsed] : entries) {
            if (!t.name_index_.count(collapsed)) {
                throw DataError("tag mapping entry '" + raw +
                                "' targets unknown class '" + collapsed + "'");
            }
            if (t.raw_index_.count(raw)) {
                throw DataError("duplicate tag mapping entry for '" + raw + "'");
            }
            t.raw_index_.emplace(raw, t.mapping_.size());
            t.mapping_.emplace_back(raw, collapsed);
        }
        if (t.names_.empty()) {
            throw DataError("tag set with no classes");
        }
        return t;
    }

    const std::vector<std::pair<std::string, std::string>>& entries() const {
        return mapping_;
    }

    void add_entry(std::string raw, std::string collapsed) {
        if (raw_index_.count(raw)) {
            throw DataError("duplicate tag mapping entry for '" + raw + "'");
        }
        raw_index_.emplace(raw, mapping_.size());
        if (!name_index_.count(collapsed)) {
            name_index_.emplace(collapsed, names_.size());
            names_.push_back(collapsed);
        }
        mapping_.emplace_back(std::move(raw), std::move(collapsed));
    }

    /// Registers the continuation marker '+' as its own class (used when
    /// continuations are kept as records instead of merged away).
    void ensure_continuation_class() {
        if (!raw_index_.count("+")) add_entry("+", "+");
    }

    std::size_t size() const { return names_.size(); }

    const std::vector<std::string>& names() const { return names_; }

    const std::string& name_of(std::size_t id) const {
        if (id >= names_.size()) {
            throw IndexError("tag class " + std::to_string(id) +
                             " out of range for " + std::to_string(names_.size()) +
                             " classes");
        }
        return names_[id];
    }

    std::size_t id_of(const std::string& collapsed) const {
        auto it = name_index_.find(collapsed);
        if (it == name_index_.end()) {
            throw UnknownTagError("unknown collapsed tag '" + collapsed + "'");
        }
        return it->second;
    }

    const std::string& collapse(const std::string& raw) const {
        auto it = raw_index_.find(raw);
        if (it != raw_index_.end()) return mapping_[it->second].second;
        const std::pair<std::string, std::string>* best = nullptr;
        for (const auto& entry : mapping_) {
            if (raw.size() > entry.first.size() &&
                raw.compare(0, entry.first.size(), entry.first) == 0) {
                if (!best || entry.first.size() > best->first.size()) {
                    best = &entry;
                }
            }
        }
        if (!best) {
            throw UnknownTagError("no tag mapping matches raw tag '" + raw + "'");
        }
        return best->second;
    }

    std::size_t collapse_id(const std::string& raw) const {
        return name_index_.at(collapse(raw));
    }

private:
    std::vector<std::pair<std::string, std::string>> mapping_;  // file order
    std::unordered_map<std::string, std::size_t> raw_index_;
    std::vector<std::string> names_;  // class id -> collapsed name
    std::unordered_map<std::string, std::size_t> name_index_;
};

// ---------------------------------------------------------------------------
// Continuation handling and tag assignment
// ---------------------------------------------------------------------------

/// Folds every '+'-tagged record (a continuation of the same speaker's
/// previous sub-utterance) into that earlier record: text is appended with a
/// separating space and the earlier tag is kept. A continuation with no
/// earlier same-speaker record is dropped.
inline void merge_continuations(Conversation& conv) {
    std::vector<UtteranceRecord> kept;
    kept.reserve(conv.records.size());
    for (UtteranceRecord& r : conv.records) {
        if (r.act_tag_raw != "+") {
            kept.push_back(std::move(r));
            continue;
        }
        UtteranceRecord* target = nullptr;
        for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
            if (it->caller == r.caller) {
                target = &*it;
                break;
            }
        }
        if (target) {
            target->text += ' ';
            target->text += r.text;
        }
    }
    conv.records = std::move(kept);
    validate_conversation(conv);
}

/// Fills the collapsed class id for every record with a non-empty raw tag.
inline void assign_tags(Conversation& conv, const TagSet& tags) {
    for (UtteranceRecord& r : conv.records) {
        if (!r.act_tag_raw.empty()) r.act_tag = tags.collapse_id(r.act_tag_raw);
    }
}

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

/// Dense token ids in first-appearance order over the training split, with
/// two trailing special ids: unknown (test-time tokens never seen in
/// training) and empty (whitespace-only sentences). Identified by position,
/// not by spelling, so real tokens can never collide with them.
class Vocabulary {
public:
    static constexpr std::string_view kUnkSpelling = "<unk>";
    static constexpr std::string_view kEmptySpelling = "<empty>";

    static Vocabulary build(const std::vector<Conversation>& train) {
        Vocabulary v;
        for (const Conversation& conv : train) {
            for (const UtteranceRecord& r : conv.records) {
                for (std::string& tok : tokenize(r.text)) {
                    if (!v.index_.count(tok)) {
                        v.index_.emplace(tok, v.tokens_.size());
                        v.tokens_.push_back(std::move(tok));
                    }
                }
            }
        }
        v.finish();
        return v;
    }

    /// Rebuilds from an ordered token list whose final two entries are the
    /// unknown and empty specials (the checkpoint / vocab-file layout).
    static Vocabulary from_tokens(std::vector<std::string> ordered) {
        if (ordered.size() < 2) {
            throw DataError("vocabulary listing needs at least the two specials");
        }
        Vocabulary v;
        ordered.resize(ordered.size() - 2);  // specials are positional
        v.tokens_ = std::move(ordered);
        for (std::size_t i = 0; i < v.tokens_.size(); ++i) {
            if (!v.index_.emplace(v.tokens_[i], i).second) {
                throw DataError("duplicate vocabulary token '" + v.tokens_[i] + "'");
            }
        }
        v.finish();
        return v;
    }

    std::size_t size() const { return tokens_.size(); }  // includes specials
    std::size_t unk_id() const { return unk_id_; }
    std::size_t empty_id() const { return empty_id_; }

    bool contains(const std::string& token) const {
        return index_.count(token) != 0;
    }

    std::size_t id_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? unk_id_ : it->second;
    }

    const std::string& spelling_of(std::size_t id) const {
        if (id == unk_id_) {
            static const std::string u{kUnkSpelling};
            return u;
        }
        if (id == empty_id_) {
            static const std::string e{kEmptySpelling};
            return e;
        }
        if (id >= tokens_.size()) {
            throw IndexError("token id " + std::to_string(id) +
                             " out of range for vocabulary of " +
                             std::to_string(tokens_.size()));
        }
        return tokens_[id];
    }

    /// Ordered listing including the specials, as written to vocab files and
    /// checkpoints.
    std::vector<std::string> listing() const {
        std::vector<std::string> out = tokens_;
        out.resize(unk_id_);  // drop the specials' placeholder area, if any
        out.emplace_back(kUnkSpelling);
        out.emplace_back(kEmptySpelling);
        return out;
    }

private:
    void finish() {
        unk_id_ = tokens_.size();
        empty_id_ = tokens_.size() + 1;
        tokens_.emplace_back(kUnkSpelling);
        tokens_.emplace_back(kEmptySpelling);
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t unk_id_ = 0;
    std::size_t empty_id_ = 0;
};

/// Fills token ids and the raw word count for every record; empty token
/// lists become the single empty-sentence id.
inline void tokenize_conversation(Conversation& conv, const Vocabulary& vocab) {
    for (UtteranceRecord& r : conv.records) {
        const std::vector<std::string> words = tokenize(r.text);
        r.word_count = words.size();
        r.tokens.clear();
        if (words.empty()) {
            r.tokens.push_back(vocab.empty_id());
        } else {
            r.tokens.reserve(words.size());
            for (const std::string& w : words) r.tokens.push_back(vocab.id_of(w));
        }
    }
}

// ---------------------------------------------------------------------------
// Non-textual features
// ---------------------------------------------------------------------------

/// Word-length normalization constants, frozen from the training split:
/// range = max - min of sentence word counts, std_dev = population standard
/// deviation of the same counts.
struct LengthStats {
    double range = 0.0;
    double std_dev = 0.0;
};

inline LengthStats compute_length_stats(const std::vector<Conversation>& train) {
    std::vector<double> lengths;
    for (const Conversation& conv : train) {
        for (const UtteranceRecord& r : conv.records) {
            lengths.push_back(static_cast<double>(r.word_count));
        }
    }
    if (lengths.empty()) {
        throw EmptySequenceError("length statistics over an empty training split");
    }
    const auto [lo, hi] = std::minmax_element(lengths.begin(), lengths.end());
    double mean = 0.0;
    for (double l : lengths) mean += l;
    mean /= static_cast<double>(lengths.size());
    double var = 0.0;
    for (double l : lengths) var += (l - mean) * (l - mean);
    var /= static_cast<double>(lengths.size());
    LengthStats stats{*hi - *lo, std::sqrt(var)};
    if (!(stats.std_dev > 0.0)) {
        throw DataError("degenerate training length distribution (zero spread)");
    }
    return stats;
}

inline double length_norm(std::size_t word_count, const LengthStats& stats) {
    return (static_cast<double>(word_count) - stats.range / 2.0) / stats.std_dev;
}

/// The four per-sentence side features: utterance index, sub-utterance
/// index, the new-turn indicator (1 iff the sub-utterance index is 1), and
/// the normalized word length. Indices enter as raw values.
template <typename Real = double>
TensorT<Real> nontextual_features(const UtteranceRecord& r,
                                  const LengthStats& stats) {
    TensorT<Real> out(Shape{4});
    auto d = out.mutable_data();
    d[0] = static_cast<Real>(r.utterance_index);
    d[1] = static_cast<Real>(r.sub_utterance_index);
    d[2] = r.sub_utterance_index == 1 ? Real(1) : Real(0);
    d[3] = static_cast<Real>(length_norm(r.word_count, stats));
    return out;
}

// ---------------------------------------------------------------------------
// Split manifests and corpus loading
// ---------------------------------------------------------------------------

struct SplitManifest {
    std::vector<std::string> train, valid, test;
};

namespace detail {

inline std::vector<std::string> read_id_list(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open split manifest " + path.string());
    }
    std::vector<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        std::string_view row = strip_cr(line);
        while (!row.empty() && std::isspace(static_cast<unsigned char>(row.back())))
            row.remove_suffix(1);
        while (!row.empty() && std::isspace(static_cast<unsigned char>(row.front())))
            row.remove_prefix(1);
        if (!row.empty()) ids.emplace_back(row);
    }
    return ids;
}

}  // namespace detail

inline SplitManifest load_split_manifest(const std::filesystem::path& train,
                                         const std::filesystem::path& valid,
                                         const std::filesystem::path& test) {
    SplitManifest m{detail::read_id_list(train), detail::read_id_list(valid),
                    detail::read_id_list(test)};
    std::set<std::string> seen;
    for (const auto* list : {&m.train, &m.valid, &m.test}) {
        for (const std::string& id : *list) {
            if (!seen.insert(id).second) {
                throw DataError("conversation '" + id +
                                "' appears in more than one split");
            }
        }
    }
    if (m.train.empty()) {
        throw DataError("training split manifest lists no conversations");
    }
    return m;
}

struct CorpusSplits {
    std::vector<Conversation> train, valid, test;
};

/// Loads `<id>.csv` from the conversation directory for every manifest id.
inline CorpusSplits load_splits(const std::filesystem::path& conversations_dir,
                                const SplitManifest& manifest) {
    auto load_list = [&](const std::vector<std::string>& ids) {
        std::vector<Conversation> out;
        out.reserve(ids.size());
        for (const std::string& id : ids) {
            Conversation conv =
                load_conversation_csv(conversations_dir / (id + ".csv"));
            if (conv.id != id) {
                throw DataError("file for conversation '" + id +
                                "' contains id '" + conv.id + "'");
            }
            out.push_back(std::move(conv));
        }
        return out;
    };
    return CorpusSplits{load_list(manifest.train), load_list(manifest.valid),
                        load_list(manifest.test)};
}

/// Advisory comparison with the reference full-corpus split sizes. Small
/// (clearly synthetic) corpora stay silent; corpus-sized loads that do not
/// match produce a warning message for the caller to print.
struct SplitCountCheck {
    bool matches_reference = false;
    std::string message;  // empty when there is nothing to say
};

inline SplitCountCheck check_split_counts(const CorpusSplits& splits) {
    const std::size_t tr = splits.train.size();
    const std::size_t va = splits.valid.size();
    const std::size_t te = splits.test.size();
    SplitCountCheck check;
    if (tr == 1115 && va == 19 && te == 19) {
        check.matches_reference = true;
        check.message = "split sizes match the reference corpus (1115/19/19)";
    } else if (tr >= 500) {
        check.message = "warning: split sizes " + std::to_string(tr) + "/" +
                        std::to_string(va) + "/" + std::to_string(te) +
                        " differ from the reference corpus split 1115/19/19";
    }
    return check;
}

// ---------------------------------------------------------------------------
// Pretrained embeddings
// ---------------------------------------------------------------------------

/// Reads a text embedding file (optional "V D" header, then one token plus D
/// reals per line) into a [V x dim] table over the vocabulary. Tokens absent
/// from the file draw uniform [-0.05, 0.05] rows; the unknown-token row is
/// the mean of all rows loaded from the file; the empty-sentence row is zero.
template <typename Real = double>
TensorT<Real> load_pretrained_embeddings(std::istream& in,
                                         const std::string& source,
                                         const Vocabulary& vocab,
                                         std::size_t dim, std::mt19937_64& rng) {
    TensorT<Real> table(Shape{vocab.size(), dim});
    std::vector<bool> covered(vocab.size(), false);
    std::vector<double> mean(dim, 0.0);
    std::size_t loaded = 0;

    std::string line;
    std::size_t line_no = 0;
    bool first_content_line = true;
    auto data = table.mutable_data();
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view row = detail::strip_cr(line);
        if (row.empty()) continue;
        std::istringstream fields{std::string(row)};
        std::string token;
        fields >> token;
        if (first_content_line) {
            first_content_line = false;
            // A leading "V D" count header is optional.
            std::size_t header_v = 0, header_d = 0;
            std::istringstream probe{std::string(row)};
            if (probe >> header_v >> header_d && (probe >> std::ws).eof() &&
                header_v > 0) {
                if (header_d != dim) {
                    throw ParseError(source + ":" + std::to_string(line_no) +
                                     ": embedding file declares dimension " +
                                     std::to_string(header_d) +
                                     " but the model uses " + std::to_string(dim));
                }
                continue;
            }
        }
        std::vector<double> values;
        values.reserve(dim);
        double v = 0.0;
        while (fields >> v) values.push_back(v);
        if (values.size() != dim) {
            throw ParseError(source + ":" + std::to_string(line_no) +
                             ": expected " + std::to_string(dim) +
                             " values for token '" + token + "', got " +
                             std::to_string(values.size()));
        }
        if (!vocab.contains(token)) continue;
        const std::size_t id = vocab.id_of(token);
        if (!covered[id]) {
            ++loaded;
        } else {
            // A token listed twice: remove its previous mean contribution.
            for (std::size_t j = 0; j < dim; ++j) mean[j] -= data[id * dim + j];
        }
        covered[id] = true;
        for (std::size_t j = 0; j < dim; ++j) {
            data[id * dim + j] = static_cast<Real>(values[j]);
            mean[j] += values[j];
        }
    }

    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        if (i == vocab.unk_id() || i == vocab.empty_id() || covered[i]) continue;
        for (std::size_t j = 0; j < dim; ++j) {
            data[i * dim + j] = static_cast<Real>(dist(rng));
        }
    }
    for (std::size_t j = 0; j < dim; ++j) {
        const double unk =
            loaded > 0 ? mean[j] / static_cast<double>(loaded) : dist(rng);
        data[vocab.unk_id() * dim + j] = static_cast<Real>(unk);
        data[vocab.empty_id() * dim + j] = Real(0);
    }
    return table;
}

template <typename Real = double>
TensorT<Real> load_pretrained_embeddings(const std::filesystem::path& path,
                                         const Vocabulary& vocab,
                                         std::size_t dim, std::mt19937_64& rng) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open embedding file " + path.string());
    }
    return load_pretrained_embeddings<Real>(in, path.filename().string(), vocab,
                                            dim, rng);
}

// ---------------------------------------------------------------------------
// End-to-end corpus loading
// ---------------------------------------------------------------------------

struct CorpusOptions {
    bool merge_continuations = true;  // false keeps '+' as its own class
};

/// Fully prepared corpus: split conversations with tags and token ids
/// assigned, plus the artifacts frozen from the training split.
struct LoadedCorpus {
    CorpusSplits splits;
    Vocabulary vocab;
    TagSet tags;
    LengthStats stats;
};

inline LoadedCorpus load_corpus(const std::filesystem::path& conversations_dir,
                                const SplitManifest& manifest,
                                const std::filesystem::path& tag_map_path,
                                const CorpusOptions& options = {}) {
    LoadedCorpus corpus;
    corpus.tags = TagSet::load(tag_map_path);
    if (!options.merge_continuations) corpus.tags.ensure_continuation_class();
    corpus.splits = load_splits(conversations_dir, manifest);
    for (auto* split :
         {&corpus.splits.train, &corpus.splits.valid, &corpus.splits.test}) {
        for (Conversation& conv : *split) {
            if (options.merge_continuations) merge_continuations(conv);
            assign_tags(conv, corpus.tags);
        }
    }
    corpus.vocab = Vocabulary::build(corpus.splits.train);
    for (auto* split :
         {&corpus.splits.train, &corpus.splits.valid, &corpus.splits.test}) {
        for (Conversation& conv : *split) {
            tokenize_conversation(conv, corpus.vocab);
        }
    }
    corpus.stats = compute_length_stats(corpus.splits.train);
    return corpus;
}

}  // namespace dact
