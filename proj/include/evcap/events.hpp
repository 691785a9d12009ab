// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "evcap/errors.hpp"
#include "evcap/io.hpp"
#include "evcap/matrix.hpp"
#include "evcap/text.hpp"

namespace evcap {

/// Number of sound-event classes in the tagger's output vector.
inline constexpr size_t kEventClassCount = 527;

using EventLabelTable = std::vector<std::string>;

/// Indices of classes whose probability strictly exceeds `tau`.
inline std::vector<std::uint32_t> threshold_events(const Vec& probs, double tau = 0.1) {
    if (probs.size() != kEventClassCount)
        throw std::invalid_argument("threshold_events: expected " +
                                    std::to_string(kEventClassCount) + " probabilities, got " +
                                    std::to_string(probs.size()));
    if (tau < 0.0 || tau > 1.0)
        throw std::invalid_argument("threshold_events: tau must be in [0, 1]");
    std::vector<std::uint32_t> selected;
    for (size_t i = 0; i < probs.size(); ++i)
        if (probs[i] > tau) selected.push_back(static_cast<std::uint32_t>(i));
    return selected;
}

/// Splits a display label into lowercase tokens. Comma, parentheses and
/// hyphen separate tokens (labels use them as delimiters); any other
/// punctuation is dropped in place; whitespace separates.
inline TokenSeq tokenize_label(const std::string& label) {
    if (label.empty()) throw std::invalid_argument("tokenize_label: empty label");
    TokenSeq tokens;
    std::string cur;
    size_t i = 0;
    auto flush = [&]() {
        if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    };
    while (i < label.size()) {
        std::uint32_t cp = detail::next_codepoint(label, i);
        if (cp == ',' || cp == '(' || cp == ')' || cp == '-' || detail::is_space_cp(cp)) {
            flush();
            continue;
        }
        if (detail::is_punct_cp(cp)) continue;
        if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
        detail::append_utf8(cur, cp);
    }
    flush();
    return tokens;
}

/// Sorted, deduplicated token inventory over a label table.
class EventCorpus {
public:
    static EventCorpus build(const EventLabelTable& table) {
        std::set<std::string> uniq;
        for (const auto& label : table)
            for (const auto& tok : tokenize_label(label)) uniq.insert(tok);
        EventCorpus corpus;
        corpus.tokens_.assign(uniq.begin(), uniq.end());
        corpus.rebuild_index();
        return corpus;
    }

    size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

    /// Index of a token, or npos when absent.
    static constexpr size_t npos = static_cast<size_t>(-1);
    size_t index_of(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? npos : it->second;
    }

    std::string serialize() const { return join_lines(tokens_); }

    void save(const std::filesystem::path& path) const {
        write_file_atomic(path, serialize());
    }

    static EventCorpus parse(const std::string& text, const std::string& source) {
        auto lines = split_lines(text);
        if (lines.empty()) throw FormatError(source + ": empty event corpus");
        EventCorpus corpus;
        for (size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty())
                throw FormatError(source + ": empty token at line " +
                                  std::to_string(i + 1));
            if (i > 0 && !(lines[i - 1] < lines[i]))
                throw FormatError(source + ": tokens not strictly sorted at line " +
                                  std::to_string(i + 1));
        }
        corpus.tokens_ = std::move(lines);
        corpus.rebuild_index();
        return corpus;
    }

    static EventCorpus load(const std::filesystem::path& path) {
        auto bytes = read_file_bytes(path);
        return parse(std::string(bytes.begin(), bytes.end()), path.string());
    }

private:
    void rebuild_index() {
        index_.clear();
        for (size_t i = 0; i < tokens_.size(); ++i) index_[tokens_[i]] = i;
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, size_t> index_;
};

/// Multi-hot over corpus tokens: 1 where any selected label's tokenization
/// contains the token. Returned as doubles since it feeds the encoder.
inline Vec encode_clip_events(const std::vector<std::uint32_t>& selected,
                              const EventLabelTable& table, const EventCorpus& corpus) {
    Vec multi_hot(corpus.size(), 0.0);
    for (std::uint32_t idx : selected) {
        if (idx >= table.size())
            throw std::invalid_argument("encode_clip_events: class index " +
                                        std::to_string(idx) + " out of range (table size " +
                                        std::to_string(table.size()) + ")");
        for (const auto& tok : tokenize_label(table[idx])) {
            size_t pos = corpus.index_of(tok);
            if (pos == EventCorpus::npos)
                throw ValidationError("encode_clip_events: token \"" + tok +
                                      "\" of label \"" + table[idx] +
                                      "\" missing from the event corpus");
            multi_hot[pos] = 1.0;
        }
    }
    return multi_hot;
}

inline EventLabelTable load_label_table(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    if (lines.size() != kEventClassCount)
        throw ValidationError(path.string() + ": expected " +
                              std::to_string(kEventClassCount) + " labels, got " +
                              std::to_string(lines.size()) + " lines");
    for (size_t i = 0; i < lines.size(); ++i)
        if (lines[i].empty())
            throw ValidationError(path.string() + ": empty label at line " +
                                  std::to_string(i + 1));
    return lines;
}

inline void save_label_table(const EventLabelTable& table,
                             const std::filesystem::path& path) {
    write_file_atomic(path, join_lines(table));
}

} // namespace evcap
