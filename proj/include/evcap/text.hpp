// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evcap/errors.hpp"
#include "evcap/io.hpp"
#include "evcap/unicode_tables.hpp"

namespace evcap {

using TokenSeq = std::vector<std::string>;

inline constexpr std::uint32_t kPadId = 0;
inline constexpr std::uint32_t kSosId = 1;
inline constexpr std::uint32_t kEosId = 2;
inline constexpr std::uint32_t kUnkId = 3;
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kSosToken = "<sos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";

namespace detail {

inline bool in_ranges(std::uint32_t cp, const CodepointRange* ranges, size_t n) {
    size_t lo = 0, hi = n;
    while (lo < hi) {
        size_t mid = (lo + hi) / 2;
        if (cp < ranges[mid].lo)
            hi = mid;
        else if (cp > ranges[mid].hi)
            lo = mid + 1;
        else
            return true;
    }
    return false;
}

inline bool is_punct_cp(std::uint32_t cp) {
    return in_ranges(cp, kPunctRanges, std::size(kPunctRanges));
}

inline bool is_space_cp(std::uint32_t cp) {
    if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\v' || cp == '\f' || cp == '\r')
        return true;
    return in_ranges(cp, kSpaceRanges, std::size(kSpaceRanges));
}

/// Decodes one UTF-8 codepoint starting at `i`, advancing `i`. Malformed
/// sequences raise ValidationError.
inline std::uint32_t next_codepoint(std::string_view s, size_t& i) {
    const auto byte = [&](size_t k) { return static_cast<std::uint8_t>(s[k]); };
    const std::uint8_t b0 = byte(i);
    auto fail = [&]() -> std::uint32_t {
        throw ValidationError("malformed UTF-8 at byte " + std::to_string(i));
    };
    auto cont = [&](size_t k) {
        return k < s.size() && (byte(k) & 0xC0) == 0x80;
    };
    if (b0 < 0x80) {
        i += 1;
        return b0;
    }
    if ((b0 & 0xE0) == 0xC0) {
        if (!cont(i + 1)) return fail();
        std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x1F) << 6) | (byte(i + 1) & 0x3F);
        if (cp < 0x80) return fail();
        i += 2;
        return cp;
    }
    if ((b0 & 0xF0) == 0xE0) {
        if (!cont(i + 1) || !cont(i + 2)) return fail();
        std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x0F) << 12) |
                           ((byte(i + 1) & 0x3Fu) << 6) | (byte(i + 2) & 0x3Fu);
        if (cp < 0x800 || (cp >= 0xD800 && cp <= 0xDFFF)) return fail();
        i += 3;
        return cp;
    }
    if ((b0 & 0xF8) == 0xF0) {
        if (!cont(i + 1) || !cont(i + 2) || !cont(i + 3)) return fail();
        std::uint32_t cp = (static_cast<std::uint32_t>(b0 & 0x07) << 18) |
                           ((byte(i + 1) & 0x3Fu) << 12) | ((byte(i + 2) & 0x3Fu) << 6) |
                           (byte(i + 3) & 0x3Fu);
        if (cp < 0x10000 || cp > 0x10FFFF) return fail();
        i += 4;
        return cp;
    }
    return fail();
}

inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

} // namespace detail

/// Lowercases (ASCII), strips every Unicode punctuation character, and
/// splits on whitespace runs. No sentence markers are added.
inline TokenSeq tokenize_text(std::string_view raw) {
    TokenSeq tokens;
    std::string cur;
    size_t i = 0;
    while (i < raw.size()) {
        std::uint32_t cp = detail::next_codepoint(raw, i);
        if (detail::is_punct_cp(cp)) continue;
        if (detail::is_space_cp(cp)) {
            if (!cur.empty()) {
                tokens.push_back(std::move(cur));
                cur.clear();
            }
            continue;
        }
        if (cp >= 'A' && cp <= 'Z') cp += 'a' - 'A';
        detail::append_utf8(cur, cp);
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

/// tokenize_text plus `<sos>`/`<eos>` wrapping; the shape every caption
/// takes before vocabulary encoding.
inline TokenSeq normalize_caption(std::string_view raw) {
    TokenSeq tokens = tokenize_text(raw);
    TokenSeq out;
    out.reserve(tokens.size() + 2);
    out.push_back(kSosToken);
    for (auto& t : tokens) out.push_back(std::move(t));
    out.push_back(kEosToken);
    return out;
}

/// Token inventory with four fixed ids (0 `<pad>`, 1 `<sos>`, 2 `<eos>`,
/// 3 `<unk>`) followed by caption tokens in first-appearance order.
/// Immutable once built.
class Vocabulary {
public:
    Vocabulary() {
        for (const char* t : {kPadToken, kSosToken, kEosToken, kUnkToken}) add(t);
    }

    static Vocabulary build(const std::vector<TokenSeq>& captions) {
        if (captions.empty())
            throw std::invalid_argument("build_vocab: empty caption corpus");
        Vocabulary v;
        for (const auto& cap : captions)
            for (const auto& tok : cap) v.add(tok);
        return v;
    }

    size_t size() const { return tokens_.size(); }

    std::uint32_t encode(const std::string& token) const {
        auto it = ids_.find(token);
        return it == ids_.end() ? kUnkId : it->second;
    }

    std::vector<std::uint32_t> encode(const TokenSeq& seq) const {
        std::vector<std::uint32_t> ids;
        ids.reserve(seq.size());
        for (const auto& t : seq) ids.push_back(encode(t));
        return ids;
    }

    const std::string& decode(std::uint32_t id) const {
        if (id >= tokens_.size())
            throw std::invalid_argument("vocabulary: id " + std::to_string(id) +
                                        " out of range (size " +
                                        std::to_string(tokens_.size()) + ")");
        return tokens_[id];
    }

    bool contains(const std::string& token) const { return ids_.count(token) > 0; }

    const std::vector<std::string>& tokens() const { return tokens_; }

    std::string serialize() const { return join_lines(tokens_); }

    void save(const std::filesystem::path& path) const {
        write_file_atomic(path, serialize());
    }

    static Vocabulary parse(const std::string& text, const std::string& source) {
        auto lines = split_lines(text);
        if (lines.size() < 4)
            throw FormatError(source + ": vocabulary needs at least the 4 reserved tokens");
        const char* reserved[] = {kPadToken, kSosToken, kEosToken, kUnkToken};
        for (size_t i = 0; i < 4; ++i)
            if (lines[i] != reserved[i])
                throw FormatError(source + ": line " + std::to_string(i + 1) +
                                  " must be " + reserved[i] + ", got \"" + lines[i] + "\"");
        Vocabulary v;
        for (size_t i = 4; i < lines.size(); ++i) {
            if (lines[i].empty())
                throw FormatError(source + ": empty token at line " +
                                  std::to_string(i + 1));
            if (!v.add(lines[i]))
                throw FormatError(source + ": duplicate token \"" + lines[i] +
                                  "\" at line " + std::to_string(i + 1));
        }
        return v;
    }

    static Vocabulary load(const std::filesystem::path& path) {
        auto bytes = read_file_bytes(path);
        return parse(std::string(bytes.begin(), bytes.end()), path.string());
    }

private:
    bool add(const std::string& token) {
        auto [it, inserted] = ids_.emplace(token, static_cast<std::uint32_t>(tokens_.size()));
        if (inserted) tokens_.push_back(token);
        return inserted;
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, std::uint32_t> ids_;
};

/// Teacher-forcing expansion: a caption of L tokens yields L-1 pairs
/// (first k tokens, token k) for k = 1..L-1; the final target is `<eos>`.
template <typename Token>
std::vector<std::pair<std::vector<Token>, Token>>
partial_caption_pairs(const std::vector<Token>& seq) {
    if (seq.size() < 2)
        throw std::invalid_argument("partial_caption_pairs: need at least 2 tokens");
    std::vector<std::pair<std::vector<Token>, Token>> pairs;
    pairs.reserve(seq.size() - 1);
    for (size_t k = 1; k < seq.size(); ++k)
        pairs.emplace_back(std::vector<Token>(seq.begin(), seq.begin() + k), seq[k]);
    return pairs;
}

inline std::string join_tokens(const TokenSeq& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += ' ';
        out += tokens[i];
    }
    return out;
}

/// Markers stripped: the payload tokens between `<sos>` and `<eos>`.
inline TokenSeq strip_markers(const TokenSeq& seq) {
    TokenSeq out;
    for (const auto& t : seq)
        if (t != kSosToken && t != kEosToken && t != kPadToken) out.push_back(t);
    return out;
}

} // namespace evcap
