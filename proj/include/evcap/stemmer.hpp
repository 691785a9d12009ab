// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

namespace evcap {

namespace detail {

inline bool porter_is_consonant(std::string_view w, size_t i) {
    char c = w[i];
    if (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') return false;
    if (c == 'y') return i == 0 || !porter_is_consonant(w, i - 1);
    return true;
}

/// Counts VC sequences in the [C](VC)^m[V] decomposition.
inline int porter_measure(std::string_view w) {
    int m = 0;
    bool prev_vowel = false;
    for (size_t i = 0; i < w.size(); ++i) {
        bool v = !porter_is_consonant(w, i);
        if (prev_vowel && !v) ++m;
        prev_vowel = v;
    }
    return m;
}

inline bool porter_has_vowel(std::string_view w) {
    for (size_t i = 0; i < w.size(); ++i)
        if (!porter_is_consonant(w, i)) return true;
    return false;
}

inline bool porter_ends_double_consonant(std::string_view w) {
    return w.size() >= 2 && w[w.size() - 1] == w[w.size() - 2] &&
           porter_is_consonant(w, w.size() - 1);
}

inline bool porter_ends_cvc(std::string_view w) {
    if (w.size() < 3) return false;
    if (!(porter_is_consonant(w, w.size() - 3) && !porter_is_consonant(w, w.size() - 2) &&
          porter_is_consonant(w, w.size() - 1)))
        return false;
    char last = w.back();
    return last != 'w' && last != 'x' && last != 'y';
}

inline bool ends_with(std::string_view w, std::string_view suf) {
    return w.size() >= suf.size() && w.substr(w.size() - suf.size()) == suf;
}

struct SuffixRule {
    std::string_view suffix;
    std::string_view replacement;
};

/// Longest-match semantics of the original algorithm: only the longest
/// matching suffix is considered; if its condition fails nothing changes.
template <size_t N>
void porter_replace_longest(std::string& w, const SuffixRule (&rules)[N], int min_measure) {
    const SuffixRule* best = nullptr;
    for (const auto& rule : rules)
        if (ends_with(w, rule.suffix) && (!best || rule.suffix.size() > best->suffix.size()))
            best = &rule;
    if (!best) return;
    std::string_view stem = std::string_view(w).substr(0, w.size() - best->suffix.size());
    if (porter_measure(stem) > min_measure)
        w = std::string(stem) + std::string(best->replacement);
}

} // namespace detail

/// Porter stemmer, original 1980 formulation. ASCII-oriented: bytes outside
/// a-z are treated as consonants. Input is ASCII-lowercased; words of
/// length <= 2 pass through.
inline std::string porter_stem(std::string_view word) {
    using namespace detail;
    std::string w;
    w.reserve(word.size());
    for (char c : word) w += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    if (w.size() <= 2) return w;

    // step 1a
    if (ends_with(w, "sses")) {
        w.resize(w.size() - 2);
    } else if (ends_with(w, "ies")) {
        w.resize(w.size() - 2);
    } else if (ends_with(w, "ss")) {
        // keep
    } else if (ends_with(w, "s")) {
        w.resize(w.size() - 1);
    }

    // step 1b
    bool did_1b = false;
    if (ends_with(w, "eed")) {
        if (porter_measure(std::string_view(w).substr(0, w.size() - 3)) > 0)
            w.resize(w.size() - 1);
    } else if (ends_with(w, "ed") &&
               porter_has_vowel(std::string_view(w).substr(0, w.size() - 2))) {
        w.resize(w.size() - 2);
        did_1b = true;
    } else if (ends_with(w, "ing") &&
               porter_has_vowel(std::string_view(w).substr(0, w.size() - 3))) {
        w.resize(w.size() - 3);
        did_1b = true;
    }
    if (did_1b) {
        if (ends_with(w, "at") || ends_with(w, "bl") || ends_with(w, "iz")) {
            w += 'e';
        } else if (porter_ends_double_consonant(w) && w.back() != 'l' && w.back() != 's' &&
                   w.back() != 'z') {
            w.resize(w.size() - 1);
        } else if (porter_measure(w) == 1 && porter_ends_cvc(w)) {
            w += 'e';
        }
    }

    // step 1c
    if (ends_with(w, "y") && porter_has_vowel(std::string_view(w).substr(0, w.size() - 1)))
        w.back() = 'i';

    // step 2
    static constexpr SuffixRule step2[] = {
        {"ational", "ate"}, {"tional", "tion"}, {"enci", "ence"}, {"anci", "ance"},
        {"izer", "ize"},    {"abli", "able"},   {"alli", "al"},   {"entli", "ent"},
        {"eli", "e"},       {"ousli", "ous"},   {"ization", "ize"}, {"ation", "ate"},
        {"ator", "ate"},    {"alism", "al"},    {"iveness", "ive"}, {"fulness", "ful"},
        {"ousness", "ous"}, {"aliti", "al"},    {"iviti", "ive"},   {"biliti", "ble"}};
    porter_replace_longest(w, step2, 0);

    // step 3
    static constexpr SuffixRule step3[] = {
        {"icate", "ic"}, {"ative", ""}, {"alize", "al"}, {"iciti", "ic"},
        {"ical", "ic"},  {"ful", ""},   {"ness", ""}};
    porter_replace_longest(w, step3, 0);

    // step 4 ("ion" additionally requires a stem ending in s or t)
    {
        static constexpr std::string_view step4[] = {
            "al", "ance", "ence", "er", "ic", "able", "ible", "ant", "ement",
            "ment", "ent", "ou", "ism", "ate", "iti", "ous", "ive", "ize"};
        std::string_view best;
        for (auto suf : step4)
            if (ends_with(w, suf) && suf.size() > best.size()) best = suf;
        if (ends_with(w, "ion") && 3 > best.size()) {
            std::string_view stem = std::string_view(w).substr(0, w.size() - 3);
            if (porter_measure(stem) > 1 && !stem.empty() &&
                (stem.back() == 's' || stem.back() == 't'))
                w.resize(w.size() - 3);
        } else if (!best.empty()) {
            std::string_view stem = std::string_view(w).substr(0, w.size() - best.size());
            if (porter_measure(stem) > 1) w.resize(stem.size());
        }
    }

    // step 5a
    if (ends_with(w, "e")) {
        std::string_view stem = std::string_view(w).substr(0, w.size() - 1);
        int m = porter_measure(stem);
        if (m > 1 || (m == 1 && !porter_ends_cvc(stem))) w.resize(w.size() - 1);
    }

    // step 5b
    if (porter_measure(w) > 1 && porter_ends_double_consonant(w) && w.back() == 'l')
        w.resize(w.size() - 1);

    return w;
}

} // namespace evcap
