// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evcap/errors.hpp"
#include "evcap/features.hpp"
#include "evcap/io.hpp"
#include "evcap/stemmer.hpp"
#include "evcap/text.hpp"

namespace evcap {

struct EvalPair {
    std::string clip_id;
    TokenSeq candidate;
    std::vector<TokenSeq> references;
};

namespace detail {

using Ngram = std::vector<std::string>;
using NgramCounts = std::map<Ngram, double>;

inline NgramCounts ngram_counts(const TokenSeq& tokens, size_t n) {
    NgramCounts counts;
    if (tokens.size() < n) return counts;
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        Ngram g(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                tokens.begin() + static_cast<std::ptrdiff_t>(i + n));
        counts[std::move(g)] += 1.0;
    }
    return counts;
}

inline size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
    std::vector<std::vector<size_t>> dp(a.size() + 1, std::vector<size_t>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1
                                            : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

/// Two-stage one-to-one unigram alignment: exact surface forms first, then
/// Porter stems over the leftovers; duplicate occurrences pair up in
/// positional order. Returns (candidate index, reference index) pairs
/// sorted by candidate position.
inline std::vector<std::pair<size_t, size_t>> meteor_align(const TokenSeq& cand,
                                                           const TokenSeq& ref) {
    std::vector<std::pair<size_t, size_t>> matched;
    std::vector<bool> cand_used(cand.size(), false);
    std::vector<bool> ref_used(ref.size(), false);
    for (int stage = 0; stage < 2; ++stage) {
        auto key = [&](const std::string& t) { return stage == 0 ? t : porter_stem(t); };
        std::map<std::string, std::vector<size_t>> cpos, rpos;
        for (size_t i = 0; i < cand.size(); ++i)
            if (!cand_used[i]) cpos[key(cand[i])].push_back(i);
        for (size_t j = 0; j < ref.size(); ++j)
            if (!ref_used[j]) rpos[key(ref[j])].push_back(j);
        for (const auto& [k, cis] : cpos) {
            auto it = rpos.find(k);
            if (it == rpos.end()) continue;
            const auto& ris = it->second;
            const size_t pairs = std::min(cis.size(), ris.size());
            for (size_t t = 0; t < pairs; ++t) {
                matched.emplace_back(cis[t], ris[t]);
                cand_used[cis[t]] = true;
                ref_used[ris[t]] = true;
            }
        }
    }
    std::sort(matched.begin(), matched.end());
    return matched;
}

} // namespace detail

/// Corpus-level BLEU-n: clipped n-gram precisions pooled over all pairs,
/// geometric mean over orders 1..n, times the brevity penalty
/// exp(min(0, 1 - r/c)). The effective reference length r uses the
/// closest reference length per candidate (ties toward the shorter).
/// Candidates shorter than an order contribute nothing to that order.
inline double bleu(const std::vector<EvalPair>& pairs, int max_n) {
    if (pairs.empty()) throw std::invalid_argument("bleu: empty pair list");
    if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: order must be in 1..4");

    size_t total_cand = 0;
    size_t total_ref = 0;
    std::vector<double> num(static_cast<size_t>(max_n) + 1, 0.0);
    std::vector<double> den(static_cast<size_t>(max_n) + 1, 0.0);

    for (const auto& pair : pairs) {
        const size_t c = pair.candidate.size();
        total_cand += c;
        size_t best_len = 0;
        bool have_best = false;
        size_t best_dist = 0;
        for (const auto& r : pair.references) {
            const size_t d = r.size() > c ? r.size() - c : c - r.size();
            if (!have_best || d < best_dist || (d == best_dist && r.size() < best_len)) {
                have_best = true;
                best_dist = d;
                best_len = r.size();
            }
        }
        total_ref += best_len;

        for (int n = 1; n <= max_n; ++n) {
            auto cand_counts = detail::ngram_counts(pair.candidate, static_cast<size_t>(n));
            if (cand_counts.empty()) continue;
            detail::NgramCounts max_ref;
            for (const auto& r : pair.references)
                for (const auto& [g, k] : detail::ngram_counts(r, static_cast<size_t>(n)))
                    max_ref[g] = std::max(max_ref[g], k);
            for (const auto& [g, k] : cand_counts) {
                auto it = max_ref.find(g);
                num[static_cast<size_t>(n)] += std::min(k, it == max_ref.end() ? 0.0 : it->second);
                den[static_cast<size_t>(n)] += k;
            }
        }
    }

    if (total_cand == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= max_n; ++n) {
        const double d = den[static_cast<size_t>(n)];
        const double p = d > 0.0 ? num[static_cast<size_t>(n)] / d : 0.0;
        if (p == 0.0) return 0.0;
        log_sum += std::log(p);
    }
    const double bp =
        std::exp(std::min(0.0, 1.0 - static_cast<double>(total_ref) / total_cand));
    return bp * std::exp(log_sum / max_n);
}

/// Longest-common-subsequence F-measure (beta = 1.2), best reference per
/// pair. Empty candidates score 0 without error.
inline double rouge_l_pair(const TokenSeq& cand, const std::vector<TokenSeq>& refs,
                           double beta = 1.2) {
    double best = 0.0;
    for (const auto& r : refs) {
        if (cand.empty() || r.empty()) continue;
        const double lcs = static_cast<double>(detail::lcs_length(cand, r));
        const double p = lcs / static_cast<double>(cand.size());
        const double rec = lcs / static_cast<double>(r.size());
        const double denom = rec + beta * beta * p;
        if (denom == 0.0) continue;
        best = std::max(best, (1.0 + beta * beta) * p * rec / denom);
    }
    return best;
}

inline double rouge_l(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("rouge_l: empty pair list");
    double total = 0.0;
    for (const auto& pair : pairs) total += rouge_l_pair(pair.candidate, pair.references);
    return total / static_cast<double>(pairs.size());
}

/// METEOR without the synonym stage (exact + Porter-stem matching only):
/// F_mean = 10PR/(R + 9P), fragmentation penalty 0.5*(chunks/matches)^3,
/// best reference per pair.
inline double meteor_pair(const TokenSeq& cand, const std::vector<TokenSeq>& refs) {
    double best = 0.0;
    for (const auto& ref : refs) {
        if (cand.empty() || ref.empty()) continue;
        auto matched = detail::meteor_align(cand, ref);
        const double m = static_cast<double>(matched.size());
        if (m == 0.0) continue;
        double chunks = 1.0;
        for (size_t i = 1; i < matched.size(); ++i)
            if (!(matched[i].first == matched[i - 1].first + 1 &&
                  matched[i].second == matched[i - 1].second + 1))
                chunks += 1.0;
        const double p = m / static_cast<double>(cand.size());
        const double r = m / static_cast<double>(ref.size());
        const double fmean = 10.0 * p * r / (r + 9.0 * p);
        const double frag = chunks / m;
        const double penalty = 0.5 * frag * frag * frag;
        best = std::max(best, fmean * (1.0 - penalty));
    }
    return best;
}

inline double meteor_lite(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("meteor_lite: empty pair list");
    double total = 0.0;
    for (const auto& pair : pairs) total += meteor_pair(pair.candidate, pair.references);
    return total / static_cast<double>(pairs.size());
}

/// Plain CIDEr: TF-IDF n-gram vectors for n = 1..4 with raw term counts,
/// document frequency over each clip's reference set, cosine similarity
/// averaged over the references, mean over orders, times 10. Returns the
/// per-clip scores; the corpus score is their mean.
inline std::vector<double> cider_per_clip(const std::vector<EvalPair>& pairs) {
    if (pairs.size() < 2)
        throw std::invalid_argument("cider: needs at least 2 clips for a meaningful idf");
    const double n_clips = static_cast<double>(pairs.size());
    std::vector<double> clip_total(pairs.size(), 0.0);

    for (size_t n = 1; n <= 4; ++n) {
        std::map<detail::Ngram, double> df;
        for (const auto& pair : pairs) {
            std::set<detail::Ngram> seen;
            for (const auto& r : pair.references)
                for (const auto& [g, k] : detail::ngram_counts(r, n)) seen.insert(g);
            for (const auto& g : seen) df[g] += 1.0;
        }
        auto idf = [&](const detail::Ngram& g) {
            auto it = df.find(g);
            return std::log(n_clips / std::max(1.0, it == df.end() ? 0.0 : it->second));
        };
        auto tfidf = [&](const TokenSeq& tokens) {
            detail::NgramCounts vec = detail::ngram_counts(tokens, n);
            for (auto& [g, k] : vec) k *= idf(g);
            return vec;
        };
        auto cosine = [](const detail::NgramCounts& u, const detail::NgramCounts& v) {
            double nu = 0.0, nv = 0.0, dot = 0.0;
            for (const auto& [g, x] : u) nu += x * x;
            for (const auto& [g, x] : v) nv += x * x;
            if (nu == 0.0 || nv == 0.0) return 0.0;
            for (const auto& [g, x] : u) {
                auto it = v.find(g);
                if (it != v.end()) dot += x * it->second;
            }
            return dot / (std::sqrt(nu) * std::sqrt(nv));
        };

        for (size_t i = 0; i < pairs.size(); ++i) {
            const auto cv = tfidf(pairs[i].candidate);
            double sum = 0.0;
            for (const auto& r : pairs[i].references) sum += cosine(cv, tfidf(r));
            clip_total[i] += sum / static_cast<double>(pairs[i].references.size());
        }
    }

    for (double& v : clip_total) v = 10.0 * v / 4.0;
    return clip_total;
}

inline double cider(const std::vector<EvalPair>& pairs) {
    auto per_clip = cider_per_clip(pairs);
    double total = 0.0;
    for (double v : per_clip) total += v;
    return total / static_cast<double>(per_clip.size());
}

/// SPIDEr composition; the SPICE score comes from an external evaluator.
inline double spider(double cider_score, double spice_score) {
    if (!(spice_score >= 0.0 && spice_score <= 1.0))
        throw ValidationError("spider: spice score " + std::to_string(spice_score) +
                              " outside [0, 1]");
    return (cider_score + spice_score) / 2.0;
}

struct ClipScores {
    std::string clip_id;
    double rouge_l = 0.0;
    double meteor = 0.0;
    double cider = 0.0;
};

struct MetricReport {
    double bleu1 = 0.0, bleu2 = 0.0, bleu3 = 0.0, bleu4 = 0.0;
    double meteor = 0.0;
    double rouge_l = 0.0;
    double cider = 0.0;
    std::optional<double> spice;
    std::optional<double> spider;
    std::vector<ClipScores> clips;
};

inline MetricReport compute_metrics(const std::vector<EvalPair>& pairs,
                                    std::optional<double> spice = std::nullopt) {
    if (pairs.empty()) throw std::invalid_argument("compute_metrics: empty pair list");
    MetricReport report;
    report.bleu1 = bleu(pairs, 1);
    report.bleu2 = bleu(pairs, 2);
    report.bleu3 = bleu(pairs, 3);
    report.bleu4 = bleu(pairs, 4);
    report.meteor = meteor_lite(pairs);
    report.rouge_l = rouge_l(pairs);
    auto per_clip = cider_per_clip(pairs);
    double total = 0.0;
    for (double v : per_clip) total += v;
    report.cider = total / static_cast<double>(per_clip.size());
    if (spice) {
        report.spice = *spice;
        report.spider = evcap::spider(report.cider, *spice);
    }
    for (size_t i = 0; i < pairs.size(); ++i) {
        ClipScores cs;
        cs.clip_id = pairs[i].clip_id;
        cs.rouge_l = rouge_l_pair(pairs[i].candidate, pairs[i].references);
        cs.meteor = meteor_pair(pairs[i].candidate, pairs[i].references);
        cs.cider = per_clip[i];
        report.clips.push_back(std::move(cs));
    }
    return report;
}

// ---------------------------------------------------------------------------
// File-level evaluation plumbing.

namespace detail {

inline nlohmann::json parse_jsonl_line(const std::string& line,
                                       const std::filesystem::path& path, size_t lineno) {
    try {
        auto obj = nlohmann::json::parse(line);
        if (!obj.is_object())
            throw FormatError(path.string() + ":" + std::to_string(lineno) +
                              ": line is not a JSON object");
        return obj;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ":" + std::to_string(lineno) +
                          ": invalid JSON: " + e.what());
    }
}

} // namespace detail

/// Reads predictions ({clip_id, caption}) and references
/// ({clip_id, captions: [5]}), normalizes all text, and assembles pairs in
/// prediction order. Predictions without references are reported together.
inline std::vector<EvalPair> load_eval_pairs(const std::filesystem::path& predictions_path,
                                             const std::filesystem::path& references_path) {
    std::unordered_map<std::string, std::vector<TokenSeq>> refs;
    {
        auto lines = read_lines(references_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto obj = detail::parse_jsonl_line(lines[i], references_path, i + 1);
            const std::string where = references_path.string() + ":" + std::to_string(i + 1);
            if (!obj.contains("clip_id") || !obj["clip_id"].is_string())
                throw ValidationError(where + ": missing string clip_id");
            if (!obj.contains("captions") || !obj["captions"].is_array() ||
                obj["captions"].size() != kCaptionsPerClip)
                throw ValidationError(where + ": captions must be an array of " +
                                      std::to_string(kCaptionsPerClip));
            std::vector<TokenSeq> tokenized;
            for (const auto& c : obj["captions"]) {
                if (!c.is_string())
                    throw ValidationError(where + ": captions entries must be strings");
                tokenized.push_back(tokenize_text(c.get<std::string>()));
            }
            if (!refs.emplace(obj["clip_id"].get<std::string>(), std::move(tokenized)).second)
                throw ValidationError(where + ": duplicate clip_id \"" +
                                      obj["clip_id"].get<std::string>() + "\"");
        }
    }
    if (refs.empty()) throw ValidationError(references_path.string() + ": no references");

    std::vector<EvalPair> pairs;
    std::vector<std::string> missing;
    std::unordered_set<std::string> seen;
    {
        auto lines = read_lines(predictions_path);
        for (size_t i = 0; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            auto obj = detail::parse_jsonl_line(lines[i], predictions_path, i + 1);
            const std::string where = predictions_path.string() + ":" + std::to_string(i + 1);
            if (!obj.contains("clip_id") || !obj["clip_id"].is_string())
                throw ValidationError(where + ": missing string clip_id");
            if (!obj.contains("caption") || !obj["caption"].is_string())
                throw ValidationError(where + ": missing string caption");
            EvalPair pair;
            pair.clip_id = obj["clip_id"].get<std::string>();
            if (!seen.insert(pair.clip_id).second)
                throw ValidationError(where + ": duplicate clip_id \"" + pair.clip_id + "\"");
            pair.candidate = tokenize_text(obj["caption"].get<std::string>());
            auto it = refs.find(pair.clip_id);
            if (it == refs.end()) {
                missing.push_back(pair.clip_id);
                continue;
            }
            pair.references = it->second;
            pairs.push_back(std::move(pair));
        }
    }
    if (!missing.empty()) {
        std::string msg = predictions_path.string() + ": no references for clip ids:";
        for (const auto& id : missing) msg += " " + id;
        throw ValidationError(msg);
    }
    if (pairs.empty())
        throw ValidationError(predictions_path.string() + ": no predictions");
    return pairs;
}

/// SPICE scores: either one corpus-level line {"spice": x} or per-clip
/// lines {"clip_id", "spice"} covering every prediction. Returns the
/// corpus-level value (mean over clips in prediction order).
inline double load_spice(const std::filesystem::path& spice_path,
                         const std::vector<EvalPair>& pairs) {
    auto lines = read_lines(spice_path);
    std::vector<nlohmann::json> objs;
    for (size_t i = 0; i < lines.size(); ++i) {
        if (lines[i].empty()) continue;
        objs.push_back(detail::parse_jsonl_line(lines[i], spice_path, i + 1));
    }
    if (objs.empty()) throw ValidationError(spice_path.string() + ": empty spice file");

    auto check_range = [&](double v) {
        if (!(v >= 0.0 && v <= 1.0))
            throw ValidationError(spice_path.string() + ": spice score " +
                                  std::to_string(v) + " outside [0, 1]");
        return v;
    };

    if (objs.size() == 1 && !objs[0].contains("clip_id")) {
        if (!objs[0].contains("spice") || !objs[0]["spice"].is_number())
            throw ValidationError(spice_path.string() + ": missing numeric spice value");
        return check_range(objs[0]["spice"].get<double>());
    }

    std::unordered_map<std::string, double> by_clip;
    for (const auto& obj : objs) {
        if (!obj.contains("clip_id") || !obj["clip_id"].is_string() ||
            !obj.contains("spice") || !obj["spice"].is_number())
            throw ValidationError(spice_path.string() +
                                  ": per-clip lines need string clip_id and numeric spice");
        by_clip[obj["clip_id"].get<std::string>()] =
            check_range(obj["spice"].get<double>());
    }
    std::vector<std::string> missing;
    double total = 0.0;
    for (const auto& pair : pairs) {
        auto it = by_clip.find(pair.clip_id);
        if (it == by_clip.end())
            missing.push_back(pair.clip_id);
        else
            total += it->second;
    }
    if (!missing.empty()) {
        std::string msg = spice_path.string() + ": no spice score for clip ids:";
        for (const auto& id : missing) msg += " " + id;
        throw ValidationError(msg);
    }
    return check_range(total / static_cast<double>(pairs.size()));
}

inline MetricReport evaluate(const std::filesystem::path& predictions_path,
                             const std::filesystem::path& references_path,
                             std::optional<std::filesystem::path> spice_path = std::nullopt) {
    auto pairs = load_eval_pairs(predictions_path, references_path);
    std::optional<double> spice;
    if (spice_path) spice = load_spice(*spice_path, pairs);
    return compute_metrics(pairs, spice);
}

inline nlohmann::json report_to_json(const MetricReport& r) {
    nlohmann::json j{{"bleu_1", r.bleu1}, {"bleu_2", r.bleu2}, {"bleu_3", r.bleu3},
                     {"bleu_4", r.bleu4}, {"meteor", r.meteor}, {"rouge_l", r.rouge_l},
                     {"cider", r.cider}};
    if (r.spice) j["spice"] = *r.spice;
    if (r.spider) j["spider"] = *r.spider;
    auto clips = nlohmann::json::array();
    for (const auto& c : r.clips)
        clips.push_back({{"clip_id", c.clip_id},
                         {"rouge_l", c.rouge_l},
                         {"meteor", c.meteor},
                         {"cider", c.cider}});
    j["clips"] = clips;
    return j;
}

/// Fixed-width table in the conventional reporting column order.
inline std::string report_table(const MetricReport& r) {
    auto cell = [](std::optional<double> v) {
        if (!v) return std::string("     -");
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%6.3f", *v);
        return std::string(buf);
    };
    std::string out;
    out += "BLEU-1 BLEU-2 BLEU-3 BLEU-4 METEOR ROUGE_L CIDEr  SPICE  SPIDEr\n";
    out += cell(r.bleu1) + " " + cell(r.bleu2) + " " + cell(r.bleu3) + " " + cell(r.bleu4) +
           " " + cell(r.meteor) + " " + cell(r.rouge_l) + "  " + cell(r.cider) + " " +
           cell(r.spice) + " " + cell(r.spider) + "\n";
    return out;
}

} // namespace evcap
