// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "evcap/errors.hpp"
#include "evcap/events.hpp"
#include "evcap/io.hpp"
#include "evcap/matrix.hpp"

namespace evcap {

inline constexpr size_t kCaptionsPerClip = 5;
inline constexpr char kFeatureMagic[4] = {'A', 'F', 'C', '1'};

/// Serializes a feature matrix: magic "AFC1", u32 rows, u32 cols, then
/// row-major f32 payload, all little-endian. Doubles are narrowed to f32.
inline std::vector<std::uint8_t> serialize_features(const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + m.size() * 4);
    out.insert(out.end(), kFeatureMagic, kFeatureMagic + 4);
    put_u32_le(out, static_cast<std::uint32_t>(m.rows));
    put_u32_le(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) put_f32_le(out, static_cast<float>(v));
    return out;
}

inline void save_features(const Matrix& m, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_features(m));
}

inline Matrix parse_features(const std::vector<std::uint8_t>& bytes,
                             const std::string& source) {
    ByteReader r(bytes, source);
    r.expect_magic(kFeatureMagic);
    const std::uint32_t rows = r.u32_le("row count");
    const std::uint32_t cols = r.u32_le("column count");
    if (rows == 0 || cols == 0)
        throw FormatError(source + ": zero dimension (rows=" + std::to_string(rows) +
                          ", cols=" + std::to_string(cols) + ") at byte offset 4");
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    if (count * 4 != r.remaining())
        throw FormatError(source + ": payload size mismatch at byte offset 12 (expected " +
                          std::to_string(count * 4) + " bytes for " + std::to_string(rows) +
                          "x" + std::to_string(cols) + ", have " +
                          std::to_string(r.remaining()) + ")");
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = r.f32_le("payload");
    require_finite(m, source.c_str());
    return m;
}

inline Matrix load_features(const std::filesystem::path& path) {
    return parse_features(read_file_bytes(path), path.string());
}

struct ClipRecord {
    std::string clip_id;
    std::filesystem::path feature_path;  // resolved against the manifest directory
    std::vector<std::string> captions;
    Vec event_probs;  // always fully resolved, length 527
};

struct Manifest {
    std::string split;  // manifest filename stem
    std::vector<ClipRecord> records;
};

namespace detail {

inline Vec json_prob_array(const nlohmann::json& arr, const std::string& where) {
    if (!arr.is_array())
        throw ValidationError(where + ": event_probs must be an array");
    Vec probs;
    probs.reserve(arr.size());
    for (const auto& v : arr) {
        if (!v.is_number())
            throw ValidationError(where + ": event_probs entries must be numbers");
        probs.push_back(v.get<double>());
    }
    return probs;
}

} // namespace detail

/// Loads and fully validates a JSONL manifest. Every record must carry a
/// unique clip_id, exactly 5 captions, an existing feature file, and
/// 527 event probabilities in [0,1] (inline or via an AFC1 side file of
/// shape 1x527). All offending clip_ids are reported together.
inline Manifest load_manifest(const std::filesystem::path& path) {
    auto lines = read_lines(path);
    Manifest manifest;
    manifest.split = path.stem().string();
    const std::filesystem::path base = path.has_parent_path()
                                           ? path.parent_path()
                                           : std::filesystem::path(".");
    std::unordered_set<std::string> seen_ids;
    std::vector<std::string> problems;

    for (size_t lineno = 0; lineno < lines.size(); ++lineno) {
        if (lines[lineno].empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(lines[lineno]);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(path.string() + ":" + std::to_string(lineno + 1) +
                              ": invalid JSON: " + e.what());
        }
        if (!obj.is_object())
            throw FormatError(path.string() + ":" + std::to_string(lineno + 1) +
                              ": manifest line is not a JSON object");

        ClipRecord rec;
        const std::string where = path.string() + ":" + std::to_string(lineno + 1);
        if (!obj.contains("clip_id") || !obj["clip_id"].is_string())
            throw ValidationError(where + ": missing string clip_id");
        rec.clip_id = obj["clip_id"].get<std::string>();

        if (!seen_ids.insert(rec.clip_id).second)
            problems.push_back(rec.clip_id + " (duplicate clip_id)");

        if (!obj.contains("feature_path") || !obj["feature_path"].is_string()) {
            problems.push_back(rec.clip_id + " (missing feature_path)");
        } else {
            rec.feature_path = base / obj["feature_path"].get<std::string>();
            if (!std::filesystem::exists(rec.feature_path))
                problems.push_back(rec.clip_id + " (feature file not found: " +
                                   rec.feature_path.string() + ")");
        }

        if (!obj.contains("captions") || !obj["captions"].is_array()) {
            problems.push_back(rec.clip_id + " (missing captions array)");
        } else {
            for (const auto& c : obj["captions"]) {
                if (!c.is_string()) {
                    problems.push_back(rec.clip_id + " (non-string caption)");
                    break;
                }
                rec.captions.push_back(c.get<std::string>());
            }
            if (rec.captions.size() != kCaptionsPerClip)
                problems.push_back(rec.clip_id + " (caption count " +
                                   std::to_string(rec.captions.size()) + ", need " +
                                   std::to_string(kCaptionsPerClip) + ")");
        }

        const bool has_inline = obj.contains("event_probs");
        const bool has_path = obj.contains("event_probs_path");
        if (has_inline == has_path) {
            problems.push_back(rec.clip_id +
                               " (need exactly one of event_probs / event_probs_path)");
        } else if (has_inline) {
            rec.event_probs = detail::json_prob_array(obj["event_probs"], where);
        } else {
            auto probs_path = base / obj["event_probs_path"].get<std::string>();
            if (!std::filesystem::exists(probs_path)) {
                problems.push_back(rec.clip_id + " (event probs file not found: " +
                                   probs_path.string() + ")");
            } else {
                Matrix m = load_features(probs_path);
                if (m.rows != 1)
                    problems.push_back(rec.clip_id + " (event probs file must be 1 row, got " +
                                       std::to_string(m.rows) + ")");
                rec.event_probs = m.data;
            }
        }
        if (!rec.event_probs.empty()) {
            if (rec.event_probs.size() != kEventClassCount) {
                problems.push_back(rec.clip_id + " (event_probs length " +
                                   std::to_string(rec.event_probs.size()) + ", need " +
                                   std::to_string(kEventClassCount) + ")");
            } else {
                for (double p : rec.event_probs) {
                    if (!(p >= 0.0 && p <= 1.0)) {
                        problems.push_back(rec.clip_id + " (event probability outside [0,1])");
                        break;
                    }
                }
            }
        }
        manifest.records.push_back(std::move(rec));
    }

    if (manifest.records.empty())
        throw ValidationError(path.string() + ": manifest has no records");
    if (!problems.empty()) {
        std::string msg = path.string() + ": invalid records:";
        for (const auto& p : problems) msg += "\n  " + p;
        throw ValidationError(msg);
    }
    return manifest;
}

struct TrainItem {
    size_t clip_index;
    size_t caption_index;
};

/// One training item per (clip, caption): 5 per clip, ordered clip-major.
inline std::vector<TrainItem> oversample(const Manifest& manifest) {
    std::vector<TrainItem> items;
    items.reserve(manifest.records.size() * kCaptionsPerClip);
    for (size_t c = 0; c < manifest.records.size(); ++c)
        for (size_t k = 0; k < kCaptionsPerClip; ++k) items.push_back({c, k});
    return items;
}

} // namespace evcap
