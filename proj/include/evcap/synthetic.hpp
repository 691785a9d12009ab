// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcap/events.hpp"
#include "evcap/features.hpp"
#include "evcap/io.hpp"
#include "evcap/matrix.hpp"
#include "evcap/rng.hpp"

namespace evcap {

/// Word inventory behind the synthetic label table. 12 words give
/// 12*11*10 = 1320 ordered distinct triples, enough for one label per
/// sound-event class.
inline const std::array<std::string, 12>& synth_words() {
    static const std::array<std::string, 12> words = {
        "Alfa",  "Bravo", "Charlie", "Delta",    "Echo", "Foxtrot",
        "Golf",  "Hotel", "India",   "Juliett",  "Kilo", "Lima"};
    return words;
}

/// 527 synthetic display labels, each an ordered triple of distinct words,
/// enumerated lexicographically by word index. Deterministic by
/// construction; tokenizing the table yields exactly the 12 words.
inline EventLabelTable make_synth_label_table() {
    const auto& words = synth_words();
    EventLabelTable table;
    table.reserve(kEventClassCount);
    for (size_t i = 0; i < words.size() && table.size() < kEventClassCount; ++i)
        for (size_t j = 0; j < words.size() && table.size() < kEventClassCount; ++j) {
            if (j == i) continue;
            for (size_t k = 0; k < words.size() && table.size() < kEventClassCount; ++k) {
                if (k == i || k == j) continue;
                table.push_back(words[i] + " " + words[j] + " " + words[k]);
            }
        }
    return table;
}

enum class SynthGrammar {
    Bare,      // caption = the active label's tokens, sorted
    Scaffold,  // caption = "a <tokens...> sound"
};

/// Caption text is a pure function of the active class: the sorted tokens
/// of its label, optionally framed by scaffold words.
inline std::string synth_caption(std::uint32_t active_class, const EventLabelTable& table,
                                 SynthGrammar grammar) {
    if (active_class >= table.size())
        throw std::invalid_argument("synth_caption: class index out of range");
    TokenSeq tokens = tokenize_label(table[active_class]);
    std::sort(tokens.begin(), tokens.end());
    std::string text;
    if (grammar == SynthGrammar::Scaffold) text = "a ";
    text += join_tokens(tokens);
    if (grammar == SynthGrammar::Scaffold) text += " sound";
    return text;
}

struct SynthClip {
    Matrix features;   // uniform noise in [-1, 1], independent of the caption
    Vec event_probs;   // active class well above 0.1, the rest well below
    std::vector<std::string> captions;  // 5 identical copies
};

/// Deterministic clip: the event probabilities carry all caption
/// information, the features none.
inline SynthClip synth_clip(std::uint64_t seed, size_t t_frames, size_t feature_dim,
                            std::uint32_t active_class, const EventLabelTable& table,
                            SynthGrammar grammar = SynthGrammar::Bare) {
    if (t_frames == 0 || feature_dim == 0)
        throw std::invalid_argument("synth_clip: dimensions must be positive");
    SynthClip clip;
    SeededRng feat_rng(derive_seed(seed, "synth.features"));
    clip.features = Matrix(t_frames, feature_dim);
    for (double& v : clip.features.data) v = feat_rng.uniform(-1.0, 1.0);

    SeededRng ev_rng(derive_seed(seed, "synth.events"));
    clip.event_probs.assign(kEventClassCount, 0.0);
    for (size_t i = 0; i < kEventClassCount; ++i)
        clip.event_probs[i] = 0.05 * ev_rng.uniform01();
    clip.event_probs[active_class] = 0.6 + 0.3 * ev_rng.uniform01();

    clip.captions.assign(kCaptionsPerClip, synth_caption(active_class, table, grammar));
    return clip;
}

struct SynthDatasetSpec {
    std::filesystem::path dir;
    std::string name;                        // manifest stem and clip id prefix
    std::vector<std::uint32_t> classes;      // one clip per entry
    size_t t_frames = 16;
    size_t feature_dim = 32;
    std::uint64_t seed = 42;
    SynthGrammar grammar = SynthGrammar::Bare;
};

/// Writes feature files plus a JSONL manifest (inline event probabilities);
/// returns the manifest path. Fully deterministic in the spec.
inline std::filesystem::path write_synth_dataset(const SynthDatasetSpec& spec,
                                                 const EventLabelTable& table) {
    std::filesystem::create_directories(spec.dir / "features");
    std::vector<std::string> lines;
    for (size_t i = 0; i < spec.classes.size(); ++i) {
        SynthClip clip = synth_clip(derive_seed(spec.seed, i), spec.t_frames,
                                    spec.feature_dim, spec.classes[i], table, spec.grammar);
        const std::string clip_id = spec.name + "_" + std::to_string(i);
        const std::string rel = "features/" + clip_id + ".afc";
        save_features(clip.features, spec.dir / rel);
        nlohmann::json obj;
        obj["clip_id"] = clip_id;
        obj["feature_path"] = rel;
        obj["captions"] = clip.captions;
        obj["event_probs"] = clip.event_probs;
        lines.push_back(obj.dump());
    }
    auto manifest_path = spec.dir / (spec.name + ".jsonl");
    write_file_atomic(manifest_path, join_lines(lines));
    return manifest_path;
}

} // namespace evcap
