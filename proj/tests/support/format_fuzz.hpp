// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "evcap/embeddings.hpp"
#include "evcap/features.hpp"
#include "evcap/model.hpp"
#include "evcap/rng.hpp"
#include "evcap/synthetic.hpp"

namespace evcap::fuzz {

// Each fuzzer runs `n` randomized save -> load -> save cycles and demands
// byte-identical output; `diag` receives the first failure description.

inline bool fuzz_features(std::uint64_t seed, size_t n, std::string* diag = nullptr) {
    SeededRng rng(seed);
    for (size_t k = 0; k < n; ++k) {
        Matrix m(1 + rng.below(6), 1 + rng.below(8));
        for (double& v : m.data) v = rng.uniform(-10.0, 10.0);
        const auto bytes = serialize_features(m);
        const Matrix back = parse_features(bytes, "fuzz");
        if (back.rows != m.rows || back.cols != m.cols ||
            serialize_features(back) != bytes) {
            if (diag) *diag = "features case " + std::to_string(k);
            return false;
        }
    }
    return true;
}

inline bool fuzz_embeddings(std::uint64_t seed, size_t n, std::string* diag = nullptr) {
    SeededRng rng(seed);
    for (size_t k = 0; k < n; ++k) {
        Matrix m(1 + rng.below(12), 1 + rng.below(16));
        for (double& v : m.data) v = rng.uniform(-3.0, 3.0);
        const auto bytes = serialize_embeddings(m);
        const Matrix back = parse_embeddings(bytes, "fuzz");
        if (back.rows != m.rows || back.cols != m.cols ||
            serialize_embeddings(back) != bytes) {
            if (diag) *diag = "embeddings case " + std::to_string(k);
            return false;
        }
    }
    return true;
}

inline bool fuzz_model(std::uint64_t seed, size_t n, std::string* diag = nullptr) {
    SeededRng rng(seed);
    const auto& table = make_synth_label_table();
    for (size_t k = 0; k < n; ++k) {
        ModelConfig c;
        c.feature_dim = 1 + rng.below(4);
        c.bigru1_cells = 1 + rng.below(3);
        c.bigru2_cells = 1 + rng.below(3);
        c.caption_gru_cells = 1 + rng.below(4);
        c.decoder_gru_cells = 1 + rng.below(4);
        c.embed_dim = 1 + rng.below(4);
        c.dropout = rng.uniform(0.0, 0.5);
        c.max_decode_len = 1 + rng.below(6);
        c.use_leaky_dense = rng.bernoulli(0.5);
        c.leaky_dense_units = 1 + rng.below(4);
        c.fine_tune_embeddings = rng.bernoulli(0.5);

        std::vector<TokenSeq> caption;
        caption.push_back({});
        const size_t words = 1 + rng.below(8);
        for (size_t w = 0; w < words; ++w)
            caption.back().push_back("w" + std::to_string(rng.below(12)));
        const Vocabulary vocab = Vocabulary::build(caption);

        EventLabelTable labels;
        const size_t n_labels = 1 + rng.below(5);
        for (size_t i = 0; i < n_labels; ++i) labels.push_back(table[rng.below(table.size())]);
        const EventCorpus corpus = EventCorpus::build(labels);

        c.vocab_size = vocab.size();
        c.event_dim = corpus.size();

        SeededRng init(rng.next_u64());
        CaptionerModel m = build_model(c, init);
        m.vocab = vocab;
        m.labels = labels;
        m.event_corpus = corpus;
        for (auto& span : persistent_spans(m, c))
            for (size_t i = 0; i < span.n; ++i) span.data[i] = rng.uniform(-2.0, 2.0);

        const auto bytes = serialize_model(m);
        CaptionerModel back;
        try {
            back = parse_model(bytes, "fuzz");
        } catch (const std::exception& e) {
            if (diag) *diag = "model case " + std::to_string(k) + ": " + e.what();
            return false;
        }
        if (serialize_model(back) != bytes) {
            if (diag) *diag = "model case " + std::to_string(k) + ": bytes differ";
            return false;
        }
    }
    return true;
}

inline bool fuzz_manifest(const std::filesystem::path& scratch, std::uint64_t seed, size_t n,
                          std::string* diag = nullptr) {
    namespace fs = std::filesystem;
    fs::create_directories(scratch);
    SeededRng rng(seed);
    const auto& words = synth_words();

    Matrix shared(2, 3);
    for (double& v : shared.data) v = rng.uniform(-1.0, 1.0);
    save_features(shared, scratch / "shared.afc");

    auto fail = [&](size_t k, const std::string& what) {
        if (diag) *diag = "manifest case " + std::to_string(k) + ": " + what;
        return false;
    };

    for (size_t k = 0; k < n; ++k) {
        const size_t n_records = 1 + rng.below(3);
        std::vector<std::string> lines;
        std::vector<std::vector<std::string>> all_captions;
        std::vector<Vec> all_probs;
        for (size_t i = 0; i < n_records; ++i) {
            nlohmann::json obj;
            obj["clip_id"] = "c" + std::to_string(k) + "_" + std::to_string(i);
            obj["feature_path"] = "shared.afc";
            std::vector<std::string> captions;
            for (size_t ci = 0; ci < kCaptionsPerClip; ++ci) {
                std::string cap = words[rng.below(words.size())];
                const size_t extra = rng.below(3);
                for (size_t w = 0; w < extra; ++w)
                    cap += " " + words[rng.below(words.size())];
                captions.push_back(cap);
            }
            obj["captions"] = captions;
            all_captions.push_back(captions);

            Vec probs(kEventClassCount);
            for (double& p : probs) p = rng.uniform01();
            if (rng.bernoulli(0.3)) {
                Matrix pm(1, kEventClassCount);
                pm.data = probs;
                const std::string rel =
                    "p" + std::to_string(k) + "_" + std::to_string(i) + ".afc";
                save_features(pm, scratch / rel);
                obj["event_probs_path"] = rel;
                for (double& p : probs) p = static_cast<float>(p);  // f32 on disk
            } else {
                obj["event_probs"] = probs;
            }
            all_probs.push_back(probs);
            lines.push_back(obj.dump());
        }
        const fs::path manifest_path = scratch / ("m" + std::to_string(k) + ".jsonl");
        write_file_atomic(manifest_path, join_lines(lines));

        Manifest loaded;
        try {
            loaded = load_manifest(manifest_path);
        } catch (const std::exception& e) {
            return fail(k, e.what());
        }
        if (loaded.records.size() != n_records) return fail(k, "record count");
        for (size_t i = 0; i < n_records; ++i) {
            const auto& rec = loaded.records[i];
            if (rec.clip_id != "c" + std::to_string(k) + "_" + std::to_string(i))
                return fail(k, "clip_id");
            if (rec.captions != all_captions[i]) return fail(k, "captions");
            if (rec.event_probs != all_probs[i]) return fail(k, "event_probs");
            if (rec.feature_path.filename() != "shared.afc") return fail(k, "feature_path");
        }
    }
    return true;
}

} // namespace evcap::fuzz
