// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "evcap/features.hpp"
#include "evcap/model.hpp"

namespace evcap {

struct TrainConfig {
    size_t epochs = 100;
    size_t batch_size = 128;  // partial pairs per optimizer step
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    double event_threshold = 0.1;
    std::uint64_t seed = 42;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (batch_size < 2) throw std::invalid_argument("train config: batch_size must be >= 2");
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("train config: learning_rate must be positive");
    }
};

struct ClipData {
    Matrix feats;
    Vec event_vec;
    std::vector<std::vector<std::uint32_t>> caption_ids;  // with <sos>/<eos> markers
};

struct PairRef {
    size_t clip;
    size_t caption;
    size_t prefix_len;  // target token = caption_ids[caption][prefix_len]
};

struct TrainData {
    std::vector<ClipData> clips;
    std::vector<PairRef> pairs;
};

/// Materializes features, thresholded multi-hot event vectors, encoded
/// captions, and the teacher-forcing pair expansion for one manifest.
/// `ablate_events` zeroes every event vector (conditioning ablation).
inline TrainData prepare_training_data(const Manifest& manifest, const CaptionerModel& m,
                                       double event_threshold = 0.1,
                                       bool ablate_events = false) {
    if (manifest.records.empty())
        throw ValidationError("prepare_training_data: empty manifest");
    TrainData data;
    data.clips.reserve(manifest.records.size());
    for (const auto& rec : manifest.records) {
        ClipData clip;
        clip.feats = load_features(rec.feature_path);
        if (clip.feats.cols != m.config.feature_dim)
            throw ValidationError(rec.clip_id + ": feature width " +
                                  std::to_string(clip.feats.cols) + " does not match model " +
                                  std::to_string(m.config.feature_dim));
        if (ablate_events) {
            clip.event_vec.assign(m.config.event_dim, 0.0);
        } else {
            auto selected = threshold_events(rec.event_probs, event_threshold);
            clip.event_vec = encode_clip_events(selected, m.labels, m.event_corpus);
        }
        for (const auto& caption : rec.captions)
            clip.caption_ids.push_back(m.vocab.encode(normalize_caption(caption)));
        data.clips.push_back(std::move(clip));
    }
    for (const auto& item : oversample(manifest)) {
        const auto& ids = data.clips[item.clip_index].caption_ids[item.caption_index];
        for (size_t k = 1; k < ids.size(); ++k)
            data.pairs.push_back({item.clip_index, item.caption_index, k});
    }
    return data;
}

struct EpochStats {
    size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> history;
    size_t best_epoch = 0;
    double best_val_loss = 0.0;
};

/// Strict improvement only: an equal later loss keeps the earlier epoch.
inline bool improves_checkpoint(double new_val_loss, double best_val_loss) {
    return new_val_loss < best_val_loss;
}

/// Mean teacher-forced cross-entropy (nats per token) in inference mode.
inline double evaluate_loss(CaptionerModel& m, const TrainData& data) {
    if (data.pairs.empty()) throw ValidationError("evaluate_loss: no pairs");
    SeededRng rng(0);  // inference consumes no randomness
    double total = 0.0;
    for (const auto& pr : data.pairs) {
        const ClipData& clip = data.clips[pr.clip];
        const auto& ids = clip.caption_ids[pr.caption];
        std::vector<std::uint32_t> prefix(ids.begin(),
                                          ids.begin() + static_cast<std::ptrdiff_t>(pr.prefix_len));
        total += pair_forward(m, clip.feats, clip.event_vec, prefix, ids[pr.prefix_len],
                              Mode::Infer, rng);
    }
    return total / static_cast<double>(data.pairs.size());
}

struct BatchPair {
    const Matrix* feats = nullptr;
    const Vec* ev = nullptr;
    std::vector<std::uint32_t> prefix;
    std::uint32_t target = 0;
};

/// One training batch with shared normalization statistics: every pair's
/// frames are stacked into a single batch-norm pass (so per-clip-constant
/// columns such as event bits keep their cross-clip variance), then each
/// pair runs the per-clip stack. With `g` set, gradients accumulate into it
/// including one joint batch-norm backward; returns the summed loss.
inline double batch_forward_backward(CaptionerModel& m, const std::vector<BatchPair>& batch,
                                     SeededRng& rng, ModelGrads* g,
                                     bool update_running = true) {
    if (batch.empty()) throw std::invalid_argument("batch_forward_backward: empty batch");
    const size_t dim = m.config.encoder_input_dim();
    size_t total_rows = 0;
    for (const auto& bp : batch) total_rows += bp.feats->rows;

    Matrix stacked(total_rows, dim);
    size_t offset = 0;
    for (const auto& bp : batch) {
        const Matrix input = encoder_input(m, *bp.feats, *bp.ev);
        for (size_t t = 0; t < input.rows; ++t)
            stacked.set_row(offset + t, input.row(t));
        offset += input.rows;
    }

    BatchNormCache bn_cache;
    const Matrix normed = batchnorm_forward(m.input_bn, stacked, Mode::Train,
                                            g ? &bn_cache : nullptr, update_running);

    Matrix grad_normed;
    if (g) grad_normed = Matrix(total_rows, dim);

    double total_loss = 0.0;
    offset = 0;
    for (const auto& bp : batch) {
        const size_t t_len = bp.feats->rows;
        Matrix slice(t_len, dim);
        for (size_t t = 0; t < t_len; ++t) slice.set_row(t, normed.row(offset + t));

        EncodeCache enc_cache;
        CaptionCache cap_cache;
        DecodeCache dec_cache;
        Vec audio = encode_normed(m, slice, Mode::Train, rng, g ? &enc_cache : nullptr);
        Vec cap = encode_partial_caption(m, bp.prefix, g ? &cap_cache : nullptr);
        Vec probs = decode_step(m, audio, cap, Mode::Train, rng, g ? &dec_cache : nullptr);
        total_loss += cross_entropy(probs, bp.target);

        if (g) {
            Vec grad_probs(probs.size(), 0.0);
            grad_probs[bp.target] = -1.0 / probs[bp.target];
            Vec grad_audio, grad_cap;
            decode_step_backward(m, dec_cache, grad_probs, *g, grad_audio, grad_cap);
            encode_partial_caption_backward(m, cap_cache, grad_cap, *g);
            Matrix gn = encode_normed_backward(m, enc_cache, grad_audio, *g);
            for (size_t t = 0; t < t_len; ++t) grad_normed.set_row(offset + t, gn.row(t));
        }
        offset += t_len;
    }

    if (g) batchnorm_backward(m.input_bn, bn_cache, grad_normed, g->input_bn);
    return total_loss;
}

/// Teacher-forced training with per-pair gradient accumulation and one
/// Adam step per batch. The model is left holding the checkpoint with the
/// minimum validation loss (ties resolve to the earlier epoch).
inline TrainResult train_captioner(CaptionerModel& m, const TrainData& train_data,
                                   const TrainData& val_data, const TrainConfig& cfg) {
    cfg.validate();
    if (train_data.pairs.empty()) throw ValidationError("train: no training pairs");
    if (val_data.pairs.empty()) throw ValidationError("train: no validation pairs");

    SeededRng rng(derive_seed(cfg.seed, "train"));
    AdamState adam;
    adam.lr = cfg.learning_rate;
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.epsilon = cfg.adam_epsilon;

    ModelGrads grads = make_grads(m.config);
    auto pspans = trainable_spans(m, m.config);

    std::vector<size_t> order(train_data.pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainResult result;
    std::vector<std::uint8_t> best_bytes;

    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        rng.shuffle(order);
        double epoch_loss = 0.0;
        size_t batch_index = 0;

        for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
            const size_t end = std::min(start + cfg.batch_size, order.size());
            grads.zero();
            std::vector<BatchPair> batch;
            batch.reserve(end - start);
            for (size_t i = start; i < end; ++i) {
                const PairRef& pr = train_data.pairs[order[i]];
                const ClipData& clip = train_data.clips[pr.clip];
                const auto& ids = clip.caption_ids[pr.caption];
                BatchPair bp;
                bp.feats = &clip.feats;
                bp.ev = &clip.event_vec;
                bp.prefix.assign(ids.begin(),
                                 ids.begin() + static_cast<std::ptrdiff_t>(pr.prefix_len));
                bp.target = ids[pr.prefix_len];
                batch.push_back(std::move(bp));
            }
            const double batch_loss = batch_forward_backward(m, batch, rng, &grads);
            epoch_loss += batch_loss;

            const double scale = 1.0 / static_cast<double>(end - start);
            auto gspans = trainable_spans(grads, m.config);
            double max_abs_grad = 0.0;
            bool finite = std::isfinite(batch_loss);
            for (auto& s : gspans)
                for (size_t i = 0; i < s.n; ++i) {
                    s.data[i] *= scale;
                    const double a = std::abs(s.data[i]);
                    if (std::isnan(a)) finite = false;
                    else if (a > max_abs_grad) max_abs_grad = a;
                    if (!std::isfinite(s.data[i])) finite = false;
                }
            if (!finite)
                throw NumericError("training diverged: non-finite loss or gradient at epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + ", max |grad| = " +
                                   std::to_string(max_abs_grad));
            adam_step_spans(pspans, gspans, adam);
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_loss = epoch_loss / static_cast<double>(order.size());
        stats.val_loss = evaluate_loss(m, val_data);
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.history.push_back(stats);

        if (result.best_epoch == 0 || improves_checkpoint(stats.val_loss, result.best_val_loss)) {
            result.best_epoch = epoch;
            result.best_val_loss = stats.val_loss;
            best_bytes = serialize_model(m);
        }
    }

    m = parse_model(best_bytes, "best checkpoint");
    return result;
}

/// History serialization: one JSON object per epoch.
inline std::string history_to_jsonl(const std::vector<EpochStats>& history) {
    std::vector<std::string> lines;
    lines.reserve(history.size());
    for (const auto& e : history) {
        nlohmann::json obj{{"epoch", e.epoch},
                           {"train_loss", e.train_loss},
                           {"val_loss", e.val_loss},
                           {"seconds", e.seconds}};
        lines.push_back(obj.dump());
    }
    return join_lines(lines);
}

} // namespace evcap
