// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "evcap/adam.hpp"
#include "evcap/batchnorm.hpp"
#include "evcap/dense.hpp"
#include "evcap/dropout.hpp"
#include "evcap/errors.hpp"
#include "evcap/events.hpp"
#include "evcap/gru.hpp"
#include "evcap/io.hpp"
#include "evcap/rng.hpp"
#include "evcap/text.hpp"

namespace evcap {

struct ModelConfig {
    size_t feature_dim = 2048;
    size_t event_dim = 0;  // taken from the event corpus
    size_t bigru1_cells = 32;
    size_t bigru2_cells = 64;
    size_t caption_gru_cells = 128;
    size_t decoder_gru_cells = 128;
    size_t embed_dim = 256;
    size_t vocab_size = 0;
    double dropout = 0.5;
    size_t max_decode_len = 30;
    bool use_leaky_dense = true;
    size_t leaky_dense_units = 128;
    bool fine_tune_embeddings = false;

    size_t encoder_input_dim() const { return feature_dim + event_dim; }
    size_t audio_ctx_dim() const { return 2 * bigru2_cells; }
    size_t decoder_input_dim() const { return audio_ctx_dim() + caption_gru_cells; }
    size_t output_input_dim() const {
        return use_leaky_dense ? leaky_dense_units : decoder_gru_cells;
    }

    void validate() const {
        auto positive = [](size_t v, const char* what) {
            if (v == 0)
                throw std::invalid_argument(std::string("model config: ") + what +
                                            " must be positive");
        };
        positive(feature_dim, "feature_dim");
        positive(event_dim, "event_dim");
        positive(bigru1_cells, "bigru1_cells");
        positive(bigru2_cells, "bigru2_cells");
        positive(caption_gru_cells, "caption_gru_cells");
        positive(decoder_gru_cells, "decoder_gru_cells");
        positive(embed_dim, "embed_dim");
        positive(vocab_size, "vocab_size");
        positive(max_decode_len, "max_decode_len");
        if (use_leaky_dense) positive(leaky_dense_units, "leaky_dense_units");
        if (dropout < 0.0 || dropout >= 1.0)
            throw std::invalid_argument("model config: dropout must be in [0, 1)");
        if (vocab_size < 4)
            throw std::invalid_argument("model config: vocab_size must cover reserved tokens");
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"feature_dim", feature_dim},
                              {"event_dim", event_dim},
                              {"bigru1_cells", bigru1_cells},
                              {"bigru2_cells", bigru2_cells},
                              {"caption_gru_cells", caption_gru_cells},
                              {"decoder_gru_cells", decoder_gru_cells},
                              {"embed_dim", embed_dim},
                              {"vocab_size", vocab_size},
                              {"dropout", dropout},
                              {"max_decode_len", max_decode_len},
                              {"use_leaky_dense", use_leaky_dense},
                              {"leaky_dense_units", leaky_dense_units},
                              {"fine_tune_embeddings", fine_tune_embeddings}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        c.feature_dim = j.at("feature_dim").get<size_t>();
        c.event_dim = j.at("event_dim").get<size_t>();
        c.bigru1_cells = j.at("bigru1_cells").get<size_t>();
        c.bigru2_cells = j.at("bigru2_cells").get<size_t>();
        c.caption_gru_cells = j.at("caption_gru_cells").get<size_t>();
        c.decoder_gru_cells = j.at("decoder_gru_cells").get<size_t>();
        c.embed_dim = j.at("embed_dim").get<size_t>();
        c.vocab_size = j.at("vocab_size").get<size_t>();
        c.dropout = j.at("dropout").get<double>();
        c.max_decode_len = j.at("max_decode_len").get<size_t>();
        c.use_leaky_dense = j.at("use_leaky_dense").get<bool>();
        c.leaky_dense_units = j.at("leaky_dense_units").get<size_t>();
        c.fine_tune_embeddings = j.at("fine_tune_embeddings").get<bool>();
        return c;
    }
};

/// Complete captioner state. Carries its own vocabulary, label table, and
/// event corpus so a serialized model is self-contained for inference.
struct CaptionerModel {
    ModelConfig config;
    Vocabulary vocab;
    EventLabelTable labels;
    EventCorpus event_corpus;

    BatchNormParams input_bn;
    GruCellParams enc1_fwd, enc1_bwd;
    GruCellParams enc2_fwd, enc2_bwd;
    GruCellParams cap_gru;
    GruCellParams dec_gru;
    DenseParams leaky_dense;
    DenseParams out_dense;
    Matrix embeddings;  // vocab_size x embed_dim
};

/// Gradient accumulator with the same tensor layout as the model.
struct ModelGrads {
    BatchNormParams input_bn;
    GruCellParams enc1_fwd, enc1_bwd;
    GruCellParams enc2_fwd, enc2_bwd;
    GruCellParams cap_gru;
    GruCellParams dec_gru;
    DenseParams leaky_dense;
    DenseParams out_dense;
    Matrix embeddings;

    void zero() {
        input_bn.gamma.assign(input_bn.gamma.size(), 0.0);
        input_bn.beta.assign(input_bn.beta.size(), 0.0);
        for (GruCellParams* g : {&enc1_fwd, &enc1_bwd, &enc2_fwd, &enc2_bwd, &cap_gru, &dec_gru}) {
            g->w_z.fill(0.0); g->w_r.fill(0.0); g->w_h.fill(0.0);
            g->u_z.fill(0.0); g->u_r.fill(0.0); g->u_h.fill(0.0);
            g->b_z.assign(g->b_z.size(), 0.0);
            g->b_r.assign(g->b_r.size(), 0.0);
            g->b_h.assign(g->b_h.size(), 0.0);
        }
        leaky_dense.w.fill(0.0);
        leaky_dense.b.assign(leaky_dense.b.size(), 0.0);
        out_dense.w.fill(0.0);
        out_dense.b.assign(out_dense.b.size(), 0.0);
        embeddings.fill(0.0);
    }
};

struct ParamSpan {
    std::string name;
    double* data;
    size_t n;
};

namespace detail {

template <typename M>
void append_gru_spans(const char* prefix, M& g, std::vector<ParamSpan>& out) {
    auto add = [&](const char* part, Vec& v) {
        out.push_back({std::string(prefix) + "." + part, v.data(), v.size()});
    };
    add("w_z", g.w_z.data);
    add("w_r", g.w_r.data);
    add("w_h", g.w_h.data);
    add("u_z", g.u_z.data);
    add("u_r", g.u_r.data);
    add("u_h", g.u_h.data);
    add("b_z", g.b_z);
    add("b_r", g.b_r);
    add("b_h", g.b_h);
}

} // namespace detail

/// Canonical traversal of the trainable tensors. The order here fixes the
/// Adam moment layout and the serialized parameter order; model and grads
/// structures produce index-aligned span lists.
template <typename M>
std::vector<ParamSpan> trainable_spans(M& m, const ModelConfig& config) {
    std::vector<ParamSpan> spans;
    spans.push_back({"input_bn.gamma", m.input_bn.gamma.data(), m.input_bn.gamma.size()});
    spans.push_back({"input_bn.beta", m.input_bn.beta.data(), m.input_bn.beta.size()});
    detail::append_gru_spans("enc1_fwd", m.enc1_fwd, spans);
    detail::append_gru_spans("enc1_bwd", m.enc1_bwd, spans);
    detail::append_gru_spans("enc2_fwd", m.enc2_fwd, spans);
    detail::append_gru_spans("enc2_bwd", m.enc2_bwd, spans);
    detail::append_gru_spans("cap_gru", m.cap_gru, spans);
    detail::append_gru_spans("dec_gru", m.dec_gru, spans);
    if (config.use_leaky_dense) {
        spans.push_back({"leaky_dense.w", m.leaky_dense.w.data.data(), m.leaky_dense.w.size()});
        spans.push_back({"leaky_dense.b", m.leaky_dense.b.data(), m.leaky_dense.b.size()});
    }
    spans.push_back({"out_dense.w", m.out_dense.w.data.data(), m.out_dense.w.size()});
    spans.push_back({"out_dense.b", m.out_dense.b.data(), m.out_dense.b.size()});
    if (config.fine_tune_embeddings)
        spans.push_back({"embeddings", m.embeddings.data.data(), m.embeddings.size()});
    return spans;
}

/// Everything serialized: trainable tensors plus batch-norm running stats
/// and the (possibly frozen) embedding table.
template <typename M>
std::vector<ParamSpan> persistent_spans(M& m, const ModelConfig& config) {
    std::vector<ParamSpan> spans;
    spans.push_back({"input_bn.gamma", m.input_bn.gamma.data(), m.input_bn.gamma.size()});
    spans.push_back({"input_bn.beta", m.input_bn.beta.data(), m.input_bn.beta.size()});
    spans.push_back({"input_bn.running_mean", m.input_bn.running_mean.data(),
                     m.input_bn.running_mean.size()});
    spans.push_back({"input_bn.running_var", m.input_bn.running_var.data(),
                     m.input_bn.running_var.size()});
    detail::append_gru_spans("enc1_fwd", m.enc1_fwd, spans);
    detail::append_gru_spans("enc1_bwd", m.enc1_bwd, spans);
    detail::append_gru_spans("enc2_fwd", m.enc2_fwd, spans);
    detail::append_gru_spans("enc2_bwd", m.enc2_bwd, spans);
    detail::append_gru_spans("cap_gru", m.cap_gru, spans);
    detail::append_gru_spans("dec_gru", m.dec_gru, spans);
    if (config.use_leaky_dense) {
        spans.push_back({"leaky_dense.w", m.leaky_dense.w.data.data(), m.leaky_dense.w.size()});
        spans.push_back({"leaky_dense.b", m.leaky_dense.b.data(), m.leaky_dense.b.size()});
    }
    spans.push_back({"out_dense.w", m.out_dense.w.data.data(), m.out_dense.w.size()});
    spans.push_back({"out_dense.b", m.out_dense.b.data(), m.out_dense.b.size()});
    spans.push_back({"embeddings", m.embeddings.data.data(), m.embeddings.size()});
    return spans;
}

inline size_t trainable_param_count(CaptionerModel& m) {
    size_t n = 0;
    for (const auto& s : trainable_spans(m, m.config)) n += s.n;
    return n;
}

/// Closed-form parameter count for the same traversal; tested against the
/// enumeration.
inline size_t expected_param_count(const ModelConfig& c) {
    auto gru = [](size_t in, size_t h) { return 3 * (in * h + h * h + h); };
    size_t n = 2 * c.encoder_input_dim();  // gamma + beta
    n += 2 * gru(c.encoder_input_dim(), c.bigru1_cells);
    n += 2 * gru(2 * c.bigru1_cells, c.bigru2_cells);
    n += gru(c.embed_dim, c.caption_gru_cells);
    n += gru(c.decoder_input_dim(), c.decoder_gru_cells);
    if (c.use_leaky_dense)
        n += c.decoder_gru_cells * c.leaky_dense_units + c.leaky_dense_units;
    n += c.output_input_dim() * c.vocab_size + c.vocab_size;
    if (c.fine_tune_embeddings) n += c.vocab_size * c.embed_dim;
    return n;
}

/// Glorot-uniform weights, zero biases, identity batch norm, Glorot
/// embeddings (normally overwritten by externally trained vectors).
/// Initialization order is the canonical traversal order.
inline CaptionerModel build_model(const ModelConfig& config, SeededRng& rng) {
    config.validate();
    CaptionerModel m;
    m.config = config;
    m.input_bn = BatchNormParams::make(config.encoder_input_dim());
    m.enc1_fwd = make_gru(config.encoder_input_dim(), config.bigru1_cells, rng);
    m.enc1_bwd = make_gru(config.encoder_input_dim(), config.bigru1_cells, rng);
    m.enc2_fwd = make_gru(2 * config.bigru1_cells, config.bigru2_cells, rng);
    m.enc2_bwd = make_gru(2 * config.bigru1_cells, config.bigru2_cells, rng);
    m.cap_gru = make_gru(config.embed_dim, config.caption_gru_cells, rng);
    m.dec_gru = make_gru(config.decoder_input_dim(), config.decoder_gru_cells, rng);
    m.leaky_dense = DenseParams::zeros(config.decoder_gru_cells, config.leaky_dense_units,
                                       Activation::LeakyRelu);
    glorot_init(m.leaky_dense.w, rng);
    m.out_dense = DenseParams::zeros(config.output_input_dim(), config.vocab_size,
                                     Activation::Softmax);
    glorot_init(m.out_dense.w, rng);
    m.embeddings = Matrix(config.vocab_size, config.embed_dim);
    glorot_init(m.embeddings, rng);
    return m;
}

inline ModelGrads make_grads(const ModelConfig& c) {
    ModelGrads g;
    g.input_bn = BatchNormParams::make(c.encoder_input_dim());
    g.input_bn.gamma.assign(c.encoder_input_dim(), 0.0);
    g.enc1_fwd = GruCellParams::zeros(c.encoder_input_dim(), c.bigru1_cells);
    g.enc1_bwd = GruCellParams::zeros(c.encoder_input_dim(), c.bigru1_cells);
    g.enc2_fwd = GruCellParams::zeros(2 * c.bigru1_cells, c.bigru2_cells);
    g.enc2_bwd = GruCellParams::zeros(2 * c.bigru1_cells, c.bigru2_cells);
    g.cap_gru = GruCellParams::zeros(c.embed_dim, c.caption_gru_cells);
    g.dec_gru = GruCellParams::zeros(c.decoder_input_dim(), c.decoder_gru_cells);
    g.leaky_dense = DenseParams::zeros(c.decoder_gru_cells, c.leaky_dense_units,
                                       Activation::LeakyRelu);
    g.out_dense = DenseParams::zeros(c.output_input_dim(), c.vocab_size, Activation::Softmax);
    g.embeddings = Matrix(c.vocab_size, c.embed_dim);
    return g;
}

/// One Adam update over index-aligned span lists sharing a single moment
/// buffer; the step counter advances once per call.
inline void adam_step_spans(const std::vector<ParamSpan>& params,
                            const std::vector<ParamSpan>& grads, AdamState& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("adam_step_spans: span lists differ");
    size_t total = 0;
    for (const auto& s : params) total += s.n;
    if (state.m.empty()) {
        state.m.assign(total, 0.0);
        state.v.assign(total, 0.0);
    }
    if (state.m.size() != total)
        throw std::invalid_argument("adam_step_spans: parameter count changed");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    size_t off = 0;
    for (size_t s = 0; s < params.size(); ++s) {
        if (params[s].n != grads[s].n)
            throw std::invalid_argument("adam_step_spans: span " + params[s].name +
                                        " size mismatch");
        double* p = params[s].data;
        const double* g = grads[s].data;
        for (size_t i = 0; i < params[s].n; ++i, ++off) {
            state.m[off] = state.beta1 * state.m[off] + (1.0 - state.beta1) * g[i];
            state.v[off] = state.beta2 * state.v[off] + (1.0 - state.beta2) * g[i] * g[i];
            const double m_hat = state.m[off] / bc1;
            const double v_hat = state.v[off] / bc2;
            p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Forward / backward passes

struct EncodeCache {
    BatchNormCache bn;
    BiGruCache enc1;
    Vec drop1_mask;
    BiGruCache enc2;
    size_t t_frames = 0;
};

/// Event vector broadcast-concatenated onto every frame: the raw encoder
/// input before normalization.
inline Matrix encoder_input(const CaptionerModel& m, const Matrix& feats, const Vec& ev) {
    require_dims(feats.cols == m.config.feature_dim, "encode_audio feature width");
    require_dims(ev.size() == m.config.event_dim, "encode_audio event width");
    if (feats.rows == 0) throw std::invalid_argument("encode_audio: empty feature matrix");
    Matrix input(feats.rows, m.config.encoder_input_dim());
    for (size_t t = 0; t < feats.rows; ++t) {
        double* row = input.row_ptr(t);
        const double* src = feats.row_ptr(t);
        for (size_t j = 0; j < feats.cols; ++j) row[j] = src[j];
        for (size_t j = 0; j < ev.size(); ++j) row[feats.cols + j] = ev[j];
    }
    return input;
}

/// Post-normalization encoder stack: BiGRU -> dropout -> BiGRU; the clip
/// summary concatenates the second BiGRU's final forward and final backward
/// states. Split out so training can share one batch-norm pass across every
/// clip in a batch while this part stays per clip.
inline Vec encode_normed(CaptionerModel& m, const Matrix& normed, Mode mode, SeededRng& rng,
                         EncodeCache* cache = nullptr) {
    const size_t t_len = normed.rows;
    Matrix seq1 = bigru_forward(m.enc1_fwd, m.enc1_bwd, normed, cache ? &cache->enc1 : nullptr);
    seq1.data = dropout(seq1.data, m.config.dropout, mode, rng,
                        cache ? &cache->drop1_mask : nullptr);
    Matrix seq2 = bigru_forward(m.enc2_fwd, m.enc2_bwd, seq1, cache ? &cache->enc2 : nullptr);

    const size_t h2 = m.config.bigru2_cells;
    Vec ctx(2 * h2);
    for (size_t j = 0; j < h2; ++j) {
        ctx[j] = seq2(t_len - 1, j);       // final forward state
        ctx[h2 + j] = seq2(0, h2 + j);     // final backward state (consumed frame 0 last)
    }
    if (cache) cache->t_frames = t_len;
    return ctx;
}

/// Backward of encode_normed given dL/d(audio context); returns the
/// gradient with respect to the normalized input rows.
inline Matrix encode_normed_backward(CaptionerModel& m, const EncodeCache& cache,
                                     const Vec& grad_ctx, ModelGrads& g) {
    const size_t h2 = m.config.bigru2_cells;
    require_dims(grad_ctx.size() == 2 * h2, "encode_audio_backward grad");
    const size_t t_len = cache.t_frames;
    if (t_len == 0) throw InvalidStateError("encode_audio_backward: empty cache");

    Matrix grad_seq2(t_len, 2 * h2);
    for (size_t j = 0; j < h2; ++j) {
        grad_seq2(t_len - 1, j) = grad_ctx[j];
        grad_seq2(0, h2 + j) = grad_ctx[h2 + j];
    }
    Matrix grad_seq1 = bigru_backward(m.enc2_fwd, m.enc2_bwd, cache.enc2, grad_seq2,
                                      g.enc2_fwd, g.enc2_bwd);
    grad_seq1.data = dropout_backward(grad_seq1.data, cache.drop1_mask);
    return bigru_backward(m.enc1_fwd, m.enc1_bwd, cache.enc1, grad_seq1, g.enc1_fwd,
                          g.enc1_bwd);
}

/// Single-clip encoder: batchnorm over this clip's frames, then the BiGRU
/// stack. Training batches instead normalize all clips of a batch jointly
/// (see train.hpp); inference normalizes by running statistics, so the
/// per-clip call gives identical results on repeated evaluation.
inline Vec encode_audio(CaptionerModel& m, const Matrix& feats, const Vec& ev, Mode mode,
                        SeededRng& rng, EncodeCache* cache = nullptr,
                        bool update_running = true) {
    Matrix input = encoder_input(m, feats, ev);
    Matrix normed = batchnorm_forward(m.input_bn, input, mode, cache ? &cache->bn : nullptr,
                                      update_running);
    return encode_normed(m, normed, mode, rng, cache);
}

/// Backward of encode_audio given dL/d(audio context); input gradient is
/// discarded (features are data, the event vector is binary).
inline void encode_audio_backward(CaptionerModel& m, const EncodeCache& cache,
                                  const Vec& grad_ctx, ModelGrads& g) {
    Matrix grad_normed = encode_normed_backward(m, cache, grad_ctx, g);
    batchnorm_backward(m.input_bn, cache.bn, grad_normed, g.input_bn);
}

struct CaptionCache {
    GruLayerCache gru;
    std::vector<std::uint32_t> prefix_ids;
};

/// Runs the caption GRU over the embedded prefix; returns the final state.
inline Vec encode_partial_caption(CaptionerModel& m,
                                  const std::vector<std::uint32_t>& prefix_ids,
                                  CaptionCache* cache = nullptr) {
    if (prefix_ids.empty())
        throw std::invalid_argument("encode_partial_caption: empty prefix");
    if (prefix_ids.front() != kSosId)
        throw std::invalid_argument("encode_partial_caption: prefix must start with <sos>");
    Matrix seq(prefix_ids.size(), m.config.embed_dim);
    for (size_t t = 0; t < prefix_ids.size(); ++t) {
        if (prefix_ids[t] >= m.config.vocab_size)
            throw std::invalid_argument("encode_partial_caption: token id out of range");
        seq.set_row(t, m.embeddings.row(prefix_ids[t]));
    }
    Matrix out = gru_layer_forward(m.cap_gru, seq, {}, cache ? &cache->gru : nullptr);
    if (cache) cache->prefix_ids = prefix_ids;
    return out.row(out.rows - 1);
}

/// Backward of encode_partial_caption; embedding gradients are accumulated
/// per prefix token (used only when embeddings are being fine-tuned).
inline void encode_partial_caption_backward(CaptionerModel& m, const CaptionCache& cache,
                                            const Vec& grad_ctx, ModelGrads& g) {
    const size_t t_len = cache.gru.steps.size();
    Matrix grad_out(t_len, m.config.caption_gru_cells);
    grad_out.set_row(t_len - 1, grad_ctx);
    Matrix grad_seq = gru_layer_backward(m.cap_gru, cache.gru, grad_out, g.cap_gru);
    for (size_t t = 0; t < t_len; ++t) {
        double* row = g.embeddings.row_ptr(cache.prefix_ids[t]);
        const double* src = grad_seq.row_ptr(t);
        for (size_t j = 0; j < grad_seq.cols; ++j) row[j] += src[j];
    }
}

struct DecodeCache {
    GruStepCache gru;
    DenseCache leaky;
    Vec drop_mask;
    DenseCache out;
};

/// Single decoder step: concat(audio ctx, caption ctx) through the decoder
/// GRU from a zero state, the optional LeakyReLU projection, dropout, and
/// the softmax output layer.
inline Vec decode_step(CaptionerModel& m, const Vec& audio_ctx, const Vec& caption_ctx,
                       Mode mode, SeededRng& rng, DecodeCache* cache = nullptr) {
    require_dims(audio_ctx.size() == m.config.audio_ctx_dim(), "decode_step audio ctx");
    require_dims(caption_ctx.size() == m.config.caption_gru_cells, "decode_step caption ctx");
    Vec x;
    x.reserve(m.config.decoder_input_dim());
    x.insert(x.end(), audio_ctx.begin(), audio_ctx.end());
    x.insert(x.end(), caption_ctx.begin(), caption_ctx.end());

    Vec h0(m.config.decoder_gru_cells, 0.0);
    Vec h = gru_cell_forward(m.dec_gru, x, h0, cache ? &cache->gru : nullptr);
    Vec pre_drop;
    if (m.config.use_leaky_dense)
        pre_drop = dense_forward(m.leaky_dense, h, cache ? &cache->leaky : nullptr);
    else
        pre_drop = h;
    Vec dropped = dropout(pre_drop, m.config.dropout, mode, rng,
                          cache ? &cache->drop_mask : nullptr);
    return dense_forward(m.out_dense, dropped, cache ? &cache->out : nullptr);
}

/// Backward of decode_step given dL/d(probs); returns gradients for the
/// two context vectors.
inline void decode_step_backward(CaptionerModel& m, const DecodeCache& cache,
                                 const Vec& grad_probs, ModelGrads& g, Vec& grad_audio_ctx,
                                 Vec& grad_caption_ctx) {
    Vec grad_dropped = dense_backward(m.out_dense, cache.out, grad_probs, g.out_dense);
    Vec grad_pre_drop = dropout_backward(grad_dropped, cache.drop_mask);
    Vec grad_h;
    if (m.config.use_leaky_dense)
        grad_h = dense_backward(m.leaky_dense, cache.leaky, grad_pre_drop, g.leaky_dense);
    else
        grad_h = std::move(grad_pre_drop);

    Vec grad_x(m.config.decoder_input_dim(), 0.0);
    Vec grad_h0(m.config.decoder_gru_cells, 0.0);
    gru_cell_backward(m.dec_gru, cache.gru, grad_h, g.dec_gru, grad_x, grad_h0);

    const size_t a = m.config.audio_ctx_dim();
    grad_audio_ctx.assign(grad_x.begin(), grad_x.begin() + a);
    grad_caption_ctx.assign(grad_x.begin() + a, grad_x.end());
}

struct PairCache {
    EncodeCache encode;
    CaptionCache caption;
    DecodeCache decode;
    Vec probs;
};

/// Cross-entropy of one teacher-forced step. The audio context is
/// recomputed per pair (caches are per-pair, nothing is shared).
inline double pair_forward(CaptionerModel& m, const Matrix& feats, const Vec& ev,
                           const std::vector<std::uint32_t>& prefix_ids,
                           std::uint32_t target_id, Mode mode, SeededRng& rng,
                           PairCache* cache = nullptr, bool update_running = true) {
    Vec audio = encode_audio(m, feats, ev, mode, rng, cache ? &cache->encode : nullptr,
                             update_running);
    Vec cap = encode_partial_caption(m, prefix_ids, cache ? &cache->caption : nullptr);
    Vec probs = decode_step(m, audio, cap, mode, rng, cache ? &cache->decode : nullptr);
    double loss = cross_entropy(probs, target_id);
    if (cache) cache->probs = std::move(probs);
    return loss;
}

/// Accumulates dLoss/dParams for one pair into `g`.
inline void pair_backward(CaptionerModel& m, const PairCache& cache, std::uint32_t target_id,
                          ModelGrads& g) {
    if (cache.probs.empty()) throw InvalidStateError("pair_backward: cache has no forward");
    Vec grad_probs(cache.probs.size(), 0.0);
    grad_probs[target_id] = -1.0 / cache.probs[target_id];
    Vec grad_audio, grad_cap;
    decode_step_backward(m, cache.decode, grad_probs, g, grad_audio, grad_cap);
    encode_partial_caption_backward(m, cache.caption, grad_cap, g);
    encode_audio_backward(m, cache.encode, grad_audio, g);
}

/// Argmax decoding: append the most probable token (ties resolve to the
/// lowest id) until `<eos>` or the length cap; returns tokens including
/// the `<sos>`/`<eos>` markers.
inline TokenSeq greedy_caption(CaptionerModel& m, const Matrix& feats, const Vec& ev,
                               size_t max_len = 0) {
    if (max_len == 0) max_len = m.config.max_decode_len;
    SeededRng rng(0);  // inference mode consumes no randomness
    Vec audio = encode_audio(m, feats, ev, Mode::Infer, rng);
    std::vector<std::uint32_t> ids = {kSosId};
    for (size_t step = 0; step < max_len; ++step) {
        Vec cap = encode_partial_caption(m, ids);
        Vec probs = decode_step(m, audio, cap, Mode::Infer, rng);
        std::uint32_t best = 0;
        for (size_t j = 1; j < probs.size(); ++j)
            if (probs[j] > probs[best]) best = static_cast<std::uint32_t>(j);
        ids.push_back(best);
        if (best == kEosId) break;
    }
    TokenSeq out;
    out.reserve(ids.size());
    for (auto id : ids) out.push_back(m.vocab.decode(id));
    return out;
}

// ---------------------------------------------------------------------------
// Serialization: magic "ACM1", u32 version, length-prefixed metadata blobs
// (config JSON, vocabulary, label table, event corpus), then every
// persistent tensor as f32 little-endian in canonical traversal order.

inline constexpr char kModelMagic[4] = {'A', 'C', 'M', '1'};
inline constexpr std::uint32_t kModelVersion = 1;

namespace detail {

inline void put_blob(std::vector<std::uint8_t>& out, const std::string& blob) {
    put_u32_le(out, static_cast<std::uint32_t>(blob.size()));
    out.insert(out.end(), blob.begin(), blob.end());
}

inline std::string get_blob(ByteReader& r, const char* what) {
    const std::uint32_t n = r.u32_le(what);
    r.require(n, what);
    std::string blob(n, '\0');
    r.raw(blob.data(), n, what);
    return blob;
}

} // namespace detail

inline std::vector<std::uint8_t> serialize_model(CaptionerModel& m) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kModelMagic, kModelMagic + 4);
    put_u32_le(out, kModelVersion);
    detail::put_blob(out, m.config.to_json().dump());
    detail::put_blob(out, m.vocab.serialize());
    detail::put_blob(out, join_lines(m.labels));
    detail::put_blob(out, m.event_corpus.serialize());
    for (const auto& span : persistent_spans(m, m.config))
        for (size_t i = 0; i < span.n; ++i)
            put_f32_le(out, static_cast<float>(span.data[i]));
    return out;
}

inline void save_model(CaptionerModel& m, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_model(m));
}

inline CaptionerModel parse_model(const std::vector<std::uint8_t>& bytes,
                                  const std::string& source) {
    ByteReader r(bytes, source);
    r.expect_magic(kModelMagic);
    const std::uint32_t version = r.u32_le("version");
    if (version != kModelVersion)
        throw FormatError(source + ": unsupported model version " + std::to_string(version) +
                          " (expected " + std::to_string(kModelVersion) + ")");

    ModelConfig config;
    try {
        config = ModelConfig::from_json(nlohmann::json::parse(detail::get_blob(r, "config")));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(source + ": bad config block: " + e.what());
    }
    config.validate();

    CaptionerModel m;
    m.config = config;
    m.vocab = Vocabulary::parse(detail::get_blob(r, "vocabulary"), source + " (vocabulary)");
    m.labels = split_lines(detail::get_blob(r, "label table"));
    m.event_corpus =
        EventCorpus::parse(detail::get_blob(r, "event corpus"), source + " (event corpus)");
    if (m.vocab.size() != config.vocab_size)
        throw FormatError(source + ": vocabulary size " + std::to_string(m.vocab.size()) +
                          " does not match config vocab_size " +
                          std::to_string(config.vocab_size));
    if (m.event_corpus.size() != config.event_dim)
        throw FormatError(source + ": event corpus size " + std::to_string(m.event_corpus.size()) +
                          " does not match config event_dim " + std::to_string(config.event_dim));

    m.input_bn = BatchNormParams::make(config.encoder_input_dim());
    m.enc1_fwd = GruCellParams::zeros(config.encoder_input_dim(), config.bigru1_cells);
    m.enc1_bwd = GruCellParams::zeros(config.encoder_input_dim(), config.bigru1_cells);
    m.enc2_fwd = GruCellParams::zeros(2 * config.bigru1_cells, config.bigru2_cells);
    m.enc2_bwd = GruCellParams::zeros(2 * config.bigru1_cells, config.bigru2_cells);
    m.cap_gru = GruCellParams::zeros(config.embed_dim, config.caption_gru_cells);
    m.dec_gru = GruCellParams::zeros(config.decoder_input_dim(), config.decoder_gru_cells);
    m.leaky_dense = DenseParams::zeros(config.decoder_gru_cells, config.leaky_dense_units,
                                       Activation::LeakyRelu);
    m.out_dense = DenseParams::zeros(config.output_input_dim(), config.vocab_size,
                                     Activation::Softmax);
    m.embeddings = Matrix(config.vocab_size, config.embed_dim);
    for (const auto& span : persistent_spans(m, m.config))
        for (size_t i = 0; i < span.n; ++i)
            span.data[i] = r.f32_le(span.name.c_str());
    r.expect_exhausted("parameters");
    return m;
}

inline CaptionerModel load_model(const std::filesystem::path& path) {
    return parse_model(read_file_bytes(path), path.string());
}

} // namespace evcap
