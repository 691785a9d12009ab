// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evcap/gradcheck.hpp"
#include "evcap/model.hpp"
#include "evcap/train.hpp"

namespace evcap {

struct SuiteOutcome {
    std::vector<GradCheckResult> results;
    bool all_passed = true;
    double max_rel_err = 0.0;

    void add(GradCheckResult r) {
        all_passed = all_passed && r.passed;
        if (r.max_rel_err > max_rel_err) max_rel_err = r.max_rel_err;
        results.push_back(std::move(r));
    }
};

namespace detail {

inline double weighted_sum(const Vec& w, const Vec& v) {
    double s = 0.0;
    for (size_t i = 0; i < v.size(); ++i) s += w[i] * v[i];
    return s;
}

inline double weighted_sum(const Matrix& w, const Matrix& v) {
    double s = 0.0;
    for (size_t i = 0; i < v.data.size(); ++i) s += w.data[i] * v.data[i];
    return s;
}

inline Vec random_vec(size_t n, SeededRng& rng, double lo = -1.0, double hi = 1.0) {
    Vec v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

inline Matrix random_mat(size_t r, size_t c, SeededRng& rng, double lo = -1.0,
                         double hi = 1.0) {
    Matrix m(r, c);
    for (double& x : m.data) x = rng.uniform(lo, hi);
    return m;
}

template <typename LossFn>
void check_gru_groups(const std::string& prefix, GruCellParams& p, GruCellParams& grads,
                      LossFn loss, SuiteOutcome& out) {
    auto pair = [&](const char* part, Vec& pv, Vec& gv) {
        out.add(check_gradient(prefix + "." + part, pv.data(), pv.size(), gv.data(), loss));
    };
    pair("w_z", p.w_z.data, grads.w_z.data);
    pair("w_r", p.w_r.data, grads.w_r.data);
    pair("w_h", p.w_h.data, grads.w_h.data);
    pair("u_z", p.u_z.data, grads.u_z.data);
    pair("u_r", p.u_r.data, grads.u_r.data);
    pair("u_h", p.u_h.data, grads.u_h.data);
    pair("b_z", p.b_z, grads.b_z);
    pair("b_r", p.b_r, grads.b_r);
    pair("b_h", p.b_h, grads.b_h);
}

} // namespace detail

/// Finite-difference verification of every backward pass on tiny dims.
/// `perturb` corrupts the first analytic gradient (negative control used
/// by the tests: the suite must then report a failure).
inline SuiteOutcome run_gradcheck_suite(std::uint64_t seed, bool perturb = false) {
    using detail::random_mat;
    using detail::random_vec;
    using detail::weighted_sum;
    SuiteOutcome out;

    // Dense layers, one per activation.
    {
        const char* names[] = {"dense.linear", "dense.leaky_relu", "dense.softmax"};
        const Activation acts[] = {Activation::Linear, Activation::LeakyRelu,
                                   Activation::Softmax};
        SeededRng rng(derive_seed(seed, "gc.dense"));
        for (int a = 0; a < 3; ++a) {
            DenseParams p = DenseParams::zeros(5, 4, acts[a]);
            glorot_init(p.w, rng);
            p.b = random_vec(4, rng, -0.5, 0.5);
            Vec x = random_vec(5, rng);
            Vec g = random_vec(4, rng);
            auto loss = [&]() { return weighted_sum(g, dense_forward(p, x)); };
            DenseParams grads = DenseParams::zeros(5, 4, acts[a]);
            DenseCache cache;
            dense_forward(p, x, &cache);
            Vec gx = dense_backward(p, cache, g, grads);
            if (perturb) grads.w.data[0] += 0.05;
            const std::string n = names[a];
            out.add(check_gradient(n + ".w", p.w.data.data(), p.w.size(),
                                   grads.w.data.data(), loss));
            out.add(check_gradient(n + ".b", p.b.data(), p.b.size(), grads.b.data(), loss));
            out.add(check_gradient(n + ".x", x.data(), x.size(), gx.data(), loss));
        }
    }

    // Softmax + cross-entropy on raw logits.
    {
        SeededRng rng(derive_seed(seed, "gc.xent"));
        Vec z = random_vec(6, rng, -2.0, 2.0);
        const size_t target = 2;
        auto loss = [&]() { return cross_entropy(softmax(z), target); };
        Vec probs = softmax(z);
        Vec dz(z.size());
        for (size_t i = 0; i < z.size(); ++i) dz[i] = probs[i] - (i == target ? 1.0 : 0.0);
        out.add(check_gradient("softmax_cross_entropy.logits", z.data(), z.size(), dz.data(),
                               loss));
    }

    // Batch normalization over a small batch.
    {
        SeededRng rng(derive_seed(seed, "gc.batchnorm"));
        BatchNormParams p = BatchNormParams::make(3);
        p.gamma = random_vec(3, rng, 0.5, 1.5);
        p.beta = random_vec(3, rng, -0.5, 0.5);
        Matrix x = random_mat(4, 3, rng);
        Matrix g = random_mat(4, 3, rng);
        auto loss = [&]() {
            return weighted_sum(g, batchnorm_forward(p, x, Mode::Train, nullptr, false));
        };
        BatchNormCache cache;
        batchnorm_forward(p, x, Mode::Train, &cache, false);
        BatchNormParams grads = BatchNormParams::make(3);
        grads.gamma.assign(3, 0.0);
        Matrix gx = batchnorm_backward(p, cache, g, grads);
        out.add(check_gradient("batchnorm.gamma", p.gamma.data(), 3, grads.gamma.data(), loss));
        out.add(check_gradient("batchnorm.beta", p.beta.data(), 3, grads.beta.data(), loss));
        out.add(check_gradient("batchnorm.x", x.data.data(), x.size(), gx.data.data(), loss));
    }

    // Dropout: the mask is replayed by reseeding inside the closure.
    {
        const std::uint64_t dseed = derive_seed(seed, "gc.dropout");
        SeededRng rng(derive_seed(seed, "gc.dropout.data"));
        Vec x = random_vec(8, rng);
        Vec g = random_vec(8, rng);
        auto loss = [&]() {
            SeededRng r(dseed);
            return weighted_sum(g, dropout(x, 0.4, Mode::Train, r));
        };
        SeededRng r(dseed);
        Vec mask;
        dropout(x, 0.4, Mode::Train, r, &mask);
        Vec gx = dropout_backward(g, mask);
        out.add(check_gradient("dropout.x", x.data(), x.size(), gx.data(), loss));
    }

    // Single GRU cell, every parameter group plus both inputs.
    {
        SeededRng rng(derive_seed(seed, "gc.gru_cell"));
        GruCellParams p = make_gru(3, 4, rng);
        Vec x = random_vec(3, rng);
        Vec h_prev = random_vec(4, rng, -0.8, 0.8);
        Vec g = random_vec(4, rng);
        auto loss = [&]() { return weighted_sum(g, gru_cell_forward(p, x, h_prev)); };
        GruStepCache cache;
        gru_cell_forward(p, x, h_prev, &cache);
        GruCellParams grads = GruCellParams::zeros(3, 4);
        Vec gx(3, 0.0), gh(4, 0.0);
        gru_cell_backward(p, cache, g, grads, gx, gh);
        detail::check_gru_groups("gru_cell", p, grads, loss, out);
        out.add(check_gradient("gru_cell.x", x.data(), x.size(), gx.data(), loss));
        out.add(check_gradient("gru_cell.h_prev", h_prev.data(), h_prev.size(), gh.data(),
                               loss));
    }

    // Unidirectional layer: backpropagation through time over 4 steps.
    {
        SeededRng rng(derive_seed(seed, "gc.gru_layer"));
        GruCellParams p = make_gru(3, 3, rng);
        Matrix seq = random_mat(4, 3, rng);
        Matrix g = random_mat(4, 3, rng);
        auto loss = [&]() { return weighted_sum(g, gru_layer_forward(p, seq)); };
        GruLayerCache cache;
        gru_layer_forward(p, seq, {}, &cache);
        GruCellParams grads = GruCellParams::zeros(3, 3);
        Matrix gseq = gru_layer_backward(p, cache, g, grads);
        detail::check_gru_groups("gru_layer", p, grads, loss, out);
        out.add(check_gradient("gru_layer.seq", seq.data.data(), seq.size(),
                               gseq.data.data(), loss));
    }

    // Bidirectional layer.
    {
        SeededRng rng(derive_seed(seed, "gc.bigru"));
        GruCellParams fwd = make_gru(3, 2, rng);
        GruCellParams bwd = make_gru(3, 2, rng);
        Matrix seq = random_mat(3, 3, rng);
        Matrix g = random_mat(3, 4, rng);
        auto loss = [&]() { return weighted_sum(g, bigru_forward(fwd, bwd, seq)); };
        BiGruCache cache;
        bigru_forward(fwd, bwd, seq, &cache);
        GruCellParams fg = GruCellParams::zeros(3, 2);
        GruCellParams bg = GruCellParams::zeros(3, 2);
        Matrix gseq = bigru_backward(fwd, bwd, cache, g, fg, bg);
        detail::check_gru_groups("bigru.fwd", fwd, fg, loss, out);
        detail::check_gru_groups("bigru.bwd", bwd, bg, loss, out);
        out.add(check_gradient("bigru.seq", seq.data.data(), seq.size(), gseq.data.data(),
                               loss));
    }

    // Full captioner: one teacher-forced step, gradients for every
    // trainable tensor including fine-tuned embeddings, with batch norm in
    // training mode and active dropout (masks replayed by reseeding).
    {
        ModelConfig c;
        c.feature_dim = 4;
        c.event_dim = 6;
        c.bigru1_cells = 3;
        c.bigru2_cells = 4;
        c.caption_gru_cells = 8;
        c.decoder_gru_cells = 8;
        c.embed_dim = 5;
        c.vocab_size = 10;
        c.dropout = 0.25;
        c.leaky_dense_units = 8;
        c.fine_tune_embeddings = true;
        SeededRng init_rng(derive_seed(seed, "gc.model.init"));
        CaptionerModel m = build_model(c, init_rng);

        SeededRng data_rng(derive_seed(seed, "gc.model.data"));
        Matrix feats = random_mat(3, c.feature_dim, data_rng);
        Vec ev(c.event_dim, 0.0);
        ev[1] = 1.0;
        ev[4] = 1.0;
        const std::vector<std::uint32_t> prefix = {kSosId, 5, 7};
        const std::uint32_t target = 6;
        const std::uint64_t drop_seed = derive_seed(seed, "gc.model.dropout");

        auto loss = [&]() {
            SeededRng r(drop_seed);
            return pair_forward(m, feats, ev, prefix, target, Mode::Train, r, nullptr, false);
        };
        SeededRng r(drop_seed);
        PairCache cache;
        pair_forward(m, feats, ev, prefix, target, Mode::Train, r, &cache, false);
        ModelGrads grads = make_grads(c);
        grads.zero();
        pair_backward(m, cache, target, grads);

        auto pspans = trainable_spans(m, c);
        auto gspans = trainable_spans(grads, c);
        for (size_t i = 0; i < pspans.size(); ++i)
            out.add(check_gradient("model." + pspans[i].name, pspans[i].data, pspans[i].n,
                                   gspans[i].data, loss));
    }

    // Batched training step: two pairs with one shared batch-norm pass,
    // the path train_captioner actually takes.
    {
        ModelConfig c;
        c.feature_dim = 4;
        c.event_dim = 6;
        c.bigru1_cells = 3;
        c.bigru2_cells = 4;
        c.caption_gru_cells = 8;
        c.decoder_gru_cells = 8;
        c.embed_dim = 5;
        c.vocab_size = 10;
        c.dropout = 0.25;
        c.leaky_dense_units = 8;
        c.fine_tune_embeddings = true;
        SeededRng init_rng(derive_seed(seed, "gc.batch.init"));
        CaptionerModel m = build_model(c, init_rng);

        SeededRng data_rng(derive_seed(seed, "gc.batch.data"));
        Matrix feats_a = random_mat(3, c.feature_dim, data_rng);
        Matrix feats_b = random_mat(2, c.feature_dim, data_rng);
        Vec ev_a(c.event_dim, 0.0);
        ev_a[1] = 1.0;
        Vec ev_b(c.event_dim, 0.0);
        ev_b[1] = 1.0;
        ev_b[4] = 1.0;
        std::vector<BatchPair> batch(2);
        batch[0] = {&feats_a, &ev_a, {kSosId, 5, 7}, 6};
        batch[1] = {&feats_b, &ev_b, {kSosId, 8}, 4};
        const std::uint64_t drop_seed = derive_seed(seed, "gc.batch.dropout");

        auto loss = [&]() {
            SeededRng r(drop_seed);
            return batch_forward_backward(m, batch, r, nullptr, false);
        };
        SeededRng r(drop_seed);
        ModelGrads grads = make_grads(c);
        grads.zero();
        batch_forward_backward(m, batch, r, &grads, false);

        auto pspans = trainable_spans(m, c);
        auto gspans = trainable_spans(grads, c);
        for (size_t i = 0; i < pspans.size(); ++i)
            out.add(check_gradient("batch." + pspans[i].name, pspans[i].data, pspans[i].n,
                                   gspans[i].data, loss));
    }

    return out;
}

} // namespace evcap
