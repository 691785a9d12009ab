// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "evcap/activations.hpp"
#include "evcap/matrix.hpp"
#include "evcap/rng.hpp"

namespace evcap {

/// Gated recurrent unit cell. Convention fixed across the project:
///   z = sigmoid(x W_z + h_prev U_z + b_z)
///   r = sigmoid(x W_r + h_prev U_r + b_r)
///   h_cand = tanh(x W_h + (r . h_prev) U_h + b_h)
///   h = (1 - z) . h_prev + z . h_cand
struct GruCellParams {
    size_t input_dim = 0;
    size_t hidden_dim = 0;
    Matrix w_z, w_r, w_h;  // input_dim x hidden_dim
    Matrix u_z, u_r, u_h;  // hidden_dim x hidden_dim
    Vec b_z, b_r, b_h;     // hidden_dim

    static GruCellParams zeros(size_t input_dim, size_t hidden_dim) {
        GruCellParams p;
        p.input_dim = input_dim;
        p.hidden_dim = hidden_dim;
        p.w_z = Matrix(input_dim, hidden_dim);
        p.w_r = Matrix(input_dim, hidden_dim);
        p.w_h = Matrix(input_dim, hidden_dim);
        p.u_z = Matrix(hidden_dim, hidden_dim);
        p.u_r = Matrix(hidden_dim, hidden_dim);
        p.u_h = Matrix(hidden_dim, hidden_dim);
        p.b_z.assign(hidden_dim, 0.0);
        p.b_r.assign(hidden_dim, 0.0);
        p.b_h.assign(hidden_dim, 0.0);
        return p;
    }

    size_t param_count() const {
        return 3 * (input_dim * hidden_dim + hidden_dim * hidden_dim + hidden_dim);
    }
};

inline void glorot_init(Matrix& w, SeededRng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows + w.cols));
    for (double& x : w.data) x = rng.uniform(-limit, limit);
}

inline GruCellParams make_gru(size_t input_dim, size_t hidden_dim, SeededRng& rng) {
    GruCellParams p = GruCellParams::zeros(input_dim, hidden_dim);
    glorot_init(p.w_z, rng);
    glorot_init(p.w_r, rng);
    glorot_init(p.w_h, rng);
    glorot_init(p.u_z, rng);
    glorot_init(p.u_r, rng);
    glorot_init(p.u_h, rng);
    return p;
}

/// Intermediates retained by the forward pass for the exact backward pass.
struct GruStepCache {
    Vec x;
    Vec h_prev;
    Vec z;
    Vec r;
    Vec h_cand;
};

inline Vec gru_cell_forward(const GruCellParams& p, const Vec& x, const Vec& h_prev,
                            GruStepCache* cache = nullptr) {
    require_dims(x.size() == p.input_dim, "gru_cell_forward input");
    require_dims(h_prev.size() == p.hidden_dim, "gru_cell_forward hidden state");
    const size_t h = p.hidden_dim;

    Vec az(p.b_z), ar(p.b_r);
    add_vec_mat(x, p.w_z, az);
    add_vec_mat(h_prev, p.u_z, az);
    add_vec_mat(x, p.w_r, ar);
    add_vec_mat(h_prev, p.u_r, ar);
    Vec z(h), r(h);
    for (size_t j = 0; j < h; ++j) {
        z[j] = sigmoid(az[j]);
        r[j] = sigmoid(ar[j]);
    }

    Vec rh(h);
    for (size_t j = 0; j < h; ++j) rh[j] = r[j] * h_prev[j];
    Vec ah(p.b_h);
    add_vec_mat(x, p.w_h, ah);
    add_vec_mat(rh, p.u_h, ah);
    Vec h_cand(h), h_new(h);
    for (size_t j = 0; j < h; ++j) {
        h_cand[j] = std::tanh(ah[j]);
        h_new[j] = (1.0 - z[j]) * h_prev[j] + z[j] * h_cand[j];
    }

    if (cache) {
        cache->x = x;
        cache->h_prev = h_prev;
        cache->z = std::move(z);
        cache->r = std::move(r);
        cache->h_cand = std::move(h_cand);
    }
    return h_new;
}

/// Exact analytic backward for one cell step. Parameter gradients are
/// accumulated into `grads`; returns are added into grad_x / grad_h_prev
/// so BPTT carries compose naturally.
inline void gru_cell_backward(const GruCellParams& p, const GruStepCache& cache,
                              const Vec& grad_h, GruCellParams& grads,
                              Vec& grad_x, Vec& grad_h_prev) {
    const size_t h = p.hidden_dim;
    if (cache.x.size() != p.input_dim || cache.h_prev.size() != h ||
        cache.z.size() != h)
        throw InvalidStateError("gru_cell_backward: cache does not match params");
    require_dims(grad_h.size() == h, "gru_cell_backward grad");
    require_dims(grad_x.size() == p.input_dim && grad_h_prev.size() == h,
                 "gru_cell_backward outputs");

    Vec da_h(h), dz(h), da_z(h);
    for (size_t j = 0; j < h; ++j) {
        const double dcand = grad_h[j] * cache.z[j];
        da_h[j] = dcand * (1.0 - cache.h_cand[j] * cache.h_cand[j]);
        dz[j] = grad_h[j] * (cache.h_cand[j] - cache.h_prev[j]);
        da_z[j] = dz[j] * cache.z[j] * (1.0 - cache.z[j]);
        grad_h_prev[j] += grad_h[j] * (1.0 - cache.z[j]);
    }

    // candidate path
    Vec rh(h);
    for (size_t j = 0; j < h; ++j) rh[j] = cache.r[j] * cache.h_prev[j];
    add_outer(cache.x, da_h, grads.w_h);
    add_outer(rh, da_h, grads.u_h);
    for (size_t j = 0; j < h; ++j) grads.b_h[j] += da_h[j];
    Vec drh(h, 0.0);
    add_mat_vec(p.u_h, da_h, drh);
    Vec da_r(h);
    for (size_t j = 0; j < h; ++j) {
        grad_h_prev[j] += drh[j] * cache.r[j];
        const double dr = drh[j] * cache.h_prev[j];
        da_r[j] = dr * cache.r[j] * (1.0 - cache.r[j]);
    }
    add_mat_vec(p.w_h, da_h, grad_x);

    // update gate path
    add_outer(cache.x, da_z, grads.w_z);
    add_outer(cache.h_prev, da_z, grads.u_z);
    for (size_t j = 0; j < h; ++j) grads.b_z[j] += da_z[j];
    add_mat_vec(p.w_z, da_z, grad_x);
    add_mat_vec(p.u_z, da_z, grad_h_prev);

    // reset gate path
    add_outer(cache.x, da_r, grads.w_r);
    add_outer(cache.h_prev, da_r, grads.u_r);
    for (size_t j = 0; j < h; ++j) grads.b_r[j] += da_r[j];
    add_mat_vec(p.w_r, da_r, grad_x);
    add_mat_vec(p.u_r, da_r, grad_h_prev);
}

struct GruLayerCache {
    std::vector<GruStepCache> steps;
};

/// Runs the cell across the rows of `seq`; row t of the result is h_t.
/// h0 defaults to zeros when empty.
inline Matrix gru_layer_forward(const GruCellParams& p, const Matrix& seq,
                                const Vec& h0 = {}, GruLayerCache* cache = nullptr) {
    if (seq.rows == 0) throw std::invalid_argument("gru_layer_forward: empty sequence");
    require_dims(seq.cols == p.input_dim, "gru_layer_forward input width");
    Vec h = h0.empty() ? Vec(p.hidden_dim, 0.0) : h0;
    require_dims(h.size() == p.hidden_dim, "gru_layer_forward h0");
    Matrix out(seq.rows, p.hidden_dim);
    if (cache) cache->steps.resize(seq.rows);
    for (size_t t = 0; t < seq.rows; ++t) {
        h = gru_cell_forward(p, seq.row(t), h, cache ? &cache->steps[t] : nullptr);
        out.set_row(t, h);
    }
    return out;
}

/// BPTT over the layer. `grad_out` holds dL/dh_t per row; returns the
/// sequence gradient and adds parameter gradients into `grads`.
inline Matrix gru_layer_backward(const GruCellParams& p, const GruLayerCache& cache,
                                 const Matrix& grad_out, GruCellParams& grads,
                                 Vec* grad_h0 = nullptr) {
    const size_t t_len = cache.steps.size();
    if (grad_out.rows != t_len || grad_out.cols != p.hidden_dim)
        throw InvalidStateError("gru_layer_backward: gradient does not match cache");
    Matrix grad_seq(t_len, p.input_dim);
    Vec carry(p.hidden_dim, 0.0);
    for (size_t ti = t_len; ti-- > 0;) {
        Vec grad_h = grad_out.row(ti);
        for (size_t j = 0; j < p.hidden_dim; ++j) grad_h[j] += carry[j];
        Vec grad_x(p.input_dim, 0.0);
        Vec grad_h_prev(p.hidden_dim, 0.0);
        gru_cell_backward(p, cache.steps[ti], grad_h, grads, grad_x, grad_h_prev);
        grad_seq.set_row(ti, grad_x);
        carry = std::move(grad_h_prev);
    }
    if (grad_h0) *grad_h0 = carry;
    return grad_seq;
}

inline Matrix reverse_rows(const Matrix& m) {
    Matrix out(m.rows, m.cols);
    for (size_t t = 0; t < m.rows; ++t) out.set_row(t, m.row(m.rows - 1 - t));
    return out;
}

struct BiGruCache {
    GruLayerCache fwd;
    GruLayerCache bwd;
};

/// Bidirectional layer: row t = concat(forward h_t, backward h at t where
/// the backward pass consumed the time-reversed sequence).
inline Matrix bigru_forward(const GruCellParams& fwd, const GruCellParams& bwd,
                            const Matrix& seq, BiGruCache* cache = nullptr) {
    require_dims(fwd.hidden_dim == bwd.hidden_dim, "bigru hidden dims");
    require_dims(fwd.input_dim == bwd.input_dim, "bigru input dims");
    Matrix fwd_out = gru_layer_forward(fwd, seq, {}, cache ? &cache->fwd : nullptr);
    Matrix bwd_out = gru_layer_forward(bwd, reverse_rows(seq), {}, cache ? &cache->bwd : nullptr);
    const size_t h = fwd.hidden_dim;
    Matrix out(seq.rows, 2 * h);
    for (size_t t = 0; t < seq.rows; ++t) {
        for (size_t j = 0; j < h; ++j) {
            out(t, j) = fwd_out(t, j);
            out(t, h + j) = bwd_out(seq.rows - 1 - t, j);
        }
    }
    return out;
}

inline Matrix bigru_backward(const GruCellParams& fwd, const GruCellParams& bwd,
                             const BiGruCache& cache, const Matrix& grad_out,
                             GruCellParams& fwd_grads, GruCellParams& bwd_grads) {
    const size_t t_len = cache.fwd.steps.size();
    const size_t h = fwd.hidden_dim;
    if (grad_out.rows != t_len || grad_out.cols != 2 * h)
        throw InvalidStateError("bigru_backward: gradient does not match cache");
    Matrix grad_fwd(t_len, h), grad_bwd(t_len, h);
    for (size_t t = 0; t < t_len; ++t) {
        for (size_t j = 0; j < h; ++j) {
            grad_fwd(t, j) = grad_out(t, j);
            grad_bwd(t_len - 1 - t, j) = grad_out(t, h + j);
        }
    }
    Matrix grad_seq = gru_layer_backward(fwd, cache.fwd, grad_fwd, fwd_grads);
    Matrix grad_seq_rev = gru_layer_backward(bwd, cache.bwd, grad_bwd, bwd_grads);
    for (size_t t = 0; t < t_len; ++t)
        for (size_t j = 0; j < grad_seq.cols; ++j)
            grad_seq(t, j) += grad_seq_rev(t_len - 1 - t, j);
    return grad_seq;
}

} // namespace evcap
