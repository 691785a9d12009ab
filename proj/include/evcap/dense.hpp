// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

#include "evcap/activations.hpp"
#include "evcap/matrix.hpp"

namespace evcap {

enum class Activation { Linear, LeakyRelu, Softmax };

struct DenseParams {
    Matrix w;  // in x out
    Vec b;     // out
    Activation activation = Activation::Linear;

    size_t in_dim() const { return w.rows; }
    size_t out_dim() const { return w.cols; }
    size_t param_count() const { return w.size() + b.size(); }

    static DenseParams zeros(size_t in, size_t out,
                             Activation act = Activation::Linear) {
        DenseParams p;
        p.w = Matrix(in, out);
        p.b.assign(out, 0.0);
        p.activation = act;
        return p;
    }
};

struct DenseCache {
    Vec x;      // input
    Vec pre;    // x*W + b
    Vec y;      // activated output
};

inline Vec dense_forward(const DenseParams& p, const Vec& x, DenseCache* cache = nullptr) {
    require_dims(x.size() == p.in_dim(), "dense_forward input");
    Vec pre;
    mul_vec_mat(x, p.w, pre);
    for (size_t j = 0; j < pre.size(); ++j) pre[j] += p.b[j];
    Vec y;
    switch (p.activation) {
        case Activation::Linear:
            y = pre;
            break;
        case Activation::LeakyRelu:
            y.resize(pre.size());
            for (size_t j = 0; j < pre.size(); ++j) y[j] = leaky_relu(pre[j]);
            break;
        case Activation::Softmax:
            y = softmax(pre);
            break;
    }
    if (cache) {
        cache->x = x;
        cache->pre = pre;
        cache->y = y;
    }
    return y;
}

/// Accumulates parameter gradients into `grads` (same shapes as `p`) and
/// returns the input gradient.
inline Vec dense_backward(const DenseParams& p, const DenseCache& cache,
                          const Vec& grad_y, DenseParams& grads) {
    require_dims(grad_y.size() == p.out_dim(), "dense_backward grad");
    if (cache.x.size() != p.in_dim())
        throw InvalidStateError("dense_backward: cache does not match params");
    Vec grad_pre(p.out_dim());
    switch (p.activation) {
        case Activation::Linear:
            grad_pre = grad_y;
            break;
        case Activation::LeakyRelu:
            for (size_t j = 0; j < grad_pre.size(); ++j)
                grad_pre[j] = grad_y[j] * leaky_relu_grad(cache.pre[j]);
            break;
        case Activation::Softmax: {
            // d pre_j = p_j * (g_j - sum_k g_k p_k)
            double dot = 0.0;
            for (size_t k = 0; k < grad_y.size(); ++k) dot += grad_y[k] * cache.y[k];
            for (size_t j = 0; j < grad_pre.size(); ++j)
                grad_pre[j] = cache.y[j] * (grad_y[j] - dot);
            break;
        }
    }
    add_outer(cache.x, grad_pre, grads.w);
    for (size_t j = 0; j < grad_pre.size(); ++j) grads.b[j] += grad_pre[j];
    Vec grad_x(p.in_dim(), 0.0);
    add_mat_vec(p.w, grad_pre, grad_x);
    return grad_x;
}

} // namespace evcap
