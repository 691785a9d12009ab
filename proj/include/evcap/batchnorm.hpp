// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <stdexcept>

#include "evcap/matrix.hpp"

namespace evcap {

enum class Mode { Train, Infer };

struct BatchNormParams {
    Vec gamma;
    Vec beta;
    Vec running_mean;
    Vec running_var;
    double momentum = 0.99;
    double epsilon = 1e-5;

    size_t dim() const { return gamma.size(); }

    static BatchNormParams make(size_t dim) {
        BatchNormParams p;
        p.gamma.assign(dim, 1.0);
        p.beta.assign(dim, 0.0);
        p.running_mean.assign(dim, 0.0);
        p.running_var.assign(dim, 1.0);
        return p;
    }
};

struct BatchNormCache {
    Matrix x_hat;   // normalized, pre-scale
    Vec inv_std;    // 1/sqrt(var + eps) per column
};

/// Train mode normalizes by batch statistics (biased variance) and, when
/// `update_running` is set, folds them into the running estimates. Infer
/// mode uses the running estimates only.
inline Matrix batchnorm_forward(BatchNormParams& p, const Matrix& batch, Mode mode,
                                BatchNormCache* cache = nullptr,
                                bool update_running = true) {
    require_dims(batch.cols == p.dim(), "batchnorm input width");
    const size_t b = batch.rows;
    const size_t d = batch.cols;
    Matrix out(b, d);
    if (mode == Mode::Infer) {
        for (size_t j = 0; j < d; ++j) {
            const double inv = 1.0 / std::sqrt(p.running_var[j] + p.epsilon);
            for (size_t i = 0; i < b; ++i)
                out(i, j) = p.gamma[j] * (batch(i, j) - p.running_mean[j]) * inv + p.beta[j];
        }
        return out;
    }
    if (b < 2) throw std::invalid_argument("batchnorm: train mode needs at least 2 rows");
    Matrix x_hat(b, d);
    Vec inv_std(d);
    for (size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        for (size_t i = 0; i < b; ++i) mean += batch(i, j);
        mean /= static_cast<double>(b);
        double var = 0.0;
        for (size_t i = 0; i < b; ++i) {
            const double c = batch(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(b);
        const double inv = 1.0 / std::sqrt(var + p.epsilon);
        inv_std[j] = inv;
        for (size_t i = 0; i < b; ++i) {
            x_hat(i, j) = (batch(i, j) - mean) * inv;
            out(i, j) = p.gamma[j] * x_hat(i, j) + p.beta[j];
        }
        if (update_running) {
            p.running_mean[j] = p.momentum * p.running_mean[j] + (1.0 - p.momentum) * mean;
            p.running_var[j] = p.momentum * p.running_var[j] + (1.0 - p.momentum) * var;
        }
    }
    if (cache) {
        cache->x_hat = std::move(x_hat);
        cache->inv_std = std::move(inv_std);
    }
    return out;
}

/// Train-mode backward. Accumulates gamma/beta gradients and returns the
/// input gradient.
inline Matrix batchnorm_backward(const BatchNormParams& p, const BatchNormCache& cache,
                                 const Matrix& grad_out, BatchNormParams& grads) {
    const size_t b = grad_out.rows;
    const size_t d = grad_out.cols;
    if (cache.x_hat.rows != b || cache.x_hat.cols != d)
        throw InvalidStateError("batchnorm_backward: cache does not match gradient");
    Matrix grad_in(b, d);
    for (size_t j = 0; j < d; ++j) {
        double sum_g = 0.0;
        double sum_gx = 0.0;
        for (size_t i = 0; i < b; ++i) {
            sum_g += grad_out(i, j);
            sum_gx += grad_out(i, j) * cache.x_hat(i, j);
        }
        grads.beta[j] += sum_g;
        grads.gamma[j] += sum_gx;
        const double scale = p.gamma[j] * cache.inv_std[j] / static_cast<double>(b);
        for (size_t i = 0; i < b; ++i) {
            grad_in(i, j) = scale * (static_cast<double>(b) * grad_out(i, j) - sum_g -
                                     cache.x_hat(i, j) * sum_gx);
        }
    }
    return grad_in;
}

} // namespace evcap
