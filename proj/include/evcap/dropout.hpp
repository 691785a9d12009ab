// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

#include "evcap/batchnorm.hpp"
#include "evcap/matrix.hpp"
#include "evcap/rng.hpp"

namespace evcap {

/// Inverted dropout: in train mode each entry is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate), so inference is exactly
/// the identity. The survivor mask (already scaled) is written to `mask`
/// when provided, for use in the backward pass.
inline Vec dropout(const Vec& x, double rate, Mode mode, SeededRng& rng,
                   Vec* mask = nullptr) {
    if (rate < 0.0 || rate >= 1.0)
        throw std::invalid_argument("dropout: rate must be in [0, 1)");
    if (mode == Mode::Infer || rate == 0.0) {
        if (mask) mask->assign(x.size(), 1.0);
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Vec out(x.size());
    Vec m(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        m[i] = rng.uniform01() < rate ? 0.0 : keep_scale;
        out[i] = x[i] * m[i];
    }
    if (mask) *mask = std::move(m);
    return out;
}

inline Vec dropout_backward(const Vec& grad_out, const Vec& mask) {
    require_dims(grad_out.size() == mask.size(), "dropout_backward");
    Vec grad_in(grad_out.size());
    for (size_t i = 0; i < grad_out.size(); ++i) grad_in[i] = grad_out[i] * mask[i];
    return grad_in;
}

} // namespace evcap
