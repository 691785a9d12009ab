// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "evcap/matrix.hpp"

namespace evcap {

/// Bias-corrected Adam over one flat parameter vector. Moment buffers are
/// lazily sized on the first step and must keep the same size afterwards.
struct AdamState {
    Vec m;
    Vec v;
    uint64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

inline void adam_step(double* params, const double* grads, size_t n, AdamState& state) {
    if (state.m.empty()) {
        state.m.assign(n, 0.0);
        state.v.assign(n, 0.0);
    }
    if (state.m.size() != n)
        throw std::invalid_argument("adam_step: parameter count changed between steps");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
}

inline void adam_step(Vec& params, const Vec& grads, AdamState& state) {
    require_dims(params.size() == grads.size(), "adam_step");
    adam_step(params.data(), grads.data(), params.size(), state);
}

} // namespace evcap
