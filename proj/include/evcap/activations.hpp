// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evcap/matrix.hpp"

namespace evcap {

inline constexpr double kLeakyReluSlope = 0.3;

inline double sigmoid(double x) {
    return 1.0 / (1.0 + std::exp(-x));
}

inline double leaky_relu(double x, double slope = kLeakyReluSlope) {
    return x >= 0.0 ? x : slope * x;
}

inline double leaky_relu_grad(double x, double slope = kLeakyReluSlope) {
    return x >= 0.0 ? 1.0 : slope;
}

/// Stable softmax (max-subtracted). Output sums to 1 and every entry is
/// strictly positive.
inline Vec softmax(const Vec& v) {
    if (v.empty()) throw std::invalid_argument("softmax: empty input");
    require_finite(v, "softmax input");
    const double vmax = *std::max_element(v.begin(), v.end());
    Vec out(v.size());
    double sum = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - vmax);
        sum += out[i];
    }
    for (double& x : out) x /= sum;
    return out;
}

inline double cross_entropy(const Vec& probs, size_t target_index) {
    if (target_index >= probs.size())
        throw std::invalid_argument("cross_entropy: target index out of range");
    return -std::log(probs[target_index]);
}

} // namespace evcap
