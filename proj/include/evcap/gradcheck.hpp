// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "evcap/matrix.hpp"

namespace evcap {

struct GradCheckResult {
    std::string name;
    size_t checked = 0;
    double max_abs_diff = 0.0;
    double max_rel_err = 0.0;
    bool passed = true;
};

/// Relative error with an absolute floor: components whose magnitude sits
/// at or below `theta` auto-pass, since central differences at h = 1e-5
/// carry roughly 1e-10 of absolute noise and a relative comparison against
/// a smaller denominator would only measure that noise.
inline double grad_rel_err(double analytic, double numeric, double theta = 1e-6) {
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    if (denom <= theta) return 0.0;
    return std::abs(analytic - numeric) / denom;
}

/// Central-difference check of `analytic` against `loss` over a parameter
/// span, perturbing in place and restoring each entry.
inline GradCheckResult check_gradient(const std::string& name, double* params, size_t n,
                                      const double* analytic,
                                      const std::function<double()>& loss,
                                      double h = 1e-5, double tol = 1e-4,
                                      double theta = 1e-6) {
    GradCheckResult res;
    res.name = name;
    res.checked = n;
    for (size_t i = 0; i < n; ++i) {
        const double saved = params[i];
        params[i] = saved + h;
        const double up = loss();
        params[i] = saved - h;
        const double down = loss();
        params[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double abs_diff = std::abs(analytic[i] - numeric);
        const double rel = grad_rel_err(analytic[i], numeric, theta);
        res.max_abs_diff = std::max(res.max_abs_diff, abs_diff);
        res.max_rel_err = std::max(res.max_rel_err, rel);
    }
    res.passed = res.max_rel_err < tol;
    return res;
}

inline GradCheckResult check_gradient(const std::string& name, Vec& params,
                                      const Vec& analytic,
                                      const std::function<double()>& loss,
                                      double h = 1e-5, double tol = 1e-4) {
    require_dims(params.size() == analytic.size(), "check_gradient sizes");
    return check_gradient(name, params.data(), params.size(), analytic.data(), loss, h, tol);
}

} // namespace evcap
