// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "evcap/errors.hpp"

namespace evcap {

using Vec = std::vector<double>;

/// Dense row-major matrix of 64-bit floats; the carrier for every weight
/// and activation tensor.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    double* row_ptr(size_t r) { return data.data() + r * cols; }
    const double* row_ptr(size_t r) const { return data.data() + r * cols; }

    Vec row(size_t r) const {
        return Vec(row_ptr(r), row_ptr(r) + cols);
    }

    void set_row(size_t r, const Vec& v) {
        if (v.size() != cols) throw std::invalid_argument("set_row: size mismatch");
        for (size_t c = 0; c < cols; ++c) (*this)(r, c) = v[c];
    }

    size_t size() const { return data.size(); }
    void fill(double v) { data.assign(data.size(), v); }
};

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument("dimension mismatch: " + what);
}

/// out = x * W for a row vector x of length W.rows.
inline void mul_vec_mat(const Vec& x, const Matrix& w, Vec& out) {
    require_dims(x.size() == w.rows, "mul_vec_mat");
    out.assign(w.cols, 0.0);
    for (size_t i = 0; i < w.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wr = w.row_ptr(i);
        for (size_t j = 0; j < w.cols; ++j) out[j] += xi * wr[j];
    }
}

/// out += x * W.
inline void add_vec_mat(const Vec& x, const Matrix& w, Vec& out) {
    require_dims(x.size() == w.rows && out.size() == w.cols, "add_vec_mat");
    for (size_t i = 0; i < w.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* wr = w.row_ptr(i);
        for (size_t j = 0; j < w.cols; ++j) out[j] += xi * wr[j];
    }
}

/// W += outer(x, g); the usual weight-gradient accumulation.
inline void add_outer(const Vec& x, const Vec& g, Matrix& w) {
    require_dims(x.size() == w.rows && g.size() == w.cols, "add_outer");
    for (size_t i = 0; i < w.rows; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        double* wr = w.row_ptr(i);
        for (size_t j = 0; j < w.cols; ++j) wr[j] += xi * g[j];
    }
}

/// out += W * g, i.e. the input gradient through y = x * W.
inline void add_mat_vec(const Matrix& w, const Vec& g, Vec& out) {
    require_dims(g.size() == w.cols && out.size() == w.rows, "add_mat_vec");
    for (size_t i = 0; i < w.rows; ++i) {
        const double* wr = w.row_ptr(i);
        double acc = 0.0;
        for (size_t j = 0; j < w.cols; ++j) acc += wr[j] * g[j];
        out[i] += acc;
    }
}

inline void add_scaled(Vec& dst, const Vec& src, double scale) {
    require_dims(dst.size() == src.size(), "add_scaled");
    for (size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

inline bool all_finite(const Vec& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.data); }

inline void require_finite(const Vec& v, const char* what) {
    if (!all_finite(v)) throw NumericError(std::string("non-finite values in ") + what);
}

inline void require_finite(const Matrix& m, const char* what) {
    require_finite(m.data, what);
}

} // namespace evcap
