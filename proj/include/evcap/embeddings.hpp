// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "evcap/errors.hpp"
#include "evcap/io.hpp"
#include "evcap/matrix.hpp"
#include "evcap/rng.hpp"
#include "evcap/text.hpp"

namespace evcap {

inline constexpr char kEmbeddingMagic[4] = {'E', 'M', 'B', '1'};

/// Hyperparameters for skip-gram training with negative sampling.
struct SkipGramConfig {
    size_t embed_dim = 256;
    size_t window = 5;
    size_t negatives = 5;
    size_t epochs = 30;
    double learning_rate = 0.025;
    std::uint64_t seed = 42;

    void validate() const {
        if (embed_dim < 1)
            throw std::invalid_argument("skipgram config: embed_dim must be >= 1");
        if (window < 1)
            throw std::invalid_argument("skipgram config: window must be >= 1");
        if (negatives < 1)
            throw std::invalid_argument("skipgram config: negatives must be >= 1");
        if (epochs < 1)
            throw std::invalid_argument("skipgram config: epochs must be >= 1");
        if (!(learning_rate > 0.0))
            throw std::invalid_argument("skipgram config: learning_rate must be positive");
    }
};

struct SkipGramPair {
    std::uint32_t center = 0;
    std::uint32_t context = 0;
    bool operator==(const SkipGramPair&) const = default;
    bool operator<(const SkipGramPair& o) const {
        return center != o.center ? center < o.center : context < o.context;
    }
};

/// Emits (center, context) pairs for every token within +-window inside the
/// same sentence. Sequence markers and padding never appear on either side;
/// distances are measured over the remaining word tokens.
inline std::vector<SkipGramPair> generate_pairs(
    const std::vector<std::vector<std::uint32_t>>& sentences, size_t window) {
    if (window < 1) throw std::invalid_argument("generate_pairs: window must be >= 1");
    std::vector<SkipGramPair> pairs;
    std::vector<std::uint32_t> words;
    for (const auto& sentence : sentences) {
        words.clear();
        for (std::uint32_t id : sentence)
            if (id != kPadId && id != kSosId && id != kEosId) words.push_back(id);
        for (size_t i = 0; i < words.size(); ++i) {
            const size_t lo = i > window ? i - window : 0;
            const size_t hi = std::min(words.size(), i + window + 1);
            for (size_t j = lo; j < hi; ++j)
                if (j != i) pairs.push_back({words[i], words[j]});
        }
    }
    return pairs;
}

/// Negative-sampling distribution proportional to count^0.75 over word
/// occurrences; the four reserved ids carry zero mass.
inline std::vector<double> negative_distribution(
    const std::vector<std::vector<std::uint32_t>>& sentences, size_t vocab_size) {
    std::vector<double> weight(vocab_size, 0.0);
    for (const auto& sentence : sentences)
        for (std::uint32_t id : sentence) {
            if (id >= vocab_size)
                throw std::invalid_argument("negative_distribution: token id " +
                                            std::to_string(id) + " out of range (vocab " +
                                            std::to_string(vocab_size) + ")");
            weight[id] += 1.0;
        }
    for (std::uint32_t id : {kPadId, kSosId, kEosId, kUnkId})
        if (id < vocab_size) weight[id] = 0.0;
    double total = 0.0;
    for (double& w : weight) {
        w = w > 0.0 ? std::pow(w, 0.75) : 0.0;
        total += w;
    }
    if (total <= 0.0)
        throw std::invalid_argument("negative_distribution: corpus has no word tokens");
    for (double& w : weight) w /= total;
    return weight;
}

namespace detail {

inline double dot_span(const double* a, const double* b, size_t n) {
    double s = 0.0;
    for (size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

/// log(1 + exp(x)) without overflow for large |x|.
inline double softplus(double x) {
    return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace detail

/// Negative log likelihood of one (center, positive-context, negatives)
/// draw: -log sigma(u_o . v_c) - sum_n log sigma(-u_n . v_c).
inline double sgns_loss(const Vec& v_c, const Vec& u_o, const std::vector<Vec>& u_neg) {
    require_dims(v_c.size() == u_o.size(), "sgns_loss vector sizes");
    double loss = detail::softplus(-detail::dot_span(v_c.data(), u_o.data(), v_c.size()));
    for (const auto& u_n : u_neg) {
        require_dims(u_n.size() == v_c.size(), "sgns_loss negative sizes");
        loss += detail::softplus(detail::dot_span(v_c.data(), u_n.data(), v_c.size()));
    }
    return loss;
}

/// Analytic gradients of sgns_loss; overwrites the g_* outputs and returns
/// the loss.
inline double sgns_gradients(const Vec& v_c, const Vec& u_o, const std::vector<Vec>& u_neg,
                             Vec& g_vc, Vec& g_uo, std::vector<Vec>& g_neg) {
    const size_t dim = v_c.size();
    require_dims(u_o.size() == dim, "sgns_gradients vector sizes");
    g_vc.assign(dim, 0.0);
    g_uo.assign(dim, 0.0);
    g_neg.assign(u_neg.size(), Vec(dim, 0.0));

    const double x_pos = detail::dot_span(v_c.data(), u_o.data(), dim);
    double loss = detail::softplus(-x_pos);
    const double g_pos = detail::sigmoid(x_pos) - 1.0;
    for (size_t d = 0; d < dim; ++d) {
        g_uo[d] = g_pos * v_c[d];
        g_vc[d] += g_pos * u_o[d];
    }
    for (size_t k = 0; k < u_neg.size(); ++k) {
        require_dims(u_neg[k].size() == dim, "sgns_gradients negative sizes");
        const double x_neg = detail::dot_span(v_c.data(), u_neg[k].data(), dim);
        loss += detail::softplus(x_neg);
        const double g = detail::sigmoid(x_neg);
        for (size_t d = 0; d < dim; ++d) {
            g_neg[k][d] = g * v_c[d];
            g_vc[d] += g * u_neg[k][d];
        }
    }
    return loss;
}

struct SkipGramResult {
    Matrix embeddings;             // V x embed_dim input vectors
    std::vector<double> epoch_loss;  // mean pair loss per epoch
};

/// Trains skip-gram embeddings with negative sampling and SGD. The input
/// matrix starts uniform(-0.5/dim, 0.5/dim), the context matrix at zero;
/// the learning rate decays linearly toward a 1e-4 floor fraction over all
/// pair visits. Deterministic for a fixed seed and corpus.
inline SkipGramResult train_skipgram(const std::vector<std::vector<std::uint32_t>>& sentences,
                                     const SkipGramConfig& cfg, const Vocabulary& vocab) {
    cfg.validate();
    const size_t vocab_size = vocab.size();
    const size_t dim = cfg.embed_dim;

    auto pairs = generate_pairs(sentences, cfg.window);
    if (pairs.empty())
        throw std::invalid_argument(
            "train_skipgram: corpus yields no training pairs (every sentence has fewer "
            "than two word tokens)");
    const auto dist = negative_distribution(sentences, vocab_size);
    std::vector<double> cumulative(vocab_size, 0.0);
    double acc = 0.0;
    for (size_t i = 0; i < vocab_size; ++i) {
        acc += dist[i];
        cumulative[i] = acc;
    }
    cumulative.back() = 1.0;

    SeededRng rng(derive_seed(cfg.seed, "skipgram"));
    SkipGramResult result;
    result.embeddings = Matrix(vocab_size, dim);
    const double half = 0.5 / static_cast<double>(dim);
    for (double& w : result.embeddings.data) w = rng.uniform(-half, half);
    Matrix context(vocab_size, dim);

    std::vector<size_t> order(pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const double total_steps =
        static_cast<double>(cfg.epochs) * static_cast<double>(pairs.size());
    Vec g_vc(dim);
    size_t step = 0;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_sum = 0.0;
        for (size_t idx : order) {
            const auto& pair = pairs[idx];
            const double progress = static_cast<double>(step) / total_steps;
            const double lr = cfg.learning_rate * std::max(1.0 - progress, 1e-4);
            ++step;

            double* v_c = result.embeddings.row_ptr(pair.center);
            double* u_o = context.row_ptr(pair.context);
            std::fill(g_vc.begin(), g_vc.end(), 0.0);

            const double x_pos = detail::dot_span(v_c, u_o, dim);
            double loss = detail::softplus(-x_pos);
            const double g_pos = detail::sigmoid(x_pos) - 1.0;
            for (size_t d = 0; d < dim; ++d) {
                g_vc[d] += g_pos * u_o[d];
                u_o[d] -= lr * g_pos * v_c[d];
            }
            for (size_t k = 0; k < cfg.negatives; ++k) {
                const double u = rng.uniform01();
                auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
                size_t neg = std::min<size_t>(
                    static_cast<size_t>(it - cumulative.begin()), vocab_size - 1);
                if (neg == pair.context) continue;
                double* u_n = context.row_ptr(neg);
                const double x_neg = detail::dot_span(v_c, u_n, dim);
                loss += detail::softplus(x_neg);
                const double g = detail::sigmoid(x_neg);
                for (size_t d = 0; d < dim; ++d) {
                    g_vc[d] += g * u_n[d];
                    u_n[d] -= lr * g * v_c[d];
                }
            }
            for (size_t d = 0; d < dim; ++d) v_c[d] -= lr * g_vc[d];
            epoch_sum += loss;
        }
        result.epoch_loss.push_back(epoch_sum / static_cast<double>(pairs.size()));
    }
    return result;
}

inline double cosine(const Vec& u, const Vec& v) {
    require_dims(u.size() == v.size(), "cosine vector sizes");
    const double uu = detail::dot_span(u.data(), u.data(), u.size());
    const double vv = detail::dot_span(v.data(), v.data(), v.size());
    if (uu == 0.0 || vv == 0.0)
        throw std::invalid_argument("cosine: zero vector has no direction");
    return detail::dot_span(u.data(), v.data(), u.size()) / std::sqrt(uu * vv);
}

/// Serializes embeddings: magic "EMB1", u32 row count, u32 dimension, then
/// row-major f32 payload, all little-endian. Row order = vocabulary ids.
inline std::vector<std::uint8_t> serialize_embeddings(const Matrix& m) {
    std::vector<std::uint8_t> out;
    out.reserve(12 + m.size() * 4);
    out.insert(out.end(), kEmbeddingMagic, kEmbeddingMagic + 4);
    put_u32_le(out, static_cast<std::uint32_t>(m.rows));
    put_u32_le(out, static_cast<std::uint32_t>(m.cols));
    for (double v : m.data) put_f32_le(out, static_cast<float>(v));
    return out;
}

inline void save_embeddings(const Matrix& m, const std::filesystem::path& path) {
    write_file_atomic(path, serialize_embeddings(m));
}

inline Matrix parse_embeddings(const std::vector<std::uint8_t>& bytes,
                               const std::string& source) {
    ByteReader r(bytes, source);
    r.expect_magic(kEmbeddingMagic);
    const std::uint32_t rows = r.u32_le("row count");
    const std::uint32_t cols = r.u32_le("dimension");
    if (rows == 0 || cols == 0)
        throw FormatError(source + ": zero dimension (rows=" + std::to_string(rows) +
                          ", cols=" + std::to_string(cols) + ") at byte offset 4");
    const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
    if (count * 4 != r.remaining())
        throw FormatError(source + ": payload size mismatch at byte offset 12 (expected " +
                          std::to_string(count * 4) + " bytes for " + std::to_string(rows) +
                          "x" + std::to_string(cols) + ", have " +
                          std::to_string(r.remaining()) + ")");
    Matrix m(rows, cols);
    for (size_t i = 0; i < m.data.size(); ++i) m.data[i] = r.f32_le("payload");
    require_finite(m, source.c_str());
    return m;
}

inline Matrix load_embeddings(const std::filesystem::path& path) {
    return parse_embeddings(read_file_bytes(path), path.string());
}

} // namespace evcap
