#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ksembed/sampler_core.hpp"

namespace ksembed {

// ||X^{(x) q}||_F^2 = sum_c ||x_c||^{2q}.
inline double poly_frobenius_sq(const SparseDataMatrix& X, index_t q) {
    double s = 0;
    for (index_t c = 0; c < X.n_cols(); ++c)
        s += std::pow(X.col_squared_norm(c), static_cast<double>(q));
    return s;
}

// Degree-q polynomial kernel matrix K_ij = <x_i, x_j>^q (test/bench oracle).
inline DenseMatrix poly_kernel_matrix(const SparseDataMatrix& X, index_t q) {
    DenseMatrix Xd = X.to_dense();
    DenseMatrix G = Xd.transpose() * Xd;
    return G.array().pow(static_cast<double>(q)).matrix();
}

namespace detail {

inline std::vector<double> poly_log_coeff(index_t q) {
    std::vector<double> lc(static_cast<size_t>(q + 1), kNegInf);
    lc[static_cast<size_t>(q)] = 0.0;  // point mass: the lifting is the single block X^{(x) q}
    return lc;
}

}  // namespace detail

// Near input-sparsity-time row norm sampler for X^{(x) q} (B^T B + lambda I)^{-1/2}.
inline SamplingMatrix poly_row_sampler(const SparseDataMatrix& X, index_t q, const DenseMatrix& B,
                                       double lambda, index_t s, const SamplerConfig& config,
                                       RngStream stream) {
    detail::RoundState st = detail::make_round_state(X, q, B, lambda, s, config,
                                                     detail::poly_log_coeff(q), nullptr,
                                                     /*taylor=*/false, stream);
    return detail::run_row_sampler(st, s, /*taylor_blocks=*/false, stream);
}

inline SamplingMatrix poly_row_sampler(const SparseDataMatrix& X, index_t q, const DenseMatrix& B,
                                       double lambda, index_t s, const SamplerConfig& config) {
    return poly_row_sampler(X, q, B, lambda, s, config,
                            RngStream(config.seed).derive("row_sampler"));
}

// Z = Pi X^{(x) q}: row l, column c is weight_l * prod_a X[i_a, c].
inline DenseMatrix poly_embed_rows(const SparseDataMatrix& X, const SamplingMatrix& Pi) {
    const index_t n = X.n_cols();
    DenseMatrix Z(Pi.s, n);
    Vector scratch(n);
    Vector acc(n);
    for (index_t l = 0; l < Pi.s; ++l) {
        const auto& ws = Pi.samples[static_cast<size_t>(l)];
        acc.setConstant(ws.weight);
        for (index_t i : ws.index.indices) {
            if (i < 0 || i >= X.n_rows())
                throw std::invalid_argument("poly_embed_rows: feature index out of range");
            scratch.setZero();
            for (const auto& e : X.row(i)) scratch[e.index] = e.value;
            acc.array() *= scratch.array();
        }
        Z.row(l) = acc;
    }
    return Z;
}

// Pi applied to the lifting of one new point: entry l = weight_l * prod_a x[i_a].
inline Vector poly_embed_out_of_sample(const SparseVector& x_new, const SamplingMatrix& Pi) {
    if (x_new.dim != Pi.data_dim)
        throw std::invalid_argument("poly_embed_out_of_sample: dimension mismatch");
    Vector dense = x_new.to_dense();
    Vector z(Pi.s);
    for (index_t l = 0; l < Pi.s; ++l) {
        const auto& ws = Pi.samples[static_cast<size_t>(l)];
        double v = ws.weight;
        for (index_t i : ws.index.indices) v *= dense[i];
        z[l] = v;
    }
    return z;
}

// RowSampler closure for the recursive driver; round t derives its own
// stream so the whole pipeline is a deterministic function of the seed.
inline RowSamplerFn make_poly_row_sampler(const SparseDataMatrix& X, index_t q,
                                          const SamplerConfig& config) {
    RngStream base = RngStream(config.seed).derive("row_sampler");
    return [&X, q, config, base](const DenseMatrix& B, double lambda, index_t s,
                                 index_t round) -> RoundResult {
        RoundResult out;
        out.sampler = poly_row_sampler(X, q, B, lambda, s, config,
                                       base.derive("round", static_cast<std::uint64_t>(round)));
        out.embedded = poly_embed_rows(X, out.sampler);
        return out;
    };
}

// Full adaptive pipeline for the polynomial kernel: the recursive driver
// over the polynomial row sampler, returning the sampler and Z = Pi Phi.
inline AdaptiveEmbedding poly_adaptive_embedding(const SparseDataMatrix& X, index_t q,
                                                 double lambda, double epsilon, double mu,
                                                 const SamplerConfig& config) {
    auto sampler = recursive_leverage_sampling(make_poly_row_sampler(X, q, config),
                                               poly_frobenius_sq(X, q), lambda, epsilon, mu,
                                               X.n_cols(), config);
    return {sampler, poly_embed_rows(X, sampler)};
}

}  // namespace ksembed
