#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "ksembed/sampler_core.hpp"

namespace ksembed {

// A truncated dot-product kernel k_q(x,y) = g(x) g(y) sum_{j<=q} a_j <x,y>^j
// with nonnegative coefficients (Schoenberg), the Gaussian kernel being the
// instance a_j = 1/j!, g(x) = exp(-||x||^2/2). Coefficients are stored in log
// space; factorials overflow doubles long before q reaches useful truncation
// degrees for large-radius data.
struct TaylorKernelSpec {
    index_t q = 0;
    std::vector<double> log_coeff;  // log a_j for j = 0..q, -inf for zero coefficients
    bool gaussian_prefactor = false;  // g(x) = exp(-||x||^2/2) when set, else g = 1
    double radius = std::numeric_limits<double>::infinity();  // bound on ||x||^2

    static TaylorKernelSpec gaussian(index_t q, double radius) {
        TaylorKernelSpec spec;
        spec.q = q;
        spec.log_coeff.resize(static_cast<size_t>(q + 1));
        for (index_t j = 0; j <= q; ++j)
            spec.log_coeff[static_cast<size_t>(j)] = -std::lgamma(static_cast<double>(j) + 1.0);
        spec.gaussian_prefactor = true;
        spec.radius = radius;
        return spec;
    }

    // k(x,y) = 1/(2 - <x,y>) = sum_j 2^{-j-1} <x,y>^j on the unit ball.
    static TaylorKernelSpec inverse_polynomial(index_t q) {
        TaylorKernelSpec spec;
        spec.q = q;
        spec.log_coeff.resize(static_cast<size_t>(q + 1));
        const double log_half = -std::log(2.0);
        for (index_t j = 0; j <= q; ++j)
            spec.log_coeff[static_cast<size_t>(j)] = log_half * static_cast<double>(j + 1);
        return spec;
    }

    static TaylorKernelSpec from_coefficients(const std::vector<double>& coeff) {
        if (coeff.empty()) throw std::invalid_argument("TaylorKernelSpec: need at least a_0");
        TaylorKernelSpec spec;
        spec.q = static_cast<index_t>(coeff.size()) - 1;
        spec.log_coeff.resize(coeff.size());
        bool any = false;
        for (size_t j = 0; j < coeff.size(); ++j) {
            if (!(coeff[j] >= 0) || !std::isfinite(coeff[j]))
                throw std::invalid_argument("TaylorKernelSpec: coefficients must be nonnegative");
            any = any || coeff[j] > 0;
            spec.log_coeff[j] = coeff[j] > 0 ? std::log(coeff[j]) : detail::kNegInf;
        }
        if (!any) throw std::invalid_argument("TaylorKernelSpec: all coefficients are zero");
        return spec;
    }

    // Single-block spec concentrating all mass on degree q (the plain
    // polynomial kernel as a Taylor instance).
    static TaylorKernelSpec point_mass(index_t q) {
        TaylorKernelSpec spec;
        spec.q = q;
        spec.log_coeff.assign(static_cast<size_t>(q + 1), detail::kNegInf);
        spec.log_coeff[static_cast<size_t>(q)] = 0.0;
        return spec;
    }

    double coeff(index_t j) const {
        double l = log_coeff[static_cast<size_t>(j)];
        return l == detail::kNegInf ? 0.0 : std::exp(l);
    }
    double sqrt_coeff(index_t j) const {
        double l = log_coeff[static_cast<size_t>(j)];
        return l == detail::kNegInf ? 0.0 : std::exp(0.5 * l);
    }
    double prefactor(double squared_norm) const {
        return gaussian_prefactor ? std::exp(-0.5 * squared_norm) : 1.0;
    }

    // Truncated kernel value from a dot product and the two squared norms.
    double kernel_value(double dot, double sqx, double sqy) const {
        double s = 0;
        double p = 1;
        for (index_t j = 0; j <= q; ++j) {
            s += coeff(j) * p;
            p *= dot;
        }
        return prefactor(sqx) * prefactor(sqy) * s;
    }
};

// Smallest q with n e^r r^{q+1} / (q+1)! <= 1e-9 (Taylor tail of e^r times
// the union over n^2 kernel entries folded into operator norm), scaled by the
// safety factor.
inline index_t truncation_degree(double r, index_t n, double safety = 1.0) {
    if (!(r >= 0)) throw std::invalid_argument("truncation_degree: radius must be nonnegative");
    if (n < 1) throw std::invalid_argument("truncation_degree: n must be >= 1");
    if (r == 0) return 0;
    const double target = std::log(1e-9);
    const double base = std::log(static_cast<double>(n)) + r;
    for (index_t q = 0; q <= 2000; ++q) {
        double tail = base + static_cast<double>(q + 1) * std::log(r) -
                      std::lgamma(static_cast<double>(q + 2));
        if (tail <= target)
            return static_cast<index_t>(std::ceil(static_cast<double>(q) * safety));
    }
    throw std::invalid_argument("truncation_degree: radius too large");
}

// ||Phi||_F^2 = sum_c g(x_c)^2 sum_j a_j ||x_c||^{2j}, in closed form.
inline double taylor_frobenius_sq(const SparseDataMatrix& X, const TaylorKernelSpec& spec) {
    double total = 0;
    for (index_t c = 0; c < X.n_cols(); ++c) {
        double sq = X.col_squared_norm(c);
        double m = detail::kNegInf;
        for (index_t j = 0; j <= spec.q; ++j) {
            double lt = spec.log_coeff[static_cast<size_t>(j)];
            if (lt == detail::kNegInf) continue;
            lt += sq > 0 ? static_cast<double>(j) * std::log(sq) : (j > 0 ? detail::kNegInf : 0.0);
            m = std::max(m, lt);
        }
        if (m == detail::kNegInf) continue;
        double acc = 0;
        for (index_t j = 0; j <= spec.q; ++j) {
            double lt = spec.log_coeff[static_cast<size_t>(j)];
            if (lt == detail::kNegInf) continue;
            lt += sq > 0 ? static_cast<double>(j) * std::log(sq) : (j > 0 ? detail::kNegInf : 0.0);
            if (lt > detail::kNegInf) acc += std::exp(lt - m);
        }
        double g = spec.prefactor(sq);
        total += g * g * std::exp(m) * acc;
    }
    return total;
}

namespace detail {

inline void check_radius(const SparseDataMatrix& X, const TaylorKernelSpec& spec) {
    if (!spec.gaussian_prefactor || !std::isfinite(spec.radius)) return;
    for (index_t c = 0; c < X.n_cols(); ++c) {
        if (X.col_squared_norm(c) > spec.radius * (1.0 + 1e-9))
            throw std::invalid_argument(
                "taylor_row_sampler: column squared norm exceeds the declared radius");
    }
}

inline Vector prefactor_vector(const SparseDataMatrix& X, const TaylorKernelSpec& spec) {
    Vector g(X.n_cols());
    for (index_t c = 0; c < X.n_cols(); ++c) g[c] = spec.prefactor(X.col_squared_norm(c));
    return g;
}

}  // namespace detail

// Row norm sampler for the truncated-Taylor lifting
// Phi = diag over blocks of sqrt(a_w) X^{(x) w}, columns scaled by g(x_c).
inline SamplingMatrix taylor_row_sampler(const SparseDataMatrix& X, const TaylorKernelSpec& spec,
                                         const DenseMatrix& B, double lambda, index_t s,
                                         const SamplerConfig& config, RngStream stream) {
    if (spec.q < 1) throw std::invalid_argument("taylor_row_sampler: truncation degree must be >= 1");
    detail::check_radius(X, spec);
    Vector g = detail::prefactor_vector(X, spec);
    detail::RoundState st = detail::make_round_state(X, spec.q, B, lambda, s, config,
                                                     spec.log_coeff, &g, /*taylor=*/true, stream);
    return detail::run_row_sampler(st, s, /*taylor_blocks=*/true, stream);
}

inline SamplingMatrix taylor_row_sampler(const SparseDataMatrix& X, const TaylorKernelSpec& spec,
                                         const DenseMatrix& B, double lambda, index_t s,
                                         const SamplerConfig& config) {
    return taylor_row_sampler(X, spec, B, lambda, s, config,
                              RngStream(config.seed).derive("row_sampler"));
}

// Z[l, c] = weight_l * g(x_c) * sqrt(a_w) * prod_a X[i_a, c].
inline DenseMatrix taylor_embed_rows(const SparseDataMatrix& X, const TaylorKernelSpec& spec,
                                     const SamplingMatrix& Pi) {
    if (!Pi.taylor_blocks || Pi.degree != static_cast<int>(spec.q) || Pi.data_dim != X.n_rows())
        throw std::invalid_argument("taylor_embed_rows: sampler does not match this spec");
    const index_t n = X.n_cols();
    Vector g = detail::prefactor_vector(X, spec);
    DenseMatrix Z(Pi.s, n);
    Vector scratch(n);
    Vector acc(n);
    for (index_t l = 0; l < Pi.s; ++l) {
        const auto& ws = Pi.samples[static_cast<size_t>(l)];
        if (ws.index.block_degree < 0 || ws.index.block_degree > spec.q)
            throw std::invalid_argument("taylor_embed_rows: block degree out of range");
        acc = g * (ws.weight * spec.sqrt_coeff(ws.index.block_degree));
        for (index_t i : ws.index.indices) {
            if (i < 0 || i >= X.n_rows())
                throw std::invalid_argument("taylor_embed_rows: feature index out of range");
            scratch.setZero();
            for (const auto& e : X.row(i)) scratch[e.index] = e.value;
            acc.array() *= scratch.array();
        }
        Z.row(l) = acc;
    }
    return Z;
}

inline Vector taylor_embed_out_of_sample(const SparseVector& x_new, const TaylorKernelSpec& spec,
                                         const SamplingMatrix& Pi) {
    if (x_new.dim != Pi.data_dim)
        throw std::invalid_argument("taylor_embed_out_of_sample: dimension mismatch");
    double gv = spec.prefactor(x_new.squared_norm());
    Vector dense = x_new.to_dense();
    Vector z(Pi.s);
    for (index_t l = 0; l < Pi.s; ++l) {
        const auto& ws = Pi.samples[static_cast<size_t>(l)];
        double v = ws.weight * gv * spec.sqrt_coeff(ws.index.block_degree);
        for (index_t i : ws.index.indices) v *= dense[i];
        z[l] = v;
    }
    return z;
}

// Explicit lifting A (D x n, D = sum_j d^j): block w of column c is
// g(x_c) sqrt(a_w) x_c^{(x) w}. Oracle only.
inline DenseMatrix dense_lifting(const SparseDataMatrix& X, const TaylorKernelSpec& spec) {
    index_t D = 0, pw = 1;
    for (index_t j = 0; j <= spec.q; ++j) {
        D += pw;
        if (j < spec.q) pw *= X.n_rows();
        if (D > index_t{20000000}) throw resource_limit_error("dense_lifting: D too large");
    }
    if (D * X.n_cols() > index_t{10000000})
        throw resource_limit_error("dense_lifting: D * n exceeds the oracle guard");
    DenseMatrix A = DenseMatrix::Zero(D, X.n_cols());
    for (index_t c = 0; c < X.n_cols(); ++c) {
        Vector x = X.col_vector(c).to_dense();
        double g = spec.prefactor(X.col_squared_norm(c));
        index_t offset = 0;
        Vector block(1);
        block[0] = 1.0;
        for (index_t w = 0; w <= spec.q; ++w) {
            double sa = spec.sqrt_coeff(w);
            if (sa != 0.0) A.block(offset, c, block.size(), 1) = g * sa * block;
            offset += block.size();
            if (w < spec.q) {
                Vector next(block.size() * X.n_rows());
                for (index_t i = 0; i < block.size(); ++i)
                    for (index_t r = 0; r < X.n_rows(); ++r)
                        next[i * X.n_rows() + r] = block[i] * x[r];
                block.swap(next);
            }
        }
    }
    return A;
}

// K_ij = exp(-||x_i - x_j||^2 / 2); oracle-scale.
inline DenseMatrix gaussian_kernel_matrix(const SparseDataMatrix& X) {
    if (X.n_cols() > 10000)
        throw resource_limit_error("gaussian_kernel_matrix: n exceeds the oracle guard");
    DenseMatrix Xd = X.to_dense();
    Vector sq = Xd.colwise().squaredNorm();
    DenseMatrix G = Xd.transpose() * Xd;
    DenseMatrix K(X.n_cols(), X.n_cols());
    for (index_t i = 0; i < X.n_cols(); ++i)
        for (index_t j = 0; j < X.n_cols(); ++j)
            K(i, j) = std::exp(-0.5 * (sq[i] + sq[j] - 2.0 * G(i, j)));
    return K;
}

// Truncated dot-product kernel matrix for a spec (exact-KRR oracle).
inline DenseMatrix taylor_kernel_matrix(const SparseDataMatrix& X, const TaylorKernelSpec& spec) {
    DenseMatrix Xd = X.to_dense();
    Vector sq = Xd.colwise().squaredNorm();
    DenseMatrix G = Xd.transpose() * Xd;
    DenseMatrix K(X.n_cols(), X.n_cols());
    for (index_t i = 0; i < X.n_cols(); ++i)
        for (index_t j = 0; j < X.n_cols(); ++j)
            K(i, j) = spec.kernel_value(G(i, j), sq[i], sq[j]);
    return K;
}

inline RowSamplerFn make_taylor_row_sampler(const SparseDataMatrix& X, const TaylorKernelSpec& spec,
                                            const SamplerConfig& config) {
    RngStream base = RngStream(config.seed).derive("row_sampler");
    return [&X, spec, config, base](const DenseMatrix& B, double lambda, index_t s,
                                    index_t round) -> RoundResult {
        RoundResult out;
        out.sampler = taylor_row_sampler(X, spec, B, lambda, s, config,
                                         base.derive("round", static_cast<std::uint64_t>(round)));
        out.embedded = taylor_embed_rows(X, spec, out.sampler);
        return out;
    };
}

inline AdaptiveEmbedding taylor_adaptive_embedding(const SparseDataMatrix& X,
                                                   const TaylorKernelSpec& spec, double lambda,
                                                   double epsilon, double mu,
                                                   const SamplerConfig& config) {
    auto sampler = recursive_leverage_sampling(make_taylor_row_sampler(X, spec, config),
                                               taylor_frobenius_sq(X, spec), lambda, epsilon, mu,
                                               X.n_cols(), config);
    return {sampler, taylor_embed_rows(X, spec, sampler)};
}

}  // namespace ksembed
