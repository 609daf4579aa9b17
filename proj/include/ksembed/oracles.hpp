#pragma once

#include <Eigen/Dense>
#include <map>
#include <stdexcept>
#include <vector>

#include "ksembed/common.hpp"
#include "ksembed/linalg.hpp"
#include "ksembed/rng.hpp"
#include "ksembed/sampling.hpp"

namespace ksembed {

// Brute-force references used only by tests and the verification harness.
// Everything here sits behind explicit size guards and is excluded from any
// benchmark timing.

// Row-indexing schemes mapping flat row offsets of an explicit lifting to
// FeatureIndex tuples.
struct PolyRowLayout {
    index_t d = 0;
    index_t q = 0;
    FeatureIndex to_feature(index_t flat) const {
        std::vector<index_t> idx(static_cast<size_t>(q));
        for (index_t a = q - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = flat % d;
            flat /= d;
        }
        return FeatureIndex(static_cast<int>(q), std::move(idx));
    }
    index_t rows() const {
        index_t r = 1;
        for (index_t a = 0; a < q; ++a) r *= d;
        return r;
    }
};

// Blocks w = 0..q of sizes d^w stacked in order; total D = sum d^j.
struct TaylorRowLayout {
    index_t d = 0;
    index_t q = 0;
    FeatureIndex to_feature(index_t flat) const {
        index_t block = 0;
        index_t size = 1;
        while (flat >= size) {
            flat -= size;
            size *= d;
            ++block;
            if (block > q) throw std::invalid_argument("TaylorRowLayout: offset out of range");
        }
        std::vector<index_t> idx(static_cast<size_t>(block));
        for (index_t a = block - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)] = flat % d;
            flat /= d;
        }
        return FeatureIndex(static_cast<int>(block), std::move(idx));
    }
    index_t rows() const {
        index_t r = 0, pw = 1;
        for (index_t j = 0; j <= q; ++j) { r += pw; pw *= d; }
        return r;
    }
};

// p_i proportional to the squared rows of Phi (B^T B + lambda I)^{-1/2},
// computed with a dense eigendecomposition of B^T B + lambda I.
inline std::vector<double> exact_row_norm_probabilities(const DenseMatrix& Phi,
                                                        const DenseMatrix& B, double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("exact_row_norm_distribution: lambda must be positive");
    if (Phi.rows() * Phi.cols() > index_t{10000000})
        throw resource_limit_error("exact_row_norm_distribution: size guard exceeded");
    const index_t n = Phi.cols();
    DenseMatrix R;
    if (B.rows() == 0) {
        R = Phi / std::sqrt(lambda);
    } else {
        if (B.cols() != n) throw std::invalid_argument("exact_row_norm_distribution: B dimension mismatch");
        DenseMatrix Gm = B.transpose() * B + lambda * DenseMatrix::Identity(n, n);
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(Gm);
        Vector inv_sqrt = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().cwiseInverse();
        R = Phi * es.eigenvectors() * inv_sqrt.asDiagonal() * es.eigenvectors().transpose();
    }
    Vector norms = R.rowwise().squaredNorm();
    double total = norms.sum();
    if (!(total > 0)) throw degenerate_input_error("exact_row_norm_distribution: Phi has no mass");
    std::vector<double> p(static_cast<size_t>(Phi.rows()));
    for (index_t i = 0; i < Phi.rows(); ++i) p[static_cast<size_t>(i)] = norms[i] / total;
    return p;
}

template <typename Layout>
std::map<FeatureIndex, double> exact_row_norm_distribution(const DenseMatrix& Phi,
                                                           const DenseMatrix& B, double lambda,
                                                           const Layout& layout) {
    auto p = exact_row_norm_probabilities(Phi, B, lambda);
    std::map<FeatureIndex, double> dist;
    for (index_t i = 0; i < Phi.rows(); ++i) dist[layout.to_feature(i)] = p[static_cast<size_t>(i)];
    return dist;
}

namespace detail {

inline index_t categorical_draw(const std::vector<double>& weights, double total, RngStream& rs) {
    double u = rs.uniform() * total;
    double acc = 0;
    index_t last = 0;
    for (index_t i = 0; i < static_cast<index_t>(weights.size()); ++i) {
        double w = weights[static_cast<size_t>(i)];
        if (w <= 0) continue;
        acc += w;
        last = i;
        if (u < acc) return i;
    }
    return last;
}

}  // namespace detail

// The recursive driver with an exact row sampler: every round samples directly from
// the exact row norm distribution of Phi (B^T B + lambda I)^{-1/2}. Reference
// pipeline for statistical comparison with the fast samplers.
inline SamplingMatrix dense_pipeline(const DenseMatrix& Phi, double lambda, double epsilon,
                                     double mu, const SamplerConfig& config) {
    RngStream root = RngStream(config.seed).derive("dense_pipeline");
    auto row_sampler = [&](const DenseMatrix& B, double round_lambda, index_t s,
                           index_t round) -> RoundResult {
        auto p = exact_row_norm_probabilities(Phi, B, round_lambda);
        double total = 0;
        for (double v : p) total += v;
        RngStream rs = root.derive("round", static_cast<std::uint64_t>(round));
        RoundResult out;
        out.sampler.s = s;
        out.sampler.data_dim = Phi.rows();
        out.sampler.degree = 1;
        out.embedded.resize(s, Phi.cols());
        for (index_t l = 0; l < s; ++l) {
            RngStream ds = rs.derive("draw", static_cast<std::uint64_t>(l));
            index_t i = detail::categorical_draw(p, total, ds);
            double pi = p[static_cast<size_t>(i)];
            WeightedSample ws;
            ws.index = FeatureIndex(1, {i});
            ws.claimed_probability = pi;
            ws.weight = 1.0 / std::sqrt(static_cast<double>(s) * pi);
            out.embedded.row(l) = ws.weight * Phi.row(i);
            out.sampler.samples.push_back(std::move(ws));
        }
        return out;
    };
    return recursive_leverage_sampling(row_sampler, Phi.squaredNorm(), lambda, epsilon, mu,
                                       Phi.cols(), config);
}

// The embedding S Phi for a sampler produced by dense_pipeline.
inline DenseMatrix dense_pipeline_embed(const DenseMatrix& Phi, const SamplingMatrix& sampler) {
    DenseMatrix Z(sampler.s, Phi.cols());
    for (index_t l = 0; l < sampler.s; ++l) {
        const auto& ws = sampler.samples[static_cast<size_t>(l)];
        Z.row(l) = ws.weight * Phi.row(ws.index.indices[0]);
    }
    return Z;
}

}  // namespace ksembed
