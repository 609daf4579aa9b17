#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

#include "ksembed/common.hpp"
#include "ksembed/linalg.hpp"
#include "ksembed/rng.hpp"

namespace ksembed {

// A sampled coordinate of the lifted feature space: block degree w (always q
// for the plain polynomial kernel) and the tensor row tuple (i_1, ..., i_w).
struct FeatureIndex {
    int block_degree = 0;
    std::vector<index_t> indices;

    FeatureIndex() = default;
    FeatureIndex(int w, std::vector<index_t> idx) : block_degree(w), indices(std::move(idx)) {
        if (static_cast<int>(indices.size()) != block_degree)
            throw std::invalid_argument("FeatureIndex: tuple length must equal block_degree");
    }

    // Flat offset inside the concatenated lifting: block w starts at
    // (d^w - 1)/(d - 1), the tuple is encoded row-major within the block.
    index_t flat_offset(index_t d) const {
        index_t off = 0;
        index_t pw = 1;
        for (int b = 0; b < block_degree; ++b) { off += pw; pw *= d; }
        index_t enc = 0;
        for (index_t i : indices) enc = enc * d + i;
        return off + enc;
    }

    friend bool operator==(const FeatureIndex& a, const FeatureIndex& b) {
        return a.block_degree == b.block_degree && a.indices == b.indices;
    }
    friend bool operator<(const FeatureIndex& a, const FeatureIndex& b) {
        if (a.block_degree != b.block_degree) return a.block_degree < b.block_degree;
        return a.indices < b.indices;
    }
};

struct WeightedSample {
    FeatureIndex index;
    double weight = 0;               // the beta^{-1/2} scale
    double claimed_probability = 0;  // beta / s, the sampler's own per-draw probability
};

// weight must equal 1/sqrt(s * claimed_probability).
inline bool weight_consistency_check(const WeightedSample& sample, index_t s,
                                     double rel_tol = 1e-9) {
    if (!(sample.claimed_probability > 0) || sample.claimed_probability > 1.0 + rel_tol)
        return false;
    double expect = 1.0 / std::sqrt(static_cast<double>(s) * sample.claimed_probability);
    return std::abs(sample.weight - expect) <= rel_tol * expect;
}

struct SamplingMatrix {
    index_t s = 0;
    std::vector<WeightedSample> samples;
    index_t data_dim = 0;   // d of the dataset the sampler was built for
    int degree = 0;         // q of the lifting
    bool taylor_blocks = false;  // true when block degrees vary (Taylor lifting)
    bool degenerate_warning = false;  // set when the driver short-circuited
};

// Sampler constants and dimension caps. The caps exist for benchmark-scale
// runs, where the default dimension formulas grow far past what desk-scale
// accuracy needs.
struct SamplerConfig {
    double sample_constant = 16.0;  // C in s = ceil(C mu eps^-2 log2 n); 4/alpha at alpha=1/4
    double c1 = 8.0;                // d'  = max(ceil(c1 q log2 n), 8)
    double c2 = 8.0;                // m'  = max(ceil(c2 q^2 log2 n), 8)
    double c3 = 8.0;                // n'  = max(ceil(c3 q^2 log2 n), 8)
    index_t osnap_sparsity = 8;
    double alpha = 0.25;            // row norm sampler guarantee floor
    RandomSeed seed = 0;
    index_t d_prime_cap = std::numeric_limits<index_t>::max();
    index_t m_prime_cap = std::numeric_limits<index_t>::max();
    index_t n_prime_cap = std::numeric_limits<index_t>::max();
    index_t s_int_cap = std::numeric_limits<index_t>::max();
    std::optional<index_t> s_override;  // fix the sample count directly (CLI "s" mode)

    index_t d_prime(index_t q, index_t n) const {
        double v = c1 * static_cast<double>(q) * std::log2(std::max<double>(2.0, static_cast<double>(n)));
        return std::min<index_t>(std::max<index_t>(static_cast<index_t>(std::ceil(v)), 8), d_prime_cap);
    }
    index_t m_prime(index_t q, index_t n) const {
        double v = c2 * static_cast<double>(q) * static_cast<double>(q) *
                   std::log2(std::max<double>(2.0, static_cast<double>(n)));
        return std::min<index_t>(std::max<index_t>(static_cast<index_t>(std::ceil(v)), 8), m_prime_cap);
    }
    index_t n_prime(index_t q, index_t n) const {
        double v = c3 * static_cast<double>(q) * static_cast<double>(q) *
                   std::log2(std::max<double>(2.0, static_cast<double>(n)));
        return std::min<index_t>(std::max<index_t>(static_cast<index_t>(std::ceil(v)), 8), n_prime_cap);
    }
    index_t sample_count(double mu, double epsilon, index_t n) const {
        if (s_override) return std::max<index_t>(1, *s_override);
        double v = sample_constant * mu / (epsilon * epsilon) *
                   std::log2(std::max<double>(2.0, static_cast<double>(n)));
        return std::max<index_t>(1, static_cast<index_t>(std::ceil(v)));
    }
};

// lambda_0 = ||Phi||_F^2 / eps, T = ceil(log2(lambda_0 / lambda)), halving
// each round. T clamps at 0 when lambda >= lambda_0; the driver still runs
// one round at the lambda_0 scale in that case.
struct RidgeSchedule {
    double lambda0 = 0;
    index_t T = 0;

    RidgeSchedule(double frobenius_sq, double lambda, double epsilon) {
        if (!(frobenius_sq > 0)) throw std::invalid_argument("RidgeSchedule: ||Phi||_F^2 must be positive");
        if (!(lambda > 0)) throw std::invalid_argument("RidgeSchedule: lambda must be positive");
        lambda0 = frobenius_sq / epsilon;
        double t = std::ceil(std::log2(lambda0 / lambda));
        T = t > 0 ? static_cast<index_t>(t) : 0;
    }

    // Regularizer fed to the round-t sampler (1-based round).
    double round_lambda(index_t t) const { return lambda0 / std::pow(2.0, static_cast<double>(t - 1)); }
    double final_lambda() const { return lambda0 / std::pow(2.0, static_cast<double>(T)); }
};

// One round of the recursive driver: the sampler built against B = S_{t-1} Phi
// plus the embedded rows S_t Phi the next round needs.
struct RoundResult {
    SamplingMatrix sampler;
    DenseMatrix embedded;  // s x n
};

// RowSampler contract: given B (m x n, possibly 0 rows), the round's
// regularizer and the sample count, return a rank-s row norm sampler for
// Phi (B^T B + lambda I)^{-1/2} together with S Phi.
using RowSamplerFn = std::function<RoundResult(const DenseMatrix& B, double lambda, index_t s,
                                               index_t round)>;

// Recursive leverage score sampling: T rounds of RowSampler with the
// regularizer halving each round, each round fed the previous round's
// embedded matrix.
inline SamplingMatrix recursive_leverage_sampling(const RowSamplerFn& row_sampler,
                                                  double frobenius_sq, double lambda,
                                                  double epsilon, double mu, index_t n,
                                                  const SamplerConfig& config) {
    if (!(epsilon > 0) || epsilon > 1.0 / 3.0 + 1e-12)
        throw std::invalid_argument("recursive_leverage_sampling: epsilon must lie in (0, 1/3]");
    if (!(mu > 0)) throw std::invalid_argument("recursive_leverage_sampling: mu must be positive");
    RidgeSchedule schedule(frobenius_sq, lambda, epsilon);
    const index_t s = config.sample_count(mu, epsilon, n);
    const index_t rounds = std::max<index_t>(schedule.T, 1);

    DenseMatrix B(0, n);
    RoundResult round;
    for (index_t t = 1; t <= rounds; ++t) {
        round = row_sampler(B, schedule.round_lambda(t), s, t);
        if (round.embedded.size() == 0 || round.embedded.squaredNorm() == 0.0) {
            round.sampler.degenerate_warning = true;
            return round.sampler;
        }
        B = round.embedded;
    }
    return round.sampler;
}

// A sampler together with its materialized embedding Z = Pi Phi.
struct AdaptiveEmbedding {
    SamplingMatrix sampler;
    DenseMatrix Z;
};

struct RowNormVerifyResult {
    bool passed = false;
    double worst_ratio = 0;
};

// Definition-2 harness: for every index with exact probability e >= 50/N the
// empirical frequency must clear alpha * e - 3 sqrt(e/N).
inline RowNormVerifyResult verify_row_norm_sampler(
    const std::map<FeatureIndex, double>& empirical,
    const std::map<FeatureIndex, double>& exact_distribution, double alpha, index_t N) {
    if (N < 10000) throw std::invalid_argument("verify_row_norm_sampler: N must be at least 1e4");
    double total = 0;
    for (const auto& [idx, p] : exact_distribution) {
        if (p < 0) throw std::invalid_argument("verify_row_norm_sampler: negative probability");
        total += p;
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw std::invalid_argument("verify_row_norm_sampler: exact distribution must sum to 1");
    for (const auto& [idx, f] : empirical) {
        if (f > 0 && exact_distribution.find(idx) == exact_distribution.end())
            throw std::invalid_argument("verify_row_norm_sampler: empirical support outside exact support");
    }
    RowNormVerifyResult res;
    res.passed = true;
    res.worst_ratio = std::numeric_limits<double>::infinity();
    const double floor = 50.0 / static_cast<double>(N);
    for (const auto& [idx, e] : exact_distribution) {
        if (e < floor) continue;
        auto it = empirical.find(idx);
        double f = it == empirical.end() ? 0.0 : it->second;
        double slack = 3.0 * std::sqrt(e / static_cast<double>(N));
        if (f < alpha * e - slack) res.passed = false;
        res.worst_ratio = std::min(res.worst_ratio, f / e);
    }
    if (!std::isfinite(res.worst_ratio)) res.worst_ratio = 1.0;  // nothing met the floor
    return res;
}

}  // namespace ksembed
