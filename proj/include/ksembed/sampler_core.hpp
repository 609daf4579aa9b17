#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <vector>

#include "ksembed/common.hpp"
#include "ksembed/linalg.hpp"
#include "ksembed/rng.hpp"
#include "ksembed/sampling.hpp"
#include "ksembed/sketch.hpp"
#include "ksembed/sparse_matrix.hpp"

namespace ksembed::detail {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// One stage of the index walk: per-row masses ||X_i diag(v) P_b^T||^2 and the
// Gaussian-compressed per-bucket masses ||G_r X_r diag(v) P_b^T||_F^2 used by
// the bucket distribution.
struct StageDist {
    Vector row_sqnorm;                    // length d
    std::vector<double> bucket_mass;      // per nonempty bucket slot
    std::vector<double> bucket_row_sum;   // per slot, sum of row_sqnorm over its rows
    double bucket_total = 0;
    bool zero_total = false;
};

struct MemoKey {
    index_t j;
    index_t sketch_idx;
    std::vector<index_t> prefix;
    friend bool operator<(const MemoKey& a, const MemoKey& b) {
        if (a.j != b.j) return a.j < b.j;
        if (a.sketch_idx != b.sketch_idx) return a.sketch_idx < b.sketch_idx;
        return a.prefix < b.prefix;
    }
};

// Shared read-only state for one RowSampler round: M, the sketch family
// P_0..P_q, the bucket partition with its per-bucket Gaussian compressors,
// and the column norm table eta used by the j- and block-degree
// distributions. The stage memo caches walk distributions keyed by
// (j, sketch index, prefix); the beta replay reuses the same entries, so
// the replayed probabilities are bit-identical to the ones the walk
// sampled from.
struct RoundState {
    const SparseDataMatrix* X = nullptr;
    index_t q = 0;
    index_t d_prime = 0, m_prime = 0, n_prime = 0, s_prime = 0;
    DenseMatrix M;                        // n x d'
    std::vector<RowMajorMatrix> Pt;       // q+1 transposed sketches, n x m'
    std::vector<double> log_coeff;        // log a_b, b = 0..q (point mass at q for poly)
    bool taylor = false;

    std::vector<int> slot_of_row;               // d -> nonempty bucket slot
    std::vector<std::vector<index_t>> bucket_rows;  // rows per nonempty slot
    std::vector<DenseMatrix> G;                 // per slot: n' x d_r, entries N(0, 1/n')

    DenseMatrix eta;            // (q+1) x d', eta(b, j) = ||P_b M_col_j||^2
    std::vector<double> p_j;    // unnormalized j-distribution weights
    double p_j_total = 0;

    std::map<MemoKey, StageDist> memo;

    index_t n() const { return X->n_cols(); }
    index_t d() const { return X->n_rows(); }

    StageDist compute_stage(const Vector& v, index_t sketch_idx) const {
        const SparseDataMatrix& Xm = *X;
        const RowMajorMatrix& P = Pt[static_cast<size_t>(sketch_idx)];
        const index_t dd = d();
        StageDist out;
        RowMajorMatrix E = RowMajorMatrix::Zero(dd, m_prime);
        for (index_t i = 0; i < dd; ++i) {
            auto row = E.row(i);
            for (const auto& e : Xm.row(i)) {
                double scale = v[e.index] * e.value;
                if (scale != 0.0) row.noalias() += scale * P.row(e.index);
            }
        }
        out.row_sqnorm = E.rowwise().squaredNorm();
        const size_t n_slots = bucket_rows.size();
        out.bucket_mass.assign(n_slots, 0.0);
        out.bucket_row_sum.assign(n_slots, 0.0);
        for (size_t slot = 0; slot < n_slots; ++slot) {
            const auto& rows = bucket_rows[slot];
            DenseMatrix Er(static_cast<index_t>(rows.size()), m_prime);
            for (size_t k = 0; k < rows.size(); ++k) {
                Er.row(static_cast<index_t>(k)) = E.row(rows[k]);
                out.bucket_row_sum[slot] += out.row_sqnorm[rows[k]];
            }
            out.bucket_mass[slot] = (G[slot] * Er).squaredNorm();
            out.bucket_total += out.bucket_mass[slot];
        }
        out.zero_total = !(out.bucket_total > 0);
        return out;
    }

    const StageDist& stage(index_t j, int w, const std::vector<index_t>& prefix, const Vector& v) {
        index_t sketch_idx = static_cast<index_t>(prefix.size()) + 1 + q - w;
        MemoKey key{j, sketch_idx, prefix};
        auto it = memo.find(key);
        if (it != memo.end()) return it->second;
        auto [ins, ok] = memo.emplace(std::move(key), compute_stage(v, sketch_idx));
        return ins->second;
    }

    // log y_w(j): block-degree log-probability under column j, from eta.
    double log_block_prob(index_t j, int w) const {
        double m = kNegInf;
        for (index_t b = 0; b <= q; ++b) {
            double t = log_coeff[static_cast<size_t>(b)] + safe_log(eta(q - b, j));
            if (t > m) m = t;
        }
        if (m == kNegInf) return kNegInf;
        double denom = 0;
        for (index_t b = 0; b <= q; ++b) {
            double t = log_coeff[static_cast<size_t>(b)] + safe_log(eta(q - b, j));
            if (t > kNegInf) denom += std::exp(t - m);
        }
        double num = log_coeff[static_cast<size_t>(w)] + safe_log(eta(q - w, j));
        if (num == kNegInf) return kNegInf;
        return num - m - std::log(denom);
    }

    static double safe_log(double v) { return v > 0 ? std::log(v) : kNegInf; }
};

inline index_t categorical(const double* w, index_t count, double total, RngStream& rs) {
    double u = rs.uniform() * total;
    double acc = 0;
    index_t last = 0;
    for (index_t i = 0; i < count; ++i) {
        if (w[i] <= 0) continue;
        acc += w[i];
        last = i;
        if (u < acc) return i;
    }
    return last;
}

// Build the per-round shared state. The caller supplies the per-column
// prefactor g (identically 1 for the polynomial kernel) and the block
// coefficient table.
inline RoundState make_round_state(const SparseDataMatrix& X, index_t q, const DenseMatrix& B,
                                   double lambda, index_t s, const SamplerConfig& config,
                                   std::vector<double> log_coeff, const Vector* prefactor,
                                   bool taylor, RngStream rs) {
    if (q < 1) throw std::invalid_argument("row_sampler: q must be >= 1");
    if (s < 1) throw std::invalid_argument("row_sampler: s must be >= 1");

    RoundState st;
    st.X = &X;
    st.q = q;
    st.taylor = taylor;
    st.log_coeff = std::move(log_coeff);
    const index_t n = X.n_cols();
    const index_t d = X.n_rows();
    st.d_prime = config.d_prime(q, n);
    st.m_prime = config.m_prime(q, n);
    st.n_prime = config.n_prime(q, n);
    st.s_prime = static_cast<index_t>(std::ceil(std::pow(static_cast<double>(q), 1.5) *
                                                static_cast<double>(s)));

    DenseMatrix H = gaussian_matrix(n, st.d_prime, rs.derive("H"));
    st.M = regularized_inv_sqrt_apply(B, lambda, H);
    if (prefactor) st.M = prefactor->asDiagonal() * st.M;

    index_t s_int = std::min(next_pow2(std::max<index_t>(2 * st.m_prime, 8)), config.s_int_cap);
    s_int = next_pow2(s_int);
    // The sketch runs at the per-level accuracy the walk needs: eps = 1/(10q),
    // failure probability 1/poly(n).
    SketchTree tree = build_sketch_tree(d, q, st.m_prime, s_int, config.osnap_sparsity,
                                        rs.derive("tree"), 0.1 / static_cast<double>(q),
                                        1.0 / static_cast<double>(std::max<index_t>(n * n, 4)));
    auto P = sketch_matrix_family(tree, X);
    st.Pt.resize(P.size());
    for (size_t j = 0; j < P.size(); ++j) st.Pt[j] = P[j].transpose();

    st.eta.resize(q + 1, st.d_prime);
    for (index_t b = 0; b <= q; ++b) {
        DenseMatrix PM = P[static_cast<size_t>(b)] * st.M;  // m' x d'
        st.eta.row(b) = PM.colwise().squaredNorm();
    }

    // j-distribution: column norms of the (coefficient-scaled) stacked sketch
    // of the lifting, evaluated in log space.
    std::vector<double> logw(static_cast<size_t>(st.d_prime), kNegInf);
    double max_lw = kNegInf;
    for (index_t j = 0; j < st.d_prime; ++j) {
        double m = kNegInf;
        for (index_t b = 0; b <= q; ++b) {
            double t = st.log_coeff[static_cast<size_t>(b)] + RoundState::safe_log(st.eta(q - b, j));
            if (t > m) m = t;
        }
        if (m > kNegInf) {
            double acc = 0;
            for (index_t b = 0; b <= q; ++b) {
                double t = st.log_coeff[static_cast<size_t>(b)] +
                           RoundState::safe_log(st.eta(q - b, j));
                if (t > kNegInf) acc += std::exp(t - m);
            }
            logw[static_cast<size_t>(j)] = m + std::log(acc);
        }
        max_lw = std::max(max_lw, logw[static_cast<size_t>(j)]);
    }
    if (max_lw == kNegInf)
        throw degenerate_input_error("row_sampler: sketched lifting has no mass (all-zero Z)");
    st.p_j.assign(static_cast<size_t>(st.d_prime), 0.0);
    st.p_j_total = 0;
    for (index_t j = 0; j < st.d_prime; ++j) {
        double lw = logw[static_cast<size_t>(j)];
        double w = lw > kNegInf ? std::exp(lw - max_lw) : 0.0;
        st.p_j[static_cast<size_t>(j)] = w;
        st.p_j_total += w;
    }

    // Bucket partition h : [d] -> [s'] (seeded PRF), with a Gaussian
    // compressor per nonempty bucket keyed by the bucket id.
    RngStream hash_stream = rs.derive("hash");
    st.slot_of_row.assign(static_cast<size_t>(d), -1);
    std::map<index_t, std::vector<index_t>> nonempty;
    for (index_t i = 0; i < d; ++i) {
        index_t bucket = hash_stream.derive(static_cast<std::uint64_t>(i)).uniform_index(st.s_prime);
        nonempty[bucket].push_back(i);
    }
    const double gscale = 1.0 / std::sqrt(static_cast<double>(st.n_prime));
    for (auto& [bucket, rows] : nonempty) {
        int slot = static_cast<int>(st.bucket_rows.size());
        for (index_t i : rows) st.slot_of_row[static_cast<size_t>(i)] = slot;
        RngStream gs = rs.derive("G", static_cast<std::uint64_t>(bucket));
        DenseMatrix Gr(st.n_prime, static_cast<index_t>(rows.size()));
        double* gp = Gr.data();
        const index_t gcount = Gr.size();
        for (index_t i = 0; i < gcount; ++i) gp[i] = gs.normal() * gscale;
        st.bucket_rows.push_back(std::move(rows));
        st.G.push_back(std::move(Gr));
    }
    return st;
}

struct WalkResult {
    index_t j = 0;
    int w = 0;
    std::vector<index_t> tuple;
};

// One draw of the row sampler: sample j, the block degree w (point mass at q
// for the polynomial kernel), then walk the w index stages. Each stage draws
// a bucket from the compressed masses and a row inside it from the exact
// sketched row norms.
inline WalkResult walk_one(RoundState& st, RngStream rs) {
    WalkResult res;
    res.j = categorical(st.p_j.data(), st.d_prime, st.p_j_total, rs);

    // Block degree.
    const index_t q = st.q;
    std::vector<double> yw(static_cast<size_t>(q + 1), 0.0);
    double ytot = 0;
    double m = kNegInf;
    for (index_t b = 0; b <= q; ++b) {
        double t = st.log_coeff[static_cast<size_t>(b)] + RoundState::safe_log(st.eta(q - b, res.j));
        if (t > m) m = t;
    }
    for (index_t b = 0; b <= q; ++b) {
        double t = st.log_coeff[static_cast<size_t>(b)] + RoundState::safe_log(st.eta(q - b, res.j));
        double w = t > kNegInf ? std::exp(t - m) : 0.0;
        yw[static_cast<size_t>(b)] = w;
        ytot += w;
    }
    if (!(ytot > 0)) throw numerical_error("row_sampler: block-degree distribution has zero mass");
    res.w = static_cast<int>(categorical(yw.data(), q + 1, ytot, rs));

    Vector v = st.M.col(res.j);
    for (int a = 1; a <= res.w; ++a) {
        const StageDist& dist = st.stage(res.j, res.w, res.tuple, v);
        if (dist.zero_total)
            throw numerical_error("row_sampler: stage " + std::to_string(a) +
                                  " distribution has zero total mass");
        index_t slot = categorical(dist.bucket_mass.data(),
                                   static_cast<index_t>(dist.bucket_mass.size()),
                                   dist.bucket_total, rs);
        const auto& rows = st.bucket_rows[static_cast<size_t>(slot)];
        std::vector<double> rw(rows.size());
        double rtot = 0;
        for (size_t k = 0; k < rows.size(); ++k) {
            rw[k] = dist.row_sqnorm[rows[k]];
            rtot += rw[k];
        }
        if (!(rtot > 0))
            throw numerical_error("row_sampler: stage " + std::to_string(a) +
                                  " in-bucket distribution has zero mass");
        index_t i_a = rows[static_cast<size_t>(
            categorical(rw.data(), static_cast<index_t>(rw.size()), rtot, rs))];

        res.tuple.push_back(i_a);
        Vector vn = Vector::Zero(v.size());
        for (const auto& e : st.X->row(i_a)) vn[e.index] = v[e.index] * e.value;
        v.swap(vn);
    }
    return res;
}

// beta = s * sum_j p_j [y*_w(j)] prod_b p*_b(j) q*_b(j): the realized tuple's
// exact draw probability, replayed under every j. Probability products run
// in log space; the outer sum is compensated.
inline double beta_for_tuple(RoundState& st, int w, const std::vector<index_t>& tuple, index_t s) {
    const index_t dp = st.d_prime;
    const index_t q = st.q;

    // Pre-fill the memo for every (j, stage) this tuple needs, in parallel
    // over j. Skips entries that are already cached.
    std::vector<Vector> v_of_j(static_cast<size_t>(dp));
    for (index_t j = 0; j < dp; ++j) v_of_j[static_cast<size_t>(j)] = st.M.col(j);
    std::vector<index_t> prefix;
    for (int b = 1; b <= w; ++b) {
        index_t sketch_idx = static_cast<index_t>(prefix.size()) + 1 + q - w;
        std::vector<index_t> missing;
        for (index_t j = 0; j < dp; ++j) {
            if (st.memo.find(MemoKey{j, sketch_idx, prefix}) == st.memo.end()) missing.push_back(j);
        }
        if (!missing.empty()) {
            std::vector<StageDist> computed(missing.size());
            parallel_for(static_cast<index_t>(missing.size()), [&](index_t lo, index_t hi) {
                for (index_t k = lo; k < hi; ++k)
                    computed[static_cast<size_t>(k)] =
                        st.compute_stage(v_of_j[static_cast<size_t>(missing[static_cast<size_t>(k)])],
                                         sketch_idx);
            });
            for (size_t k = 0; k < missing.size(); ++k)
                st.memo.emplace(MemoKey{missing[k], sketch_idx, prefix}, std::move(computed[k]));
        }
        index_t i_b = tuple[static_cast<size_t>(b - 1)];
        for (index_t j = 0; j < dp; ++j) {
            Vector& v = v_of_j[static_cast<size_t>(j)];
            Vector vn = Vector::Zero(v.size());
            for (const auto& e : st.X->row(i_b)) vn[e.index] = v[e.index] * e.value;
            v.swap(vn);
        }
        prefix.push_back(i_b);
    }

    double sum = 0, comp = 0;  // Kahan
    for (index_t j = 0; j < dp; ++j) {
        double pj = st.p_j[static_cast<size_t>(j)] / st.p_j_total;
        if (!(pj > 0)) continue;
        double log_term = std::log(pj);
        if (st.taylor) {
            double ly = st.log_block_prob(j, w);
            if (ly == kNegInf) continue;
            log_term += ly;
        }
        bool dead = false;
        std::vector<index_t> pre;
        for (int b = 1; b <= w && !dead; ++b) {
            index_t i_b = tuple[static_cast<size_t>(b - 1)];
            index_t idx_b = static_cast<index_t>(pre.size()) + 1 + q - w;
            auto it = st.memo.find(MemoKey{j, idx_b, pre});
            const StageDist& dist = it->second;
            int slot = st.slot_of_row[static_cast<size_t>(i_b)];
            double p_star = dist.bucket_total > 0
                                ? dist.bucket_mass[static_cast<size_t>(slot)] / dist.bucket_total
                                : 0.0;
            double brs = dist.bucket_row_sum[static_cast<size_t>(slot)];
            double q_star = brs > 0 ? dist.row_sqnorm[i_b] / brs : 0.0;
            if (!(p_star > 0) || !(q_star > 0)) {
                dead = true;
                break;
            }
            log_term += std::log(p_star) + std::log(q_star);
            pre.push_back(i_b);
        }
        if (dead) continue;
        double term = std::exp(log_term);
        double y = term - comp;
        double t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    double beta = static_cast<double>(s) * sum;
    if (!(beta > 0) || !std::isfinite(beta))
        throw numerical_error("row_sampler: beta accumulation is not positive");
    return beta;
}

// Full RowSampler round: walk s draws, replay beta per distinct tuple, and
// assemble the weighted samples.
inline SamplingMatrix run_row_sampler(RoundState& st, index_t s, bool taylor_blocks,
                                      RngStream rs) {
    std::vector<WalkResult> draws;
    draws.reserve(static_cast<size_t>(s));
    for (index_t l = 0; l < s; ++l)
        draws.push_back(walk_one(st, rs.derive("draw", static_cast<std::uint64_t>(l))));

    std::map<std::pair<int, std::vector<index_t>>, double> beta_memo;
    SamplingMatrix out;
    out.s = s;
    out.data_dim = st.d();
    out.degree = static_cast<int>(st.q);
    out.taylor_blocks = taylor_blocks;
    out.samples.reserve(static_cast<size_t>(s));
    for (const auto& dr : draws) {
        auto key = std::make_pair(dr.w, dr.tuple);
        auto it = beta_memo.find(key);
        if (it == beta_memo.end())
            it = beta_memo.emplace(key, beta_for_tuple(st, dr.w, dr.tuple, s)).first;
        double beta = it->second;
        WeightedSample ws;
        ws.index = FeatureIndex(dr.w, dr.tuple);
        ws.weight = 1.0 / std::sqrt(beta);
        ws.claimed_probability = beta / static_cast<double>(s);
        out.samples.push_back(std::move(ws));
    }
    return out;
}

}  // namespace ksembed::detail
