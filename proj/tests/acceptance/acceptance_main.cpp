// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerances in code; runtimes are printed
// for reference.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ksembed/bench.hpp"
#include "ksembed/dataset.hpp"
#include "ksembed/krr.hpp"
#include "ksembed/oracles.hpp"
#include "ksembed/poly_sampler.hpp"
#include "ksembed/taylor_sampler.hpp"

using namespace ksembed;

namespace {

struct Outcome {
    bool passed = false;
    bool skipped = false;
    std::string detail;
};

std::map<FeatureIndex, double> empirical_distribution(const SamplingMatrix& Pi) {
    std::map<FeatureIndex, double> freq;
    for (const auto& ws : Pi.samples) freq[ws.index] += 1.0 / static_cast<double>(Pi.s);
    return freq;
}

DenseMatrix dense_poly_lifting(const SparseDataMatrix& X, index_t q) {
    index_t rows = 1;
    for (index_t a = 0; a < q; ++a) rows *= X.n_rows();
    DenseMatrix Phi(rows, X.n_cols());
    for (index_t c = 0; c < X.n_cols(); ++c)
        Phi.col(c) = dense_tensor_power(X.col_vector(c).to_dense(), q);
    return Phi;
}

// Random sparse-ish dataset with entries scaled so column norms stay modest.
SparseDataMatrix random_dataset(index_t d, index_t n, RandomSeed seed, double density = 0.8) {
    RngStream rs = RngStream(seed).derive("dataset");
    std::vector<std::vector<SparseEntry>> cols(static_cast<size_t>(n));
    for (index_t c = 0; c < n; ++c) {
        for (index_t r = 0; r < d; ++r) {
            if (rs.uniform() < density) {
                double v = rs.normal() / std::sqrt(static_cast<double>(d));
                if (v != 0.0) cols[static_cast<size_t>(c)].push_back({r, v});
            }
        }
        if (cols[static_cast<size_t>(c)].empty())
            cols[static_cast<size_t>(c)].push_back({0, 1.0 / std::sqrt(static_cast<double>(d))});
    }
    return SparseDataMatrix(d, std::move(cols));
}

// Bisect lambda so the statistical dimension of K lands in [lo, hi].
double lambda_for_sdim(const Vector& eigenvalues, double lo, double hi) {
    double target = 0.5 * (lo + hi);
    double a = 1e-9 * eigenvalues.maxCoeff(), b = 10.0 * eigenvalues.sum();
    for (int it = 0; it < 200; ++it) {
        double mid = std::sqrt(a * b);
        double s = statistical_dimension(eigenvalues, mid);
        if (s > target)
            a = mid;
        else
            b = mid;
    }
    return std::sqrt(a * b);
}

struct SpectralPair {
    DenseMatrix K;
    DenseMatrix Ktilde;
    double lambda;
    double eps;
};
std::vector<SpectralPair> g_pairs;  // collected by criteria 3-4, consumed by criterion 8

// ---------------------------------------------------------------------------
// 1. Polynomial row norm sampler correctness over the (d, n, q, lambda) grid.
Outcome criterion1() {
    const index_t N = 100000;
    int checked = 0;
    double worst = 1e9;
    for (index_t d : {2, 3}) {
        for (index_t n : {3, 5}) {
            for (index_t q : {1, 2, 3}) {
                for (double lambda : {0.1, 1.0}) {
                    RandomSeed seed = static_cast<RandomSeed>(10000 + 1000 * d + 100 * n + 10 * q +
                                                              (lambda < 0.5 ? 0 : 1));
                    auto X = random_dataset(d, n, seed);
                    DenseMatrix B = gaussian_matrix(2, n, RngStream(seed).derive("B"));
                    SamplerConfig config;
                    config.seed = seed;
                    config.c1 = config.c2 = config.c3 = 16;
                    auto Pi = poly_row_sampler(X, q, B, lambda, N, config);
                    for (const auto& ws : Pi.samples)
                        if (!weight_consistency_check(ws, N))
                            return {false, false, "weight consistency violated"};
                    auto exact = exact_row_norm_distribution(dense_poly_lifting(X, q), B, lambda,
                                                             PolyRowLayout{d, q});
                    auto res = verify_row_norm_sampler(empirical_distribution(Pi), exact, 0.25, N);
                    worst = std::min(worst, res.worst_ratio);
                    if (!res.passed) {
                        char buf[160];
                        std::snprintf(buf, sizeof(buf),
                                      "failed at d=%lld n=%lld q=%lld lambda=%.1f (worst ratio %.3f)",
                                      static_cast<long long>(d), static_cast<long long>(n),
                                      static_cast<long long>(q), lambda, res.worst_ratio);
                        return {false, false, buf};
                    }
                    ++checked;
                }
            }
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d configs x 1e5 draws at alpha=1/4, worst ratio %.3f", checked,
                  worst);
    return {true, false, buf};
}

// ---------------------------------------------------------------------------
// 2. Gaussian/Taylor row norm sampler correctness against the dense lifting.
Outcome criterion2() {
    const index_t N = 100000;
    int checked = 0;
    double worst = 1e9;
    for (index_t d : {2, 3}) {
        for (index_t n : {3, 4}) {
            for (index_t q : {2, 3}) {
                RandomSeed seed = static_cast<RandomSeed>(20000 + 1000 * d + 100 * n + 10 * q);
                auto X = random_dataset(d, n, seed);
                double max_sq = 0;
                for (index_t c = 0; c < n; ++c) max_sq = std::max(max_sq, X.col_squared_norm(c));
                X = SparseDataMatrix::from_dense(X.to_dense() / std::sqrt(max_sq));
                auto spec = TaylorKernelSpec::gaussian(q, 1.0);
                DenseMatrix B = gaussian_matrix(2, n, RngStream(seed).derive("B"));
                SamplerConfig config;
                config.seed = seed;
                config.c1 = config.c2 = config.c3 = 16;
                auto Pi = taylor_row_sampler(X, spec, B, 0.5, N, config);
                auto exact = exact_row_norm_distribution(dense_lifting(X, spec), B, 0.5,
                                                         TaylorRowLayout{d, q});
                auto res = verify_row_norm_sampler(empirical_distribution(Pi), exact, 0.25, N);
                worst = std::min(worst, res.worst_ratio);
                if (!res.passed) {
                    char buf[160];
                    std::snprintf(buf, sizeof(buf),
                                  "failed at d=%lld n=%lld q=%lld (worst ratio %.3f)",
                                  static_cast<long long>(d), static_cast<long long>(n),
                                  static_cast<long long>(q), res.worst_ratio);
                    return {false, false, buf};
                }
                ++checked;
            }
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d configs x 1e5 draws at alpha=1/4, worst ratio %.3f", checked,
                  worst);
    return {true, false, buf};
}

// ---------------------------------------------------------------------------
// 3. Spectral guarantee, polynomial kernel at desk scale.
Outcome criterion3() {
    const index_t n = 64, d = 6, q = 2;
    const double eps = 1.0 / 3.0;
    auto X = random_dataset(d, n, 333);
    DenseMatrix K = poly_kernel_matrix(X, q);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
    double lambda = lambda_for_sdim(es.eigenvalues(), 2.0, 6.0);
    double mu = statistical_dimension(es.eigenvalues(), lambda);
    if (mu < 2.0 || mu > 6.0) return {false, false, "could not place s_lambda in [2,6]"};

    int passes = 0;
    for (int run = 0; run < 20; ++run) {
        SamplerConfig config;
        config.seed = static_cast<RandomSeed>(3300 + run);
        auto emb = poly_adaptive_embedding(X, q, lambda, eps, mu, config);
        index_t expected_s = static_cast<index_t>(
            std::ceil(config.sample_constant * mu / (eps * eps) * std::log2(static_cast<double>(n))));
        if (emb.sampler.s != expected_s) return {false, false, "sample count differs from formula"};
        auto res = spectral_approx_check(K, emb.Z, lambda, eps);
        if (res.passed) {
            ++passes;
            if (g_pairs.size() < 6 && es.eigenvalues().maxCoeff() >= 1.0)
                g_pairs.push_back({K, emb.Z.transpose() * emb.Z, lambda, eps});
        }
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d/20 seeded runs pass (threshold 18), s_lambda=%.2f", passes,
                  mu);
    return {passes >= 18, false, buf};
}

// ---------------------------------------------------------------------------
// 4. Spectral guarantee, Gaussian kernel at desk scale (eps/2 pipeline with
//    eps/2 truncation slack).
Outcome criterion4() {
    const index_t n = 64, d = 4;
    const double radius = 1.0, eps = 1.0 / 3.0;
    auto X = random_dataset(d, n, 444);
    // Rescale so the max column squared norm is exactly the radius.
    double max_sq = 0;
    for (index_t c = 0; c < n; ++c) max_sq = std::max(max_sq, X.col_squared_norm(c));
    DenseMatrix Xd = X.to_dense() * std::sqrt(radius / max_sq);
    X = SparseDataMatrix::from_dense(Xd);

    DenseMatrix K = gaussian_kernel_matrix(X);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
    double lambda = lambda_for_sdim(es.eigenvalues(), 2.0, 6.0);
    double mu = statistical_dimension(es.eigenvalues(), lambda);

    index_t q = truncation_degree(radius, n);
    auto spec = TaylorKernelSpec::gaussian(q, radius);
    int passes = 0;
    for (int run = 0; run < 20; ++run) {
        SamplerConfig config;
        config.seed = static_cast<RandomSeed>(4400 + run);
        config.d_prime_cap = 24;
        config.m_prime_cap = 96;
        config.n_prime_cap = 48;
        config.s_int_cap = 256;
        auto emb = taylor_adaptive_embedding(X, spec, lambda, eps / 2.0, mu, config);
        auto res = spectral_approx_check(K, emb.Z, lambda, eps);
        if (res.passed) {
            ++passes;
            if (g_pairs.size() < 12 && es.eigenvalues().maxCoeff() >= 1.0)
                g_pairs.push_back({K, emb.Z.transpose() * emb.Z, lambda, eps});
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d/20 seeded runs pass (threshold 18), q=%lld, s_lambda=%.2f",
                  passes, static_cast<long long>(q), mu);
    return {passes >= 18, false, buf};
}

// ---------------------------------------------------------------------------
// 5. The truncated lifting reproduces the Gaussian kernel matrix.
Outcome criterion5() {
    const index_t n = 16, d = 2;
    DenseMatrix Xd = gaussian_matrix(d, n, RngStream(55).derive("X"));
    Xd *= 1.0 / Xd.colwise().norm().maxCoeff();
    auto X = SparseDataMatrix::from_dense(Xd);
    index_t q = truncation_degree(1.0, n, 1.0);
    auto spec = TaylorKernelSpec::gaussian(q, 1.0);
    DenseMatrix A = dense_lifting(X, spec);
    DenseMatrix K = gaussian_kernel_matrix(X);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(A.transpose() * A - K);
    double op = es.eigenvalues().cwiseAbs().maxCoeff();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "||A^T A - K||_op = %.3g (tolerance 1e-8), q=%lld", op,
                  static_cast<long long>(q));
    return {op <= 1e-8, false, buf};
}

// ---------------------------------------------------------------------------
// 6. Sketch norm preservation over 500 fresh trees + incremental equality.
Outcome criterion6() {
    const index_t d = 16, q = 2;
    const double eps = 0.1, delta = 0.05;
    auto dims = sketch_dims(q, eps, delta);

    // 5 fixed probe vectors; the first is e_1 (unit tensor-power norm).
    std::vector<SparseVector> probes;
    probes.push_back(SparseVector::basis(d, 0));
    RngStream ps = RngStream(66).derive("probes");
    for (int p = 0; p < 4; ++p) {
        Vector x(d);
        for (index_t i = 0; i < d; ++i) x[i] = ps.normal();
        probes.push_back(SparseVector::from_dense(x));
    }

    const int n_trees = 500;
    std::vector<int> violations(n_trees, 0);
    parallel_for(n_trees, [&](index_t lo, index_t hi) {
        for (index_t t = lo; t < hi; ++t) {
            auto tree = build_sketch_tree(d, q, dims.m_prime, dims.s_int, 8,
                                          static_cast<RandomSeed>(660000 + t));
            DenseMatrix out = sketch_tensor_power_batch(tree, probes);
            for (size_t p = 0; p < probes.size(); ++p) {
                double target = std::pow(probes[p].squared_norm(), static_cast<double>(q));
                double got = out.col(static_cast<index_t>(p)).squaredNorm();
                if (got < (1.0 - eps) * target || got > (1.0 + eps) * target)
                    ++violations[static_cast<size_t>(t)];
            }
        }
    });
    int total_violations = 0;
    for (int v : violations) total_violations += v;
    double rate = static_cast<double>(total_violations) / (n_trees * 5.0);

    // Incremental suffix family must be bit-identical to recomputation.
    bool bit_identical = true;
    {
        auto tree = build_sketch_tree(6, 3, 16, 32, 4, RandomSeed{667});
        SparseVector x = probes[0];
        Vector xs(6);
        for (index_t i = 0; i < 6; ++i) xs[i] = x.to_dense()[i];
        SparseVector x6 = SparseVector::from_dense(xs);
        auto fam = sketch_suffix_family(tree, x6);
        auto fresh = build_sketch_tree(6, 3, 16, 32, 4, RandomSeed{667});
        SparseVector e1 = SparseVector::basis(6, 0);
        for (index_t j = 0; j <= 3; ++j) {
            std::vector<SparseVector> inputs;
            for (index_t a = 0; a < 3; ++a) inputs.push_back(a < 3 - j ? x6 : e1);
            Vector ref = sketch_with_leaf_inputs(fresh, inputs);
            if (std::memcmp(ref.data(), fam[static_cast<size_t>(j)].data(),
                            sizeof(double) * static_cast<size_t>(ref.size())) != 0)
                bit_identical = false;
        }
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "violation rate %.4f over 2500 trials (threshold 0.08); incremental %s", rate,
                  bit_identical ? "bit-identical" : "MISMATCH");
    return {rate <= 0.08 && bit_identical, false, buf};
}

// ---------------------------------------------------------------------------
// 7. Exact ridge-leverage sampling achieves the spectral guarantee.
Outcome criterion7() {
    const index_t n = 32;
    const double alpha = 0.25, eps = 1.0 / 3.0;
    int passes = 0;
    const int instances = 40;
    for (int inst = 0; inst < instances; ++inst) {
        RngStream rs = RngStream(static_cast<RandomSeed>(7700 + inst));
        DenseMatrix A = gaussian_matrix(n, n, rs.derive("A"));
        DenseMatrix K = A * A.transpose() / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
        DenseMatrix Phi = es.operatorSqrt();  // symmetric square root: Phi^T Phi = K
        double lambda = es.eigenvalues().sum() / 16.0;
        auto scores = ridge_leverage_scores(Phi, lambda);
        double sdim = 0;
        for (double s : scores) sdim += s;
        index_t s_count = static_cast<index_t>(
            std::ceil(4.0 * std::log2(static_cast<double>(n)) * sdim / (alpha * eps * eps)));

        std::vector<double> probs(scores);
        double total = sdim;
        RngStream draw = rs.derive("draws");
        DenseMatrix Z(s_count, n);
        for (index_t l = 0; l < s_count; ++l) {
            double u = draw.uniform() * total;
            double acc = 0;
            index_t pick = n - 1;
            for (index_t i = 0; i < n; ++i) {
                acc += probs[static_cast<size_t>(i)];
                if (u < acc) { pick = i; break; }
            }
            double p = probs[static_cast<size_t>(pick)] / total;
            Z.row(l) = Phi.row(pick) / std::sqrt(static_cast<double>(s_count) * p);
        }
        if (spectral_approx_check(K, Z, lambda, eps).passed) ++passes;
    }
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d/%d instances pass (threshold 38 = 95%%)", passes, instances);
    return {passes >= 38, false, buf};
}

// ---------------------------------------------------------------------------
// 8. Risk transfer bound on every pipeline-produced spectral pair.
Outcome criterion8() {
    if (g_pairs.empty()) return {false, false, "no spectral pairs collected by criteria 3-4"};
    RngStream rs = RngStream(88).derive("f");
    int held = 0;
    for (const auto& pair : g_pairs) {
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(pair.K, Eigen::EigenvaluesOnly);
        if (es.eigenvalues().maxCoeff() < 1.0) continue;
        Vector f(pair.K.rows());
        for (index_t i = 0; i < f.size(); ++i) f[i] = rs.normal();
        auto res = risk_bound_check(pair.K, pair.Ktilde, f, 0.25, pair.lambda, pair.eps);
        if (!res.holds) {
            char buf[128];
            std::snprintf(buf, sizeof(buf), "bound violated: lhs=%.6g rhs=%.6g", res.lhs, res.rhs);
            return {false, false, buf};
        }
        ++held;
    }
    char buf[96];
    std::snprintf(buf, sizeof(buf), "bound holds on %d/%zu pairs", held, g_pairs.size());
    return {held > 0, false, buf};
}

// ---------------------------------------------------------------------------
// 9. KRR consistency and the Monte-Carlo risk identity.
Outcome criterion9() {
    const index_t n = 24;
    RngStream rs = RngStream(99);
    DenseMatrix A = gaussian_matrix(n, n, rs.derive("A"));
    DenseMatrix K = A * A.transpose() / static_cast<double>(n);
    Vector y = gaussian_matrix(n, 1, rs.derive("y"));
    const double lambda = 0.6;

    Eigen::LLT<DenseMatrix> llt(K + 1e-12 * DenseMatrix::Identity(n, n));
    DenseMatrix Z = DenseMatrix(llt.matrixL()).transpose();
    SamplingMatrix dummy;
    dummy.s = n;
    auto exact = fit_exact(K, y, lambda);
    auto approx = fit_approx(Z, y, lambda, dummy);
    double rel = (K * exact.alpha - Z.transpose() * approx.w).norm() / (K * exact.alpha).norm();
    if (rel > 1e-6) return {false, false, "cholesky-factor consistency exceeded 1e-6"};

    const double sigma = 0.4;
    Vector fstar = gaussian_matrix(n, 1, rs.derive("fstar"));
    DenseMatrix op = K * (K + lambda * DenseMatrix::Identity(n, n)).inverse();
    RngStream noise = rs.derive("noise");
    const int reps = 200;
    double mean = 0;
    std::vector<double> risks;
    for (int r = 0; r < reps; ++r) {
        Vector nu(n);
        for (index_t i = 0; i < n; ++i) nu[i] = sigma * noise.normal();
        Vector pred = op * (fstar + nu);
        risks.push_back(empirical_risk(pred, fstar));
        mean += risks.back();
    }
    mean /= reps;
    double var = 0;
    for (double r : risks) var += (r - mean) * (r - mean);
    double se = std::sqrt(var / reps / reps);
    double closed = risk_exact_closed_form(K, fstar, sigma * sigma, lambda);
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "consistency %.2g (tol 1e-6); MC risk %.5g vs closed form %.5g (3 SE = %.2g)", rel,
                  mean, closed, 3 * se);
    return {std::abs(mean - closed) <= 3.0 * se, false, buf};
}

// ---------------------------------------------------------------------------
// 10. Table-1 Wine replication (best effort; requires the UCI files).
std::optional<std::string> find_wine_dir() {
    std::vector<std::string> candidates;
    if (const char* env = std::getenv("KSEMBED_WINE_DIR")) candidates.push_back(env);
    candidates.push_back("data");
    candidates.push_back("../data");
    candidates.push_back("../../data");
    for (const auto& dir : candidates) {
        if (std::filesystem::exists(dir + "/winequality-red.csv") &&
            std::filesystem::exists(dir + "/winequality-white.csv"))
            return dir;
    }
    return std::nullopt;
}

Outcome criterion10() {
    auto dir = find_wine_dir();
    if (!dir) {
        return {false, true,
                "winequality-{red,white}.csv not found (set KSEMBED_WINE_DIR or place them in "
                "./data); harness implemented, see README"};
    }
    LoadOptions opt;
    opt.separator = ';';
    opt.has_header = true;
    auto red = load_dataset(*dir + "/winequality-red.csv", DataFormat::Csv, opt);
    auto white = load_dataset(*dir + "/winequality-white.csv", DataFormat::Csv, opt);

    // Combine, standardize, rescale so the max squared column norm is 1.
    DenseMatrix Xall(red.n_features(), red.n_points() + white.n_points());
    Xall << red.features.to_dense(), white.features.to_dense();
    Vector yall(Xall.cols());
    yall << red.targets, white.targets;
    for (index_t i = 0; i < Xall.rows(); ++i) {
        double m = Xall.row(i).mean();
        double sd = std::sqrt((Xall.row(i).array() - m).square().mean());
        Xall.row(i) = (Xall.row(i).array() - m) / (sd > 1e-12 ? sd : 1.0);
    }
    Xall *= std::sqrt(1.0 / Xall.colwise().squaredNorm().maxCoeff());

    Dataset ds;
    ds.features = SparseDataMatrix::from_dense(Xall, 1e-14);
    ds.targets = yall;
    split_dataset(ds, 0.2, 1);
    if (ds.n_points() + ds.test_features->n_cols() != 6497 || ds.n_features() != 11)
        return {false, false, "unexpected Wine shape after loading"};

    auto t0 = std::chrono::steady_clock::now();

    // The reference hyperparameters are unreported, so they are selected the
    // way the baselines were tuned: a grid on a validation split scored with
    // the fast single-round variant, the radius doubling as the bandwidth
    // knob (X scaled by sqrt(r) from the unit-radius base).
    auto rescale = [](const Dataset& base, double r) {
        Dataset out = base;
        if (r != 1.0) {
            out.features = SparseDataMatrix::from_dense(base.features.to_dense() * std::sqrt(r));
            if (base.test_features)
                out.test_features =
                    SparseDataMatrix::from_dense(base.test_features->to_dense() * std::sqrt(r));
        }
        return out;
    };
    Dataset tune = ds;
    tune.test_features.reset();
    tune.test_targets.reset();
    split_dataset(tune, 0.2, 2);
    double best_rmse = 1e300, best_r = 1.0, best_lambda = 2.0;
    for (double r : {1.0, 4.0, 16.0}) {
        Dataset scaled = rescale(tune, r);
        for (double lambda : {0.5, 2.0, 8.0}) {
            BenchOptions bo;
            bo.method = BenchMethod::Rownorm;
            bo.kernel = BenchKernel::gaussian(r);
            bo.lambda = lambda;
            bo.s = 400;
            bo.seed = 42;
            bo.spectral_check_max_n = 0;
            auto rep = run_benchmark(scaled, bo);
            if (rep.test_rmse < best_rmse) {
                best_rmse = rep.test_rmse;
                best_r = r;
                best_lambda = lambda;
            }
        }
    }

    Dataset final_ds = rescale(ds, best_r);
    BenchOptions bo;
    bo.method = BenchMethod::Adaptive;
    bo.kernel = BenchKernel::gaussian(best_r);
    bo.lambda = best_lambda;
    bo.eps = 1.0 / 3.0;
    bo.s = 400;
    bo.seed = 42;
    bo.spectral_check_max_n = 0;
    auto rep = run_benchmark(final_ds, bo);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    char buf[220];
    std::snprintf(buf, sizeof(buf),
                  "test RMSE %.4f (target 0.723 +/- 0.05), s=%lld, r=%.0f lambda=%.1f, %.0f s total",
                  rep.test_rmse, static_cast<long long>(rep.s), best_r, best_lambda, secs);
    bool ok = std::abs(rep.test_rmse - 0.723) <= 0.05 && secs < 300.0;
    return {ok, false, buf};
}

// ---------------------------------------------------------------------------
// 11. Bit-reproducibility of every randomized pipeline under a fixed seed.
std::uint64_t hash_doubles(std::uint64_t h, const double* data, size_t count) {
    for (size_t i = 0; i < count; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &data[i], 8);
        h ^= bits;
        h *= 0x100000001B3ULL;
    }
    return h;
}

std::uint64_t pipeline_hash(RandomSeed seed) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    SamplerConfig capped = benchmark_sampler_config();
    // Polynomial adaptive pipeline.
    {
        auto X = random_dataset(4, 20, 1111);
        SamplerConfig config = capped;
        config.seed = seed;
        auto emb = poly_adaptive_embedding(X, 2, 0.3, 1.0 / 3.0, 3.0, config);
        h = hash_doubles(h, emb.Z.data(), static_cast<size_t>(emb.Z.size()));
        for (const auto& ws : emb.sampler.samples) {
            h = hash_doubles(h, &ws.weight, 1);
            for (index_t i : ws.index.indices) {
                double v = static_cast<double>(i);
                h = hash_doubles(h, &v, 1);
            }
        }
    }
    // Gaussian lifting pipeline.
    {
        auto X = random_dataset(3, 12, 2222);
        auto spec = TaylorKernelSpec::gaussian(4, 2.0);
        SamplerConfig config = capped;
        config.seed = seed + 1;
        auto emb = taylor_adaptive_embedding(X, spec, 0.4, 1.0 / 3.0, 3.0, config);
        h = hash_doubles(h, emb.Z.data(), static_cast<size_t>(emb.Z.size()));
    }
    // Exact-oracle pipeline and the sketch family.
    {
        DenseMatrix Phi = gaussian_matrix(10, 6, RandomSeed(3333));
        SamplerConfig config;
        config.seed = seed + 2;
        auto sampler = dense_pipeline(Phi, 0.5, 1.0 / 3.0, 3.0, config);
        DenseMatrix Z = dense_pipeline_embed(Phi, sampler);
        h = hash_doubles(h, Z.data(), static_cast<size_t>(Z.size()));

        auto X = random_dataset(5, 7, 4444);
        auto tree = build_sketch_tree(5, 3, 16, 64, 8, seed + 3);
        auto P = sketch_matrix_family(tree, X);
        for (const auto& M : P) h = hash_doubles(h, M.data(), static_cast<size_t>(M.size()));
    }
    return h;
}

Outcome criterion11() {
    std::uint64_t a = pipeline_hash(5150);
    std::uint64_t b = pipeline_hash(5150);
    std::uint64_t c = pipeline_hash(5151);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "hash %016llx stable across runs; distinct seed differs: %s",
                  static_cast<unsigned long long>(a), a != c ? "yes" : "NO");
    return {a == b && a != c, false, buf};
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i)
        if (std::strncmp(argv[i], "--only=", 7) == 0) only = std::atoi(argv[i] + 7);

    struct Entry {
        int id;
        const char* name;
        Outcome (*fn)();
    };
    const Entry entries[] = {
        {1, "row norm sampler correctness (polynomial)", criterion1},
        {2, "row norm sampler correctness (Gaussian/Taylor)", criterion2},
        {3, "spectral guarantee, polynomial kernel", criterion3},
        {4, "spectral guarantee, Gaussian kernel", criterion4},
        {5, "truncated lifting reproduces the Gaussian kernel", criterion5},
        {6, "sketch norm preservation + incremental equality", criterion6},
        {7, "exact ridge-leverage sampling spectral rate", criterion7},
        {8, "risk transfer bound on pipeline pairs", criterion8},
        {9, "KRR consistency and Monte-Carlo risk identity", criterion9},
        {10, "Wine benchmark replication (requires dataset)", criterion10},
        {11, "bit-reproducibility under fixed seeds", criterion11},
    };

    int failures = 0, skips = 0;
    for (const auto& e : entries) {
        if (only != 0 && e.id != only) continue;
        auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = e.fn();
        } catch (const std::exception& ex) {
            out = {false, false, std::string("exception: ") + ex.what()};
        }
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag = out.skipped ? "SKIP" : (out.passed ? "PASS" : "FAIL");
        std::printf("[%2d] %s  %-48s (%.1f s)  %s\n", e.id, tag, e.name, secs, out.detail.c_str());
        std::fflush(stdout);
        if (out.skipped)
            ++skips;
        else if (!out.passed)
            ++failures;
    }
    std::printf("acceptance: %d failure(s), %d skipped\n", failures, skips);
    return failures;
}
