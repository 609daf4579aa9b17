#pragma once

#include <chrono>
#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "ksembed/dataset.hpp"
#include "ksembed/krr.hpp"
#include "ksembed/oracles.hpp"

namespace ksembed {

enum class BenchMethod { Adaptive, Rownorm, Exact };

inline const char* to_string(BenchMethod m) {
    switch (m) {
        case BenchMethod::Adaptive: return "adaptive";
        case BenchMethod::Rownorm: return "rownorm";
        case BenchMethod::Exact: return "exact";
    }
    return "?";
}

struct RunReport {
    std::string method;
    std::string kernel;
    index_t s = 0;
    double eps = 0;
    double lambda = 0;
    double mu = 0;
    RandomSeed seed = 0;
    double sampling_ms = 0;
    double embedding_ms = 0;
    double solve_ms = 0;
    double predict_ms = 0;
    double train_rmse = 0;
    double test_rmse = 0;    // 0 when no test split
    bool has_test = false;
    bool spectral_checked = false;
    bool spectral_passed = false;
    double spectral_deviation = 0;
    bool degenerate_warning = false;
};

inline nlohmann::ordered_json to_json(const RunReport& r) {
    nlohmann::ordered_json j;
    j["schema"] = "ksembed-report-v1";
    j["method"] = r.method;
    j["kernel"] = r.kernel;
    j["s"] = r.s;
    j["eps"] = r.eps;
    j["lambda"] = r.lambda;
    j["mu"] = r.mu;
    j["seed"] = r.seed;
    j["phase_ms"] = {{"sampling", r.sampling_ms},
                     {"embedding", r.embedding_ms},
                     {"solve", r.solve_ms},
                     {"predict", r.predict_ms}};
    j["train_rmse"] = r.train_rmse;
    j["has_test"] = r.has_test;
    j["test_rmse"] = r.test_rmse;
    j["spectral"] = {{"checked", r.spectral_checked},
                     {"passed", r.spectral_passed},
                     {"max_deviation", r.spectral_deviation}};
    j["degenerate_warning"] = r.degenerate_warning;
    return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "ksembed-report-v1")
        throw std::invalid_argument("report: unknown schema");
    RunReport r;
    r.method = j.at("method").get<std::string>();
    r.kernel = j.at("kernel").get<std::string>();
    r.s = j.at("s").get<index_t>();
    r.eps = j.at("eps").get<double>();
    r.lambda = j.at("lambda").get<double>();
    r.mu = j.at("mu").get<double>();
    r.seed = j.at("seed").get<RandomSeed>();
    r.sampling_ms = j.at("phase_ms").at("sampling").get<double>();
    r.embedding_ms = j.at("phase_ms").at("embedding").get<double>();
    r.solve_ms = j.at("phase_ms").at("solve").get<double>();
    r.predict_ms = j.at("phase_ms").at("predict").get<double>();
    r.train_rmse = j.at("train_rmse").get<double>();
    r.has_test = j.at("has_test").get<bool>();
    r.test_rmse = j.at("test_rmse").get<double>();
    r.spectral_checked = j.at("spectral").at("checked").get<bool>();
    r.spectral_passed = j.at("spectral").at("passed").get<bool>();
    r.spectral_deviation = j.at("spectral").at("max_deviation").get<double>();
    r.degenerate_warning = j.at("degenerate_warning").get<bool>();
    return r;
}

inline void emit_report(const std::vector<RunReport>& reports, const std::string& path) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("emit_report: cannot open '" + path + "' for writing");
    out << arr.dump(2) << "\n";
    if (!out) throw std::runtime_error("emit_report: write to '" + path + "' failed");
}

inline std::vector<RunReport> load_reports(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("load_reports: cannot open '" + path + "'");
    nlohmann::json arr = nlohmann::json::parse(in);
    std::vector<RunReport> out;
    for (const auto& j : arr) out.push_back(report_from_json(j));
    return out;
}

// Benchmark kernel selection: polynomial of degree q, or Gaussian with a
// declared radius (truncation degree derived from it), or an explicit
// Taylor coefficient list.
struct BenchKernel {
    enum class Family { Poly, Gaussian, Taylor } family = Family::Gaussian;
    index_t poly_q = 2;
    double radius = 1.0;                   // Gaussian
    std::vector<double> taylor_coeff;      // Taylor
    std::string description;

    static BenchKernel poly(index_t q) {
        BenchKernel k;
        k.family = Family::Poly;
        k.poly_q = q;
        k.description = "poly:q=" + std::to_string(q);
        return k;
    }
    static BenchKernel gaussian(double radius) {
        BenchKernel k;
        k.family = Family::Gaussian;
        k.radius = radius;
        k.description = "gaussian:r=" + std::to_string(radius);
        return k;
    }
    static BenchKernel taylor(std::vector<double> coeff) {
        BenchKernel k;
        k.family = Family::Taylor;
        k.taylor_coeff = std::move(coeff);
        k.description = "taylor:q=" + std::to_string(k.taylor_coeff.size() - 1);
        return k;
    }
};

// mu estimate from a Nystrom-scale eigendecomposition of a subsampled kernel
// block: s_lambda of (n/m) K_mm at the target lambda.
inline double estimate_mu(const SparseDataMatrix& X, const BenchKernel& kernel, double lambda,
                          RandomSeed seed, index_t max_points = 512) {
    const index_t n = X.n_cols();
    const index_t m = std::min(n, max_points);
    RngStream rs = RngStream(seed).derive("mu_estimate");
    auto perm = rs.permutation(n);
    std::vector<std::vector<SparseEntry>> cols;
    for (index_t k = 0; k < m; ++k) cols.push_back(X.col(perm[static_cast<size_t>(k)]));
    SparseDataMatrix sub(X.n_rows(), std::move(cols));
    DenseMatrix K;
    switch (kernel.family) {
        case BenchKernel::Family::Poly: K = poly_kernel_matrix(sub, kernel.poly_q); break;
        case BenchKernel::Family::Gaussian: K = gaussian_kernel_matrix(sub); break;
        case BenchKernel::Family::Taylor:
            K = taylor_kernel_matrix(sub, TaylorKernelSpec::from_coefficients(kernel.taylor_coeff));
            break;
    }
    K *= static_cast<double>(n) / static_cast<double>(m);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K, Eigen::EigenvaluesOnly);
    return std::max(1.0, statistical_dimension(es.eigenvalues().cwiseMax(0.0), lambda));
}

// Sketch dimensions capped for benchmark-scale runs: the default formulas
// grow like q^2 log n, which at Gaussian truncation degrees (q ~ 15) costs
// far more than desk-scale accuracy needs. Tiny-scale verification uses
// uncapped configs.
inline SamplerConfig benchmark_sampler_config() {
    SamplerConfig config;
    config.d_prime_cap = 24;
    config.m_prime_cap = 96;
    config.n_prime_cap = 48;
    config.s_int_cap = 256;
    return config;
}

struct BenchOptions {
    BenchMethod method = BenchMethod::Adaptive;
    BenchKernel kernel = BenchKernel::gaussian(1.0);
    double eps = 1.0 / 3.0;
    double lambda = 1.0;
    std::optional<double> mu;       // driver oversampling parameter
    std::optional<index_t> s;       // fixed sample count (overrides the formula)
    RandomSeed seed = 0;
    SamplerConfig sampler = benchmark_sampler_config();  // seed overwritten from `seed`
    index_t spectral_check_max_n = 256;  // oracle-scale spectral verification cutoff
};

namespace detail {

inline double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

inline double rmse(const Vector& a, const Vector& b) {
    return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

}  // namespace detail

// sample -> embed -> fit -> predict -> RMSE. Deterministic per seed apart
// from the wall-clock fields.
inline RunReport run_benchmark(const Dataset& data, const BenchOptions& options) {
    using clock = std::chrono::steady_clock;
    const SparseDataMatrix& X = data.features;
    const index_t n = X.n_cols();
    RunReport report;
    report.method = to_string(options.method);
    report.kernel = options.kernel.description;
    report.eps = options.eps;
    report.lambda = options.lambda;
    report.seed = options.seed;
    report.has_test = data.test_features.has_value();

    SamplerConfig config = options.sampler;
    config.seed = options.seed;
    config.s_override = options.s;

    std::optional<TaylorKernelSpec> taylor_spec;
    index_t poly_q = options.kernel.poly_q;
    bool use_taylor = options.kernel.family != BenchKernel::Family::Poly;
    if (options.kernel.family == BenchKernel::Family::Gaussian) {
        index_t q = truncation_degree(options.kernel.radius, n);
        taylor_spec = TaylorKernelSpec::gaussian(std::max<index_t>(q, 1), options.kernel.radius);
    } else if (options.kernel.family == BenchKernel::Family::Taylor) {
        taylor_spec = TaylorKernelSpec::from_coefficients(options.kernel.taylor_coeff);
    }

    KernelSpec exact_kernel;
    if (options.kernel.family == BenchKernel::Family::Poly) {
        exact_kernel.family = KernelSpec::Family::Polynomial;
        exact_kernel.poly_degree = poly_q;
    } else if (options.kernel.family == BenchKernel::Family::Gaussian) {
        exact_kernel.family = KernelSpec::Family::Gaussian;
        exact_kernel.taylor = taylor_spec;
    } else {
        exact_kernel.family = KernelSpec::Family::Taylor;
        exact_kernel.taylor = taylor_spec;
    }

    double mu = options.mu ? *options.mu : 0.0;
    if (!options.mu && options.method != BenchMethod::Exact && !options.s)
        mu = estimate_mu(X, options.kernel, options.lambda, options.seed);
    report.mu = mu;

    KrrModel model;
    DenseMatrix Z;
    SamplingMatrix sampler;

    if (options.method == BenchMethod::Exact) {
        if (n > 20000) throw std::invalid_argument("run_benchmark: exact method is gated to n <= 2e4");
        auto t0 = clock::now();
        DenseMatrix K = exact_kernel.matrix(X);
        report.embedding_ms = detail::ms_since(t0);
        t0 = clock::now();
        model = fit_exact(K, data.targets, options.lambda);
        model.train_X = std::make_shared<SparseDataMatrix>(X);
        model.kernel = exact_kernel;
        report.solve_ms = detail::ms_since(t0);
        report.s = n;
    } else {
        double frob = use_taylor ? taylor_frobenius_sq(X, *taylor_spec) : poly_frobenius_sq(X, poly_q);
        auto t0 = clock::now();
        if (options.method == BenchMethod::Adaptive) {
            if (use_taylor)
                sampler = recursive_leverage_sampling(make_taylor_row_sampler(X, *taylor_spec, config),
                                                      frob, options.lambda, options.eps,
                                                      std::max(mu, 1.0), n, config);
            else
                sampler = recursive_leverage_sampling(make_poly_row_sampler(X, poly_q, config), frob,
                                                      options.lambda, options.eps,
                                                      std::max(mu, 1.0), n, config);
        } else {
            // Single round of the recursive schedule: the row sampler at the
            // lambda_0 scale with B empty, i.e. plain row norm sampling of the
            // lifting.
            index_t s = config.sample_count(std::max(mu, 1.0), options.eps, n);
            double lambda0 = frob / options.eps;
            RngStream rs = RngStream(config.seed).derive("row_sampler").derive("round", 1);
            sampler = use_taylor
                          ? taylor_row_sampler(X, *taylor_spec, DenseMatrix(0, n), lambda0, s,
                                               config, rs)
                          : poly_row_sampler(X, poly_q, DenseMatrix(0, n), lambda0, s, config, rs);
        }
        report.sampling_ms = detail::ms_since(t0);
        report.s = sampler.s;
        report.degenerate_warning = sampler.degenerate_warning;

        t0 = clock::now();
        Z = use_taylor ? taylor_embed_rows(X, *taylor_spec, sampler) : poly_embed_rows(X, sampler);
        report.embedding_ms = detail::ms_since(t0);

        t0 = clock::now();
        model = fit_approx(Z, data.targets, options.lambda, sampler, taylor_spec);
        report.solve_ms = detail::ms_since(t0);
    }

    auto t0 = clock::now();
    Vector train_pred;
    if (options.method == BenchMethod::Exact)
        train_pred = exact_kernel.matrix(X) * model.alpha;
    else
        train_pred = Z.transpose() * model.w;
    report.train_rmse = detail::rmse(train_pred, data.targets);
    if (data.test_features) {
        Vector test_pred = predict(model, *data.test_features);
        report.test_rmse = detail::rmse(test_pred, *data.test_targets);
    }
    report.predict_ms = detail::ms_since(t0);

    if (options.method != BenchMethod::Exact && n <= options.spectral_check_max_n) {
        DenseMatrix K = exact_kernel.matrix(X);
        auto res = spectral_approx_check(K, Z, options.lambda, std::min(options.eps, 0.999));
        report.spectral_checked = true;
        report.spectral_passed = res.passed;
        report.spectral_deviation = res.max_deviation;
    }
    return report;
}

}  // namespace ksembed
