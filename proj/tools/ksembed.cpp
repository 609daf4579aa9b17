// ksembed: kernel subspace embeddings via recursive ridge-leverage-score
// sampling, with an approximate KRR benchmark harness and oracle-backed
// verification batteries.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <map>
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

BenchKernel parse_kernel(const std::string& text) {
    auto colon = text.find(':');
    std::string family = text.substr(0, colon);
    std::map<std::string, std::string> kv;
    if (colon != std::string::npos) {
        std::string rest = text.substr(colon + 1);
        std::stringstream ss(rest);
        std::string item;
        while (std::getline(ss, item, ';')) {
            auto eq = item.find('=');
            if (eq == std::string::npos)
                throw CLI::ValidationError("--kernel", "expected key=value in '" + item + "'");
            kv[item.substr(0, eq)] = item.substr(eq + 1);
        }
    }
    if (family == "poly") {
        if (!kv.count("q")) throw CLI::ValidationError("--kernel", "poly needs q=<degree>");
        return BenchKernel::poly(std::stoll(kv["q"]));
    }
    if (family == "gaussian") {
        double r = kv.count("r") ? std::stod(kv["r"]) : 1.0;
        return BenchKernel::gaussian(r);
    }
    if (family == "invpoly") {
        if (!kv.count("q")) throw CLI::ValidationError("--kernel", "invpoly needs q=<degree>");
        index_t q = std::stoll(kv["q"]);
        std::vector<double> coeff;
        double a = 0.5;
        for (index_t j = 0; j <= q; ++j) {
            coeff.push_back(a);
            a *= 0.5;
        }
        auto k = BenchKernel::taylor(coeff);
        k.description = "invpoly:q=" + std::to_string(q);
        return k;
    }
    if (family == "taylor") {
        if (!kv.count("coeffs")) throw CLI::ValidationError("--kernel", "taylor needs coeffs=a0,a1,...");
        std::vector<double> coeff;
        std::stringstream ss(kv["coeffs"]);
        std::string tok;
        while (std::getline(ss, tok, ',')) coeff.push_back(std::stod(tok));
        return BenchKernel::taylor(coeff);
    }
    throw CLI::ValidationError("--kernel", "unknown kernel family '" + family + "'");
}

struct CommonArgs {
    std::string data_path;
    std::string format = "csv";
    std::string kernel_text = "gaussian:r=1.0";
    std::string normalize = "standardize";
    index_t target_col = -1;
    bool header = false;
    double test_frac = 0.2;
    RandomSeed split_seed = 1;
    double gamma = 0.0;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--data", args.data_path, "dataset path")->required();
    cmd->add_option("--format", args.format, "csv|libsvm")
        ->check(CLI::IsMember({"csv", "libsvm"}));
    cmd->add_option("--kernel", args.kernel_text,
                    "poly:q=3 | gaussian:r=1.0 | invpoly:q=20 | taylor:coeffs=a0,a1,...");
    cmd->add_option("--target-col", args.target_col, "CSV target column (-1 = last)");
    cmd->add_flag("--header", args.header, "CSV file has a header row");
    cmd->add_option("--normalize", args.normalize, "none|standardize|scale")
        ->check(CLI::IsMember({"none", "standardize", "scale"}));
    cmd->add_option("--test-frac", args.test_frac, "held-out fraction (0 disables)");
    cmd->add_option("--split-seed", args.split_seed, "seed for the train/test split");
    cmd->add_option("--gamma", args.gamma,
                    "Gaussian bandwidth exp(-gamma ||x-y||^2); applied by scaling X by sqrt(2 gamma)");
    cmd->add_option("--threads", args.threads, "worker cap (overrides KSEMBED_THREADS)");
}

Dataset load_for(const CommonArgs& args, const BenchKernel& kernel) {
    LoadOptions opt;
    opt.target_column = args.target_col;
    opt.has_header = args.header;
    opt.normalize = args.normalize == "standardize" ? NormalizeMode::Standardize
                    : args.normalize == "scale"     ? NormalizeMode::ScaleMaxAbs
                                                    : NormalizeMode::None;
    // Bandwidth by pre-scaling: with --gamma the data carries the bandwidth
    // and the radius is whatever results; otherwise Gaussian runs rescale to
    // the declared radius.
    bool gaussian = kernel.family == BenchKernel::Family::Gaussian;
    if (gaussian && args.gamma <= 0) opt.radius = kernel.radius;
    Dataset ds = load_dataset(args.data_path, args.format == "csv" ? DataFormat::Csv
                                                                   : DataFormat::Libsvm,
                              opt);
    if (args.gamma > 0) {
        double scale = std::sqrt(2.0 * args.gamma);
        DenseMatrix Xd = ds.features.to_dense() * scale;
        ds.features = SparseDataMatrix::from_dense(Xd);
    }
    if (args.test_frac > 0) split_dataset(ds, args.test_frac, args.split_seed);
    return ds;
}

BenchKernel finalize_kernel(BenchKernel kernel, const CommonArgs& args, const Dataset& ds) {
    if (kernel.family == BenchKernel::Family::Gaussian && args.gamma > 0) {
        double max_sq = 0;
        for (index_t c = 0; c < ds.n_points(); ++c)
            max_sq = std::max(max_sq, ds.features.col_squared_norm(c));
        if (ds.test_features)
            for (index_t c = 0; c < ds.test_features->n_cols(); ++c)
                max_sq = std::max(max_sq, ds.test_features->col_squared_norm(c));
        kernel.radius = max_sq * (1.0 + 1e-9);
        kernel.description = "gaussian:gamma=" + std::to_string(args.gamma);
    }
    return kernel;
}

void print_report(const RunReport& r) {
    std::printf("method=%s kernel=%s s=%lld eps=%.4g lambda=%.4g mu=%.4g seed=%llu\n",
                r.method.c_str(), r.kernel.c_str(), static_cast<long long>(r.s), r.eps, r.lambda,
                r.mu, static_cast<unsigned long long>(r.seed));
    std::printf("  phases ms: sampling=%.1f embedding=%.1f solve=%.1f predict=%.1f\n",
                r.sampling_ms, r.embedding_ms, r.solve_ms, r.predict_ms);
    std::printf("  train RMSE = %.6g", r.train_rmse);
    if (r.has_test) std::printf("   test RMSE = %.6g", r.test_rmse);
    std::printf("\n");
    if (r.spectral_checked)
        std::printf("  spectral check: %s (max deviation %.4g)\n", r.spectral_passed ? "pass" : "FAIL",
                    r.spectral_deviation);
    if (r.degenerate_warning) std::printf("  warning: degenerate input, sampler short-circuited\n");
}

int checkline(const char* name, bool ok) {
    std::printf("  [%s] %s\n", ok ? "pass" : "FAIL", name);
    return ok ? 0 : 1;
}

int verify_samplers(RandomSeed seed) {
    int failures = 0;
    const index_t N = 40000;
    {
        DenseMatrix Xd(3, 4);
        Xd << 0.9, 0.0, -0.4, 0.0,
              0.0, 1.2, 0.6, -0.3,
              0.5, 0.0, 0.0, 1.1;
        auto X = SparseDataMatrix::from_dense(Xd);
        DenseMatrix B = gaussian_matrix(2, 4, RngStream(seed).derive("B"));
        SamplerConfig config;
        config.seed = seed;
        auto Pi = poly_row_sampler(X, 2, B, 0.5, N, config);
        DenseMatrix Phi(9, 4);
        for (index_t c = 0; c < 4; ++c) Phi.col(c) = dense_tensor_power(Xd.col(c), 2);
        auto exact = exact_row_norm_distribution(Phi, B, 0.5, PolyRowLayout{3, 2});
        std::map<FeatureIndex, double> emp;
        for (const auto& ws : Pi.samples) emp[ws.index] += 1.0 / static_cast<double>(N);
        failures += checkline("polynomial sampler vs brute-force distribution (alpha=1/4)",
                              verify_row_norm_sampler(emp, exact, 0.25, N).passed);
        bool weights_ok = true;
        for (const auto& ws : Pi.samples) weights_ok = weights_ok && weight_consistency_check(ws, N);
        failures += checkline("weight consistency", weights_ok);
    }
    {
        DenseMatrix Xd(2, 3);
        Xd << 0.7, -0.3, 0.1,
              0.2, 0.6, -0.8;
        auto X = SparseDataMatrix::from_dense(Xd);
        auto spec = TaylorKernelSpec::gaussian(3, 1.0);
        DenseMatrix B = gaussian_matrix(2, 3, RngStream(seed).derive("B2"));
        SamplerConfig config;
        config.seed = seed + 1;
        auto Pi = taylor_row_sampler(X, spec, B, 0.5, N, config);
        auto exact = exact_row_norm_distribution(dense_lifting(X, spec), B, 0.5,
                                                 TaylorRowLayout{2, 3});
        std::map<FeatureIndex, double> emp;
        for (const auto& ws : Pi.samples) emp[ws.index] += 1.0 / static_cast<double>(N);
        failures += checkline("gaussian lifting sampler vs dense-lifting oracle (alpha=1/4)",
                              verify_row_norm_sampler(emp, exact, 0.25, N).passed);
    }
    return failures;
}

int verify_spectral(RandomSeed seed) {
    int failures = 0;
    {
        DenseMatrix Xd = gaussian_matrix(4, 32, RngStream(seed).derive("X")) / 2.0;
        auto X = SparseDataMatrix::from_dense(Xd);
        DenseMatrix K = poly_kernel_matrix(X, 2);
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
        double lambda = es.eigenvalues().maxCoeff() / 10.0;
        double mu = statistical_dimension(es.eigenvalues(), lambda);
        int passes = 0;
        for (int r = 0; r < 10; ++r) {
            SamplerConfig config;
            config.seed = seed + 100 + r;
            auto emb = poly_adaptive_embedding(X, 2, lambda, 1.0 / 3.0, mu, config);
            if (spectral_approx_check(K, emb.Z, lambda, 1.0 / 3.0).passed) ++passes;
        }
        failures += checkline("polynomial adaptive pipeline spectral pass rate >= 9/10", passes >= 9);
    }
    {
        DenseMatrix Phi = DenseMatrix::Identity(8, 8);
        int passes = 0;
        for (int r = 0; r < 20; ++r) {
            SamplerConfig config;
            config.seed = seed + 300 + r;
            auto sampler = dense_pipeline(Phi, 1.0, 1.0 / 3.0, 4.0, config);
            DenseMatrix Z = dense_pipeline_embed(Phi, sampler);
            if (spectral_approx_check(Phi, Z, 1.0, 1.0 / 3.0).passed) ++passes;
        }
        failures += checkline("exact-oracle pipeline spectral pass rate >= 19/20", passes >= 19);
    }
    return failures;
}

int verify_krr(RandomSeed seed) {
    int failures = 0;
    DenseMatrix A = gaussian_matrix(16, 16, RngStream(seed).derive("K"));
    DenseMatrix K = A * A.transpose();
    K *= 16.0 / Eigen::SelfAdjointEigenSolver<DenseMatrix>(K).eigenvalues().maxCoeff();
    Vector y = gaussian_matrix(16, 1, RngStream(seed).derive("y"));
    const double lambda = 0.5;

    Eigen::LLT<DenseMatrix> llt(K + 1e-10 * DenseMatrix::Identity(16, 16));
    DenseMatrix Z = DenseMatrix(llt.matrixL()).transpose();
    SamplingMatrix dummy;
    dummy.s = 16;
    auto exact = fit_exact(K, y, lambda);
    auto approx = fit_approx(Z, y, lambda, dummy);
    double rel = (K * exact.alpha - Z.transpose() * approx.w).norm() / (K * exact.alpha).norm();
    failures += checkline("cholesky-factor embedding matches exact KRR to 1e-6", rel <= 1e-6);

    auto bound = risk_bound_check(K, K, y, 0.25, lambda, 0.25);
    failures += checkline("risk transfer bound holds at K~ = K", bound.holds);

    double closed = risk_exact_closed_form(K, y, 0.09, lambda);
    failures += checkline("closed-form risk is finite and nonnegative",
                          std::isfinite(closed) && closed >= 0.0);
    return failures;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel subspace embeddings via adaptive ridge-leverage sampling"};
    app.require_subcommand(1);

    // run
    auto* run = app.add_subcommand("run", "run one benchmark configuration");
    CommonArgs rargs;
    add_common(run, rargs);
    std::string method = "adaptive";
    double eps = 1.0 / 3.0, lambda = 1.0;
    double mu = 0.0;
    index_t s_fixed = 0;
    RandomSeed seed = 42;
    std::string out_path;
    index_t cap_dprime = 24, cap_mprime = 96, cap_nprime = 48, cap_sint = 256;
    run->add_option("--method", method, "adaptive|rownorm|exact")
        ->check(CLI::IsMember({"adaptive", "rownorm", "exact"}));
    run->add_option("--eps", eps, "spectral accuracy epsilon (0, 1/3]");
    run->add_option("--lambda", lambda, "ridge regularizer")->required();
    run->add_option("--mu", mu, "statistical-dimension upper bound (0 = estimate)");
    run->add_option("--s", s_fixed, "fixed embedding dimension (overrides --mu)");
    run->add_option("--seed", seed, "root seed");
    run->add_option("--out", out_path, "write the JSON report here");
    run->add_option("--cap-dprime", cap_dprime, "cap on the JL dimension d'");
    run->add_option("--cap-mprime", cap_mprime, "cap on the sketch dimension m'");
    run->add_option("--cap-nprime", cap_nprime, "cap on the bucket compression n'");
    run->add_option("--cap-sint", cap_sint, "cap on the sketch-tree internal dimension");

    // grid
    auto* grid = app.add_subcommand("grid", "grid search over lambda (and gamma)");
    CommonArgs gargs;
    add_common(grid, gargs);
    std::string lambdas_text = "0.01,0.1,1,10";
    std::string gammas_text;
    std::string grid_method = "rownorm";
    index_t grid_s = 400;
    RandomSeed grid_seed = 42;
    std::string grid_out;
    grid->add_option("--lambdas", lambdas_text, "comma-separated ridge values");
    grid->add_option("--gammas", gammas_text, "comma-separated bandwidths (Gaussian only)");
    grid->add_option("--method", grid_method, "adaptive|rownorm|exact")
        ->check(CLI::IsMember({"adaptive", "rownorm", "exact"}));
    grid->add_option("--s", grid_s, "embedding dimension per run");
    grid->add_option("--seed", grid_seed, "root seed");
    grid->add_option("--out", grid_out, "write all JSON reports here");

    // verify
    auto* verify = app.add_subcommand("verify", "run an oracle test battery");
    std::string suite = "samplers";
    RandomSeed vseed = 7;
    verify->add_option("--suite", suite, "samplers|spectral|krr")
        ->check(CLI::IsMember({"samplers", "spectral", "krr"}))
        ->required();
    verify->add_option("--seed", vseed, "battery seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*verify) {
            int failures = 0;
            std::printf("verify --suite %s (seed %llu)\n", suite.c_str(),
                        static_cast<unsigned long long>(vseed));
            if (suite == "samplers") failures = verify_samplers(vseed);
            if (suite == "spectral") failures = verify_spectral(vseed);
            if (suite == "krr") failures = verify_krr(vseed);
            std::printf("%s\n", failures == 0 ? "all checks passed" : "FAILURES detected");
            return failures == 0 ? 0 : 1;
        }

        if (*run) {
            if (rargs.threads > 0) setenv("KSEMBED_THREADS", std::to_string(rargs.threads).c_str(), 1);
            BenchKernel kernel = parse_kernel(rargs.kernel_text);
            Dataset ds = load_for(rargs, kernel);
            kernel = finalize_kernel(kernel, rargs, ds);
            BenchOptions opt;
            opt.method = method == "adaptive" ? BenchMethod::Adaptive
                         : method == "rownorm" ? BenchMethod::Rownorm
                                               : BenchMethod::Exact;
            opt.kernel = kernel;
            opt.eps = eps;
            opt.lambda = lambda;
            if (mu > 0) opt.mu = mu;
            if (s_fixed > 0) opt.s = s_fixed;
            opt.seed = seed;
            opt.sampler.d_prime_cap = cap_dprime;
            opt.sampler.m_prime_cap = cap_mprime;
            opt.sampler.n_prime_cap = cap_nprime;
            opt.sampler.s_int_cap = cap_sint;
            RunReport rep = run_benchmark(ds, opt);
            print_report(rep);
            if (!out_path.empty()) {
                emit_report({rep}, out_path);
                std::printf("report written to %s\n", out_path.c_str());
            }
            return 0;
        }

        if (*grid) {
            if (gargs.threads > 0) setenv("KSEMBED_THREADS", std::to_string(gargs.threads).c_str(), 1);
            std::vector<double> lambdas, gammas;
            {
                std::stringstream ss(lambdas_text);
                std::string tok;
                while (std::getline(ss, tok, ',')) lambdas.push_back(std::stod(tok));
                if (!gammas_text.empty()) {
                    std::stringstream gs(gammas_text);
                    while (std::getline(gs, tok, ',')) gammas.push_back(std::stod(tok));
                }
            }
            if (gammas.empty()) gammas.push_back(0.0);
            std::vector<RunReport> reports;
            const RunReport* best = nullptr;
            for (double g : gammas) {
                CommonArgs cur = gargs;
                cur.gamma = g;
                BenchKernel kernel = parse_kernel(cur.kernel_text);
                Dataset ds = load_for(cur, kernel);
                kernel = finalize_kernel(kernel, cur, ds);
                for (double l : lambdas) {
                    BenchOptions opt;
                    opt.method = grid_method == "adaptive" ? BenchMethod::Adaptive
                                 : grid_method == "rownorm" ? BenchMethod::Rownorm
                                                            : BenchMethod::Exact;
                    opt.kernel = kernel;
                    opt.lambda = l;
                    opt.s = grid_s;
                    opt.seed = grid_seed;
                    reports.push_back(run_benchmark(ds, opt));
                    const auto& rep = reports.back();
                    std::printf("gamma=%.4g lambda=%.4g -> train %.5g test %.5g (%.0f ms)\n", g, l,
                                rep.train_rmse, rep.test_rmse,
                                rep.sampling_ms + rep.embedding_ms + rep.solve_ms + rep.predict_ms);
                }
            }
            for (const auto& rep : reports)
                if (rep.has_test && (!best || rep.test_rmse < best->test_rmse)) best = &rep;
            if (best)
                std::printf("best: kernel=%s lambda=%.6g test RMSE=%.6g\n", best->kernel.c_str(),
                            best->lambda, best->test_rmse);
            if (!grid_out.empty()) {
                emit_report(reports, grid_out);
                std::printf("reports written to %s\n", grid_out.c_str());
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
