#include <doctest.h>

#include <cmath>

#include "ksembed/krr.hpp"

using namespace ksembed;

TEST_CASE("fit_exact closed forms and residual contract") {
    DenseMatrix I4 = DenseMatrix::Identity(4, 4);
    Vector y(4);
    y << 1, -2, 3, 0.5;
    auto model = fit_exact(I4, y, 1.0);
    CHECK((model.alpha - 0.5 * y).norm() < 1e-12);
    CHECK(model.jitter_used == 0.0);

    DenseMatrix K1(1, 1);
    K1 << 2.0;
    Vector y1(1);
    y1 << 5.0;
    auto m1 = fit_exact(K1, y1, 0.5);
    CHECK(m1.alpha[0] == doctest::Approx(2.0));

    DenseMatrix A = gaussian_matrix(10, 10, RandomSeed{111});
    DenseMatrix K = A * A.transpose();
    Vector yr = gaussian_matrix(10, 1, RandomSeed{112});
    auto mr = fit_exact(K, yr, 0.3);
    CHECK(((K + 0.3 * DenseMatrix::Identity(10, 10)) * mr.alpha - yr).norm() <= 1e-8 * yr.norm());

    CHECK_THROWS_AS(fit_exact(K, yr, 0.0), std::invalid_argument);
    DenseMatrix asym = K;
    asym(0, 1) += 1.0;
    CHECK_THROWS_AS(fit_exact(asym, yr, 1.0), std::invalid_argument);
}

TEST_CASE("fit_approx closed forms") {
    // Orthonormal rows scaled by c: w = c/(c^2 + lambda) * (row projections of y).
    const double c = 2.0;
    DenseMatrix Z = DenseMatrix::Zero(2, 4);
    Z(0, 0) = c;
    Z(1, 2) = c;
    Vector y(4);
    y << 1, 9, -3, 9;
    SamplingMatrix dummy;
    dummy.s = 2;
    auto model = fit_approx(Z, y, 0.5, dummy);
    CHECK(model.w[0] == doctest::Approx(c * 1.0 / (c * c + 0.5)));
    CHECK(model.w[1] == doctest::Approx(c * -3.0 / (c * c + 0.5)));

    // s = 1 scalar solve.
    DenseMatrix z1(1, 3);
    z1 << 1.0, 2.0, 2.0;
    Vector y3(3);
    y3 << 1, 0, 1;
    auto ms = fit_approx(z1, y3, 0.25, dummy);
    CHECK(ms.w[0] == doctest::Approx((z1 * y3)(0) / (9.0 + 0.25)));
}

TEST_CASE("cholesky-factor embedding reproduces exact KRR on the training set") {
    DenseMatrix A = gaussian_matrix(12, 12, RandomSeed{222});
    DenseMatrix K = A * A.transpose() + 0.1 * DenseMatrix::Identity(12, 12);
    Vector y = gaussian_matrix(12, 1, RandomSeed{223});
    const double lambda = 0.7;

    Eigen::LLT<DenseMatrix> llt(K);
    DenseMatrix Z = DenseMatrix(llt.matrixL()).transpose();
    SamplingMatrix dummy;
    dummy.s = 12;

    auto exact = fit_exact(K, y, lambda);
    auto approx = fit_approx(Z, y, lambda, dummy);
    Vector pred_exact = K * exact.alpha;
    Vector pred_approx = Z.transpose() * approx.w;
    CHECK((pred_exact - pred_approx).norm() <= 1e-6 * pred_exact.norm());
}

TEST_CASE("predict: exact mode on training points and approximate consistency") {
    DenseMatrix Xd(2, 6);
    Xd << 0.4, -0.2, 0.7, 0.1, -0.5, 0.3,
          0.1, 0.6, -0.3, 0.8, 0.2, -0.6;
    auto X = std::make_shared<SparseDataMatrix>(SparseDataMatrix::from_dense(Xd));
    KernelSpec kernel;
    kernel.family = KernelSpec::Family::Polynomial;
    kernel.poly_degree = 2;
    DenseMatrix K = kernel.matrix(*X);
    Vector y(6);
    y << 1, 2, 3, -1, -2, 0;
    auto model = fit_exact(K, y, 0.5);
    model.train_X = X;
    model.kernel = kernel;
    Vector pred = predict(model, *X);
    CHECK((pred - K * model.alpha).norm() < 1e-10);

    // Approximate mode: training predictions are Z^T w.
    SamplerConfig config;
    config.seed = 17;
    auto emb = poly_adaptive_embedding(*X, 2, 0.5, 1.0 / 3.0, 3.0, config);
    auto am = fit_approx(emb.Z, y, 0.5, emb.sampler);
    Vector apred = predict(am, *X);
    CHECK((apred - emb.Z.transpose() * am.w).norm() < 1e-10);

    // The spectral guarantee keeps approximate predictions near the exact ones.
    if (spectral_approx_check(K, emb.Z, 0.5, 1.0 / 3.0).passed)
        CHECK((apred - pred).norm() <= 0.75 * pred.norm());
}

TEST_CASE("empirical_risk basics and the closed-form identity") {
    Vector f(4);
    f << 1, 2, 3, 4;
    CHECK(empirical_risk(f, f) == 0.0);
    Vector off = f.array() + 0.5;
    CHECK(empirical_risk(off, f) == doctest::Approx(0.25));
    Vector b(3);
    CHECK_THROWS_AS(empirical_risk(f, b), std::invalid_argument);

    // Monte-Carlo over noise draws matches the exact-KRR closed form.
    const index_t n = 16;
    DenseMatrix A = gaussian_matrix(n, n, RandomSeed{331});
    DenseMatrix K = (A * A.transpose()) / static_cast<double>(n);
    Vector fstar = gaussian_matrix(n, 1, RandomSeed{332});
    const double lambda = 0.4, sigma = 0.3;

    DenseMatrix solve_op =
        K * (K + lambda * DenseMatrix::Identity(n, n)).inverse();  // prediction operator
    RngStream noise = RngStream(77).derive("noise");
    const int reps = 200;
    std::vector<double> risks;
    for (int r = 0; r < reps; ++r) {
        Vector nu(n);
        for (index_t i = 0; i < n; ++i) nu[i] = sigma * noise.normal();
        Vector pred = solve_op * (fstar + nu);
        risks.push_back(empirical_risk(pred, fstar));
    }
    double mean = 0;
    for (double r : risks) mean += r;
    mean /= reps;
    double var = 0;
    for (double r : risks) var += (r - mean) * (r - mean);
    double se = std::sqrt(var / reps / reps);
    double closed = risk_exact_closed_form(K, fstar, sigma * sigma, lambda);
    CHECK(std::abs(mean - closed) <= 3.0 * se);
}

TEST_CASE("risk bound holds with K~ = K and tightens as eps vanishes") {
    DenseMatrix A = gaussian_matrix(8, 8, RandomSeed{441});
    DenseMatrix K = A * A.transpose();
    K *= 8.0 / K.norm();  // keep the operator norm comfortably above 1
    Vector f = gaussian_matrix(8, 1, RandomSeed{442});
    auto res = risk_bound_check(K, K, f, 0.5, 0.3, 0.25);
    CHECK(res.holds);
    CHECK(res.lhs <= res.rhs);

    auto tight = risk_bound_check(K, K, f, 0.5, 0.3, 1e-9);
    CHECK(tight.holds);
    CHECK(tight.lhs == doctest::Approx(tight.rhs).epsilon(1e-6));
}

TEST_CASE("risk bound on a pipeline-produced spectral pair") {
    DenseMatrix Xd = gaussian_matrix(3, 24, RandomSeed{551});
    auto X = SparseDataMatrix::from_dense(Xd);
    DenseMatrix K = poly_kernel_matrix(X, 2);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
    REQUIRE(es.eigenvalues().maxCoeff() >= 1.0);
    double lambda = es.eigenvalues().maxCoeff() / 8.0;
    double mu = statistical_dimension(es.eigenvalues(), lambda);

    SamplerConfig config;
    config.seed = 999;
    auto emb = poly_adaptive_embedding(X, 2, lambda, 1.0 / 3.0, mu, config);
    auto spectral = spectral_approx_check(K, emb.Z, lambda, 1.0 / 3.0);
    REQUIRE(spectral.passed);

    Vector f = gaussian_matrix(24, 1, RandomSeed{552});
    auto res = risk_bound_check(K, emb.Z.transpose() * emb.Z, f, 0.2, lambda, 1.0 / 3.0);
    CHECK(res.holds);
}
