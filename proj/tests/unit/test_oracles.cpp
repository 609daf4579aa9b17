#include <doctest.h>

#include <cmath>

#include "ksembed/oracles.hpp"

using namespace ksembed;

TEST_CASE("exact_row_norm_distribution basics") {
    DenseMatrix Phi(3, 2);
    Phi << 3.0, 0.0,
           0.0, 4.0,
           0.0, 0.0;
    DenseMatrix empty(0, 2);
    auto p = exact_row_norm_probabilities(Phi, empty, 2.0);
    // B empty: lambda cancels, p_i proportional to squared row norms.
    CHECK(p[0] == doctest::Approx(9.0 / 25.0));
    CHECK(p[1] == doctest::Approx(16.0 / 25.0));
    CHECK(p[2] == doctest::Approx(0.0));
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
}

TEST_CASE("exact_row_norm_distribution matches a first-principles double loop") {
    DenseMatrix Phi = gaussian_matrix(7, 4, RandomSeed{61});
    DenseMatrix B = gaussian_matrix(2, 4, RandomSeed{62});
    const double lambda = 0.6;
    auto p = exact_row_norm_probabilities(Phi, B, lambda);

    // Independent route: explicit inverse square root, then entrywise sums.
    DenseMatrix G = B.transpose() * B + lambda * DenseMatrix::Identity(4, 4);
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(G);
    DenseMatrix R = Phi * es.eigenvectors() *
                    es.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
                    es.eigenvectors().transpose();
    double total = 0;
    std::vector<double> expect(7, 0.0);
    for (int i = 0; i < 7; ++i)
        for (int j = 0; j < 4; ++j) {
            expect[static_cast<size_t>(i)] += R(i, j) * R(i, j);
            total += R(i, j) * R(i, j);
        }
    for (int i = 0; i < 7; ++i)
        CHECK(std::abs(p[static_cast<size_t>(i)] - expect[static_cast<size_t>(i)] / total) < 1e-10);
}

TEST_CASE("poly and taylor row layouts") {
    PolyRowLayout poly{3, 2};
    CHECK(poly.rows() == 9);
    auto f = poly.to_feature(5);  // (1, 2) row-major
    CHECK(f.block_degree == 2);
    CHECK(f.indices == std::vector<index_t>{1, 2});

    TaylorRowLayout taylor{3, 2};
    CHECK(taylor.rows() == 13);
    CHECK(taylor.to_feature(0).block_degree == 0);
    CHECK(taylor.to_feature(2).block_degree == 1);
    CHECK(taylor.to_feature(2).indices == std::vector<index_t>{1});
    auto g = taylor.to_feature(4 + 5);
    CHECK(g.block_degree == 2);
    CHECK(g.indices == std::vector<index_t>{1, 2});
}

TEST_CASE("dense_pipeline: one-round case is plain row-norm sampling") {
    DenseMatrix Phi(4, 3);
    Phi << 1, 0, 0,
           0, 2, 0,
           0, 0, 1,
           1, 1, 1;
    SamplerConfig config;
    config.seed = 77;
    config.s_override = 40000;
    // lambda far above lambda_0 forces the single-round base case.
    auto sampler = dense_pipeline(Phi, 1e9, 1.0 / 3.0, 1.0, config);
    REQUIRE(sampler.s == 40000);

    Vector counts = Vector::Zero(4);
    for (const auto& ws : sampler.samples) {
        CHECK(weight_consistency_check(ws, sampler.s));
        counts[ws.index.indices[0]] += 1.0;
    }
    Vector rownorm = Phi.rowwise().squaredNorm();
    rownorm /= rownorm.sum();
    for (index_t i = 0; i < 4; ++i)
        CHECK(std::abs(counts[i] / 40000.0 - rownorm[i]) < 0.01);
}

TEST_CASE("dense_pipeline achieves the spectral guarantee on I_8") {
    const index_t n = 8;
    DenseMatrix Phi = DenseMatrix::Identity(n, n);
    const double lambda = 1.0, eps = 1.0 / 3.0;
    double mu = statistical_dimension(Vector::Ones(n), lambda);
    int passes = 0;
    const int runs = 40;
    for (int r = 0; r < runs; ++r) {
        SamplerConfig config;
        config.seed = static_cast<RandomSeed>(1000 + r);
        auto sampler = dense_pipeline(Phi, lambda, eps, mu, config);
        DenseMatrix Z = dense_pipeline_embed(Phi, sampler);
        auto res = spectral_approx_check(Phi, Z, lambda, eps);
        if (res.passed) ++passes;
        for (const auto& ws : sampler.samples) CHECK(weight_consistency_check(ws, sampler.s));
    }
    CHECK(passes >= 38);  // >= 95%
}
