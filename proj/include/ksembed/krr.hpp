#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>

#include "ksembed/common.hpp"
#include "ksembed/linalg.hpp"
#include "ksembed/poly_sampler.hpp"
#include "ksembed/sampling.hpp"
#include "ksembed/taylor_sampler.hpp"

namespace ksembed {

// Kernel selection shared by the exact fit path and the CLI.
struct KernelSpec {
    enum class Family { Polynomial, Gaussian, Taylor } family = Family::Polynomial;
    index_t poly_degree = 2;
    std::optional<TaylorKernelSpec> taylor;  // lifting spec for Gaussian / Taylor

    double value(const Vector& x, const Vector& y) const {
        switch (family) {
            case Family::Polynomial:
                return std::pow(x.dot(y), static_cast<double>(poly_degree));
            case Family::Gaussian:
                return std::exp(-0.5 * (x - y).squaredNorm());
            case Family::Taylor:
                return taylor->kernel_value(x.dot(y), x.squaredNorm(), y.squaredNorm());
        }
        return 0;
    }

    DenseMatrix matrix(const SparseDataMatrix& X) const {
        switch (family) {
            case Family::Polynomial:
                return poly_kernel_matrix(X, poly_degree);
            case Family::Gaussian:
                return gaussian_kernel_matrix(X);
            case Family::Taylor:
                return taylor_kernel_matrix(X, *taylor);
        }
        return {};
    }

    // Cross-kernel k(x_train_j, x_test_c).
    DenseMatrix cross_matrix(const SparseDataMatrix& X_train, const SparseDataMatrix& X_test) const {
        DenseMatrix A = X_train.to_dense();
        DenseMatrix B = X_test.to_dense();
        DenseMatrix K(A.cols(), B.cols());
        for (index_t i = 0; i < A.cols(); ++i)
            for (index_t j = 0; j < B.cols(); ++j) K(i, j) = value(A.col(i), B.col(j));
        return K;
    }
};

struct KrrModel {
    enum class Mode { Exact, Approximate } mode = Mode::Exact;
    double lambda = 0;
    double jitter_used = 0;  // extra ridge the retry ladder had to add, 0 normally
    Vector alpha;            // exact mode, length n
    Vector w;                // approximate mode, length s
    SamplingMatrix Pi;       // approximate mode
    std::optional<TaylorKernelSpec> taylor;  // approximate mode, Taylor liftings
    std::shared_ptr<const SparseDataMatrix> train_X;  // exact mode prediction handle
    std::optional<KernelSpec> kernel;                 // exact mode prediction handle
};

namespace detail {

// SPD solve with a lambda-jitter retry ladder (x10, up to 3 retries).
inline Vector spd_solve_with_ladder(const DenseMatrix& A, const Vector& rhs, double lambda,
                                    double* jitter_used) {
    double jitter = 0;
    for (int attempt = 0; attempt <= 3; ++attempt) {
        DenseMatrix sys = A;
        if (jitter > 0) sys += jitter * DenseMatrix::Identity(A.rows(), A.cols());
        Eigen::LLT<DenseMatrix> llt(sys);
        if (llt.info() == Eigen::Success) {
            *jitter_used = jitter;
            return llt.solve(rhs);
        }
        jitter = jitter == 0 ? lambda * 10.0 : jitter * 10.0;
    }
    throw numerical_error("krr: Cholesky failed after the jitter ladder");
}

}  // namespace detail

// alpha solves (K + lambda I) alpha = y.
inline KrrModel fit_exact(const DenseMatrix& K, const Vector& y, double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("fit_exact: lambda must be positive");
    if (K.rows() != y.size()) throw std::invalid_argument("fit_exact: size mismatch");
    if (K.rows() > 20000) throw resource_limit_error("fit_exact: n exceeds the exact-solve guard");
    detail::require_symmetric_psd(K, "fit_exact");
    const index_t n = K.rows();
    DenseMatrix sys = K + lambda * DenseMatrix::Identity(n, n);
    KrrModel model;
    model.mode = KrrModel::Mode::Exact;
    model.lambda = lambda;
    model.alpha = detail::spd_solve_with_ladder(sys, y, lambda, &model.jitter_used);
    double ref = lambda + model.jitter_used;
    DenseMatrix check = K + ref * DenseMatrix::Identity(n, n);
    if ((check * model.alpha - y).norm() > 1e-8 * std::max(y.norm(), 1e-300))
        throw numerical_error("fit_exact: residual exceeds tolerance");
    return model;
}

// w solves (Z Z^T + lambda I_s) w = Z y. Solved as the s x s system when
// s <= n, and through the push-through identity w = Z (Z^T Z + lambda I)^{-1} y
// when the sampler is larger than the dataset.
inline KrrModel fit_approx(const DenseMatrix& Z, const Vector& y, double lambda,
                           const SamplingMatrix& Pi,
                           std::optional<TaylorKernelSpec> taylor = std::nullopt) {
    if (!(lambda > 0)) throw std::invalid_argument("fit_approx: lambda must be positive");
    if (Z.cols() != y.size()) throw std::invalid_argument("fit_approx: size mismatch");
    const index_t s = Z.rows();
    const index_t n = Z.cols();
    Vector rhs = Z * y;
    KrrModel model;
    model.mode = KrrModel::Mode::Approximate;
    model.lambda = lambda;
    model.Pi = Pi;
    model.taylor = std::move(taylor);
    if (s <= n) {
        DenseMatrix sys = Z * Z.transpose() + lambda * DenseMatrix::Identity(s, s);
        model.w = detail::spd_solve_with_ladder(sys, rhs, lambda, &model.jitter_used);
    } else {
        DenseMatrix gram = Z.transpose() * Z + lambda * DenseMatrix::Identity(n, n);
        Vector inner = detail::spd_solve_with_ladder(gram, y, lambda, &model.jitter_used);
        model.w = Z * inner;
    }
    double ref = lambda + model.jitter_used;
    Vector residual = Z * (Z.transpose() * model.w) + ref * model.w - rhs;
    if (residual.norm() > 1e-8 * std::max(rhs.norm(), 1e-300))
        throw numerical_error("fit_approx: residual exceeds tolerance");
    return model;
}

// Exact mode: sum_j k(x_j, x) alpha_j. Approximate mode: <w, Pi phi(x)>,
// embedding the test points through the training sampler.
inline Vector predict(const KrrModel& model, const SparseDataMatrix& X_test) {
    if (model.mode == KrrModel::Mode::Exact) {
        if (!model.train_X || !model.kernel)
            throw std::invalid_argument("predict: exact model is missing its training data handle");
        if (X_test.n_rows() != model.train_X->n_rows())
            throw std::invalid_argument("predict: dimension mismatch");
        DenseMatrix Kx = model.kernel->cross_matrix(*model.train_X, X_test);
        return Kx.transpose() * model.alpha;
    }
    if (X_test.n_rows() != model.Pi.data_dim)
        throw std::invalid_argument("predict: dimension mismatch");
    Vector out(X_test.n_cols());
    parallel_for(X_test.n_cols(), [&](index_t lo, index_t hi) {
        for (index_t c = lo; c < hi; ++c) {
            Vector z = model.Pi.taylor_blocks
                           ? taylor_embed_out_of_sample(X_test.col_vector(c), *model.taylor, model.Pi)
                           : poly_embed_out_of_sample(X_test.col_vector(c), model.Pi);
            out[c] = model.w.dot(z);
        }
    });
    return out;
}

// (1/n) sum |pred_i - f*_i|^2 for one noise replicate; callers average.
inline double empirical_risk(const Vector& predictions, const Vector& f_star) {
    if (predictions.size() != f_star.size())
        throw std::invalid_argument("empirical_risk: length mismatch");
    return (predictions - f_star).squaredNorm() / static_cast<double>(predictions.size());
}

// Exact KRR risk closed form:
// R = n^-1 lambda^2 f^T (K+lambda I)^-2 f + n^-1 sigma^2 tr(K^2 (K+lambda I)^-2).
inline double risk_exact_closed_form(const DenseMatrix& K, const Vector& f, double sigma_sq,
                                     double lambda) {
    const index_t n = K.rows();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
    Vector ev = es.eigenvalues().cwiseMax(0.0);
    Vector fr = es.eigenvectors().transpose() * f;
    double bias = 0, var = 0;
    for (index_t i = 0; i < n; ++i) {
        double denom = ev[i] + lambda;
        bias += lambda * lambda * fr[i] * fr[i] / (denom * denom);
        var += ev[i] * ev[i] / (denom * denom);
    }
    return (bias + sigma_sq * var) / static_cast<double>(n);
}

// Upper-bound form R_hat_K(f) = n^-1 lambda f^T (K+lambda I)^-1 f + n^-1 sigma^2 s_lambda(K).
inline double risk_hat(const DenseMatrix& K, const Vector& f, double sigma_sq, double lambda) {
    const index_t n = K.rows();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(K);
    Vector ev = es.eigenvalues().cwiseMax(0.0);
    Vector fr = es.eigenvectors().transpose() * f;
    double bias = 0, sdim = 0;
    for (index_t i = 0; i < n; ++i) {
        bias += lambda * fr[i] * fr[i] / (ev[i] + lambda);
        sdim += ev[i] / (ev[i] + lambda);
    }
    return (bias + sigma_sq * sdim) / static_cast<double>(n);
}

struct RiskBoundResult {
    double lhs = 0;
    double rhs = 0;
    bool holds = false;
};

// Risk transfer bound: R_hat_{K~}(f) <= (1-eps)^-1 R_hat_K(f)
//                                       + eps/(1+eps) rank(K~)/n sigma^2,
// for any K~ that is an (eps, lambda)-spectral approximation of K.
inline RiskBoundResult risk_bound_check(const DenseMatrix& K, const DenseMatrix& K_tilde,
                                        const Vector& f_star, double sigma_sq, double lambda,
                                        double epsilon) {
    auto spectral = spectral_approx_check_gram(K, K_tilde, lambda, epsilon);
    if (!spectral.passed)
        throw std::invalid_argument("risk_bound_check: K_tilde is not an (eps,lambda)-approximation");
    Eigen::SelfAdjointEigenSolver<DenseMatrix> esK(K);
    if (esK.eigenvalues().maxCoeff() < 1.0)
        throw std::invalid_argument("risk_bound_check: requires ||K||_op >= 1");
    Eigen::SelfAdjointEigenSolver<DenseMatrix> esT(0.5 * (K_tilde + K_tilde.transpose()));
    double max_ev = esT.eigenvalues().maxCoeff();
    index_t rank = 0;
    for (index_t i = 0; i < esT.eigenvalues().size(); ++i)
        if (esT.eigenvalues()[i] > 1e-10 * std::max(max_ev, 1.0)) ++rank;

    RiskBoundResult res;
    res.lhs = risk_hat(0.5 * (K_tilde + K_tilde.transpose()), f_star, sigma_sq, lambda);
    res.rhs = risk_hat(K, f_star, sigma_sq, lambda) / (1.0 - epsilon) +
              epsilon / (1.0 + epsilon) * static_cast<double>(rank) /
                  static_cast<double>(K.rows()) * sigma_sq;
    res.holds = res.lhs <= res.rhs * (1.0 + 1e-9);
    return res;
}

}  // namespace ksembed
