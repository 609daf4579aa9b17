#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "ksembed/common.hpp"
#include "ksembed/rng.hpp"
#include "ksembed/sparse_matrix.hpp"

namespace ksembed {

// Symmetry / definiteness tolerance for floating-point kernel matrices,
// relative to max|K|.
inline constexpr double kPsdTol = 1e-8;

inline bool all_finite(const DenseMatrix& A) { return A.allFinite(); }

// i.i.d. standard normal matrix, filled in storage order from the stream.
inline DenseMatrix gaussian_matrix(index_t rows, index_t cols, RngStream stream) {
    if (rows < 1 || cols < 1)
        throw std::invalid_argument("gaussian_matrix: rows and cols must be >= 1");
    DenseMatrix A(rows, cols);
    double* p = A.data();
    const index_t count = rows * cols;
    for (index_t i = 0; i < count; ++i) p[i] = stream.normal();
    return A;
}

inline DenseMatrix gaussian_matrix(index_t rows, index_t cols, RandomSeed seed) {
    return gaussian_matrix(rows, cols, RngStream(seed).derive("gaussian_matrix"));
}

// M = (B^T B + lambda I)^{-1/2} H. The spectrum of B comes from the smaller
// of the two Gram matrices, so the n x n matrix is never formed when B is
// wide: with B^T B = V S^2 V^T the action splits into the span of V and its
// complement, M = V ((S^2+lambda)^{-1/2} - lambda^{-1/2}) V^T H + lambda^{-1/2} H.
// Cost O(m^2 n + m n k) for an m x n B.
inline DenseMatrix regularized_inv_sqrt_apply(const DenseMatrix& B, double lambda,
                                              const DenseMatrix& H) {
    if (!(lambda > 0) || !std::isfinite(lambda))
        throw std::invalid_argument("regularized_inv_sqrt_apply: lambda must be positive");
    if (!all_finite(B) || !all_finite(H))
        throw std::invalid_argument("regularized_inv_sqrt_apply: non-finite entries");
    const double inv_sqrt_lambda = 1.0 / std::sqrt(lambda);
    if (B.rows() == 0) return inv_sqrt_lambda * H;
    if (B.cols() != H.rows())
        throw std::invalid_argument("regularized_inv_sqrt_apply: dimension mismatch");
    const index_t m = B.rows();
    const index_t n = B.cols();

    if (m >= n) {
        DenseMatrix G = B.transpose() * B + lambda * DenseMatrix::Identity(n, n);
        Eigen::SelfAdjointEigenSolver<DenseMatrix> es(G);
        Vector inv_sqrt = es.eigenvalues().cwiseMax(lambda).cwiseSqrt().cwiseInverse();
        return es.eigenvectors() * (inv_sqrt.asDiagonal() * (es.eigenvectors().transpose() * H));
    }

    // Wide B: right singular subspace via the m x m Gram matrix.
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(B * B.transpose());
    Vector mu = es.eigenvalues().cwiseMax(0.0);
    double tol = mu.maxCoeff() * 1e-14;
    std::vector<index_t> keep;
    for (index_t i = 0; i < m; ++i)
        if (mu[i] > tol) keep.push_back(i);
    const index_t r = static_cast<index_t>(keep.size());
    if (r == 0) return inv_sqrt_lambda * H;
    DenseMatrix V(n, r);  // right singular vectors for the kept spectrum
    Vector scale(r);
    for (index_t k = 0; k < r; ++k) {
        index_t i = keep[static_cast<size_t>(k)];
        V.col(k) = B.transpose() * es.eigenvectors().col(i) / std::sqrt(mu[i]);
        scale[k] = 1.0 / std::sqrt(mu[i] + lambda) - inv_sqrt_lambda;
    }
    DenseMatrix VtH = V.transpose() * H;
    DenseMatrix M = V * (scale.asDiagonal() * VtH);
    M.noalias() += inv_sqrt_lambda * H;
    return M;
}

// s_lambda = sum_i ev_i / (ev_i + lambda). Small negative eigenvalues from
// floating-point symmetrization are clamped to zero; anything below
// -1e-9 * max is rejected.
inline double statistical_dimension(const std::vector<double>& eigenvalues, double lambda) {
    if (!(lambda > 0) || !std::isfinite(lambda))
        throw std::invalid_argument("statistical_dimension: lambda must be positive");
    double max_ev = 0;
    for (double ev : eigenvalues) max_ev = std::max(max_ev, ev);
    double s = 0;
    for (double ev : eigenvalues) {
        if (ev < -1e-9 * max_ev)
            throw std::invalid_argument("statistical_dimension: negative eigenvalue");
        double v = std::max(ev, 0.0);
        s += v / (v + lambda);
    }
    return s;
}

inline double statistical_dimension(const Vector& eigenvalues, double lambda) {
    return statistical_dimension(
        std::vector<double>(eigenvalues.data(), eigenvalues.data() + eigenvalues.size()), lambda);
}

struct SpectralCheckResult {
    bool passed = false;
    double max_deviation = 0.0;  // distance of the worst eigenvalue outside the interval
};

namespace detail {

inline void require_symmetric_psd(const DenseMatrix& K, const char* where) {
    if (K.rows() != K.cols()) throw std::invalid_argument(std::string(where) + ": K must be square");
    double scale = K.cwiseAbs().maxCoeff();
    double tol = kPsdTol * std::max(scale, 1e-300);
    if ((K - K.transpose()).cwiseAbs().maxCoeff() > tol)
        throw std::invalid_argument(std::string(where) + ": K is not symmetric");
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (K + K.transpose()),
                                                  Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -tol)
        throw std::invalid_argument(std::string(where) + ": K is not PSD");
}

// Generalized eigenvalues of (A + lambda I) w.r.t. (Kref + lambda I) via
// whitening with the Cholesky factor of the reference.
inline SpectralCheckResult spectral_check_gram(const DenseMatrix& Kref, const DenseMatrix& A,
                                               double lambda, double epsilon) {
    const index_t n = Kref.rows();
    DenseMatrix lhs = A + lambda * DenseMatrix::Identity(n, n);
    DenseMatrix ref = Kref + lambda * DenseMatrix::Identity(n, n);
    Eigen::LLT<DenseMatrix> llt(ref);
    if (llt.info() != Eigen::Success)
        throw numerical_error("spectral_approx_check: Cholesky of K + lambda I failed");
    DenseMatrix L = llt.matrixL();
    DenseMatrix W = L.triangularView<Eigen::Lower>().solve(lhs);
    W = L.triangularView<Eigen::Lower>().solve(W.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (W + W.transpose()),
                                                  Eigen::EigenvaluesOnly);
    const double lo = 1.0 / (1.0 + epsilon);
    const double hi = 1.0 / (1.0 - epsilon);
    double dev = 0.0;
    for (index_t i = 0; i < n; ++i) {
        double g = es.eigenvalues()[i];
        dev = std::max(dev, std::max(lo - g, g - hi));
    }
    dev = std::max(dev, 0.0);
    return {dev == 0.0, dev};
}

}  // namespace detail

// Two-sided check of (K + lambda I)/(1+eps) <= Z^T Z + lambda I <= (K + lambda I)/(1-eps),
// i.e. all generalized eigenvalues in [1/(1+eps), 1/(1-eps)]. Oracle-scale only.
inline SpectralCheckResult spectral_approx_check(const DenseMatrix& K, const DenseMatrix& Z,
                                                 double lambda, double epsilon) {
    if (!(epsilon > 0) || !(epsilon < 1))
        throw std::invalid_argument("spectral_approx_check: epsilon must lie in (0,1)");
    if (!(lambda > 0)) throw std::invalid_argument("spectral_approx_check: lambda must be positive");
    if (Z.cols() != K.rows())
        throw std::invalid_argument("spectral_approx_check: Z has wrong number of columns");
    detail::require_symmetric_psd(K, "spectral_approx_check");
    DenseMatrix A = Z.transpose() * Z;
    return detail::spectral_check_gram(K, A, lambda, epsilon);
}

// Same check with the approximation given directly as a Gram matrix.
inline SpectralCheckResult spectral_approx_check_gram(const DenseMatrix& K,
                                                      const DenseMatrix& Ktilde, double lambda,
                                                      double epsilon) {
    if (!(epsilon > 0) || !(epsilon < 1))
        throw std::invalid_argument("spectral_approx_check: epsilon must lie in (0,1)");
    if (!(lambda > 0)) throw std::invalid_argument("spectral_approx_check: lambda must be positive");
    detail::require_symmetric_psd(K, "spectral_approx_check");
    return detail::spectral_check_gram(K, Ktilde, lambda, epsilon);
}

// Ridge leverage scores l_i = phi_i^T (Phi^T Phi + lambda I)^{-1} phi_i for
// the rows of Phi. Oracle-scale; their sum equals the statistical dimension
// of Phi^T Phi.
inline std::vector<double> ridge_leverage_scores(const DenseMatrix& Phi, double lambda) {
    if (!(lambda > 0)) throw std::invalid_argument("ridge_leverage_scores: lambda must be positive");
    if (!all_finite(Phi)) throw std::invalid_argument("ridge_leverage_scores: non-finite entries");
    if (Phi.rows() * Phi.cols() > index_t{50000000})
        throw resource_limit_error("ridge_leverage_scores: matrix too large for the oracle");
    const index_t n = Phi.cols();
    DenseMatrix G = Phi.transpose() * Phi + lambda * DenseMatrix::Identity(n, n);
    Eigen::LLT<DenseMatrix> llt(G);
    if (llt.info() != Eigen::Success)
        throw numerical_error("ridge_leverage_scores: Cholesky failed");
    DenseMatrix L = llt.matrixL();
    // l_i = || L^{-1} phi_i ||^2
    DenseMatrix T = L.triangularView<Eigen::Lower>().solve(DenseMatrix(Phi.transpose()));
    std::vector<double> scores(static_cast<size_t>(Phi.rows()));
    for (index_t i = 0; i < Phi.rows(); ++i) scores[static_cast<size_t>(i)] = T.col(i).squaredNorm();
    return scores;
}

}  // namespace ksembed
