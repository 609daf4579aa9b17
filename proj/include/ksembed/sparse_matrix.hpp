#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ksembed/common.hpp"

namespace ksembed {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct SparseEntry {
    index_t index;
    double value;
};

// A single data point x in R^d, entries sorted by index.
struct SparseVector {
    index_t dim = 0;
    std::vector<SparseEntry> entries;

    SparseVector() = default;
    SparseVector(index_t d, std::vector<SparseEntry> e) : dim(d), entries(std::move(e)) {
        validate();
    }

    static SparseVector basis(index_t d, index_t i) {
        return SparseVector(d, {{i, 1.0}});
    }
    static SparseVector from_dense(const Vector& x, double drop_tol = 0.0) {
        std::vector<SparseEntry> e;
        for (index_t i = 0; i < x.size(); ++i)
            if (std::abs(x[i]) > drop_tol) e.push_back({i, x[i]});
        return SparseVector(x.size(), std::move(e));
    }

    Vector to_dense() const {
        Vector x = Vector::Zero(dim);
        for (const auto& e : entries) x[e.index] = e.value;
        return x;
    }

    double squared_norm() const {
        double s = 0;
        for (const auto& e : entries) s += e.value * e.value;
        return s;
    }

    void validate() const {
        index_t prev = -1;
        for (const auto& e : entries) {
            if (e.index < 0 || e.index >= dim)
                throw std::invalid_argument("SparseVector: index out of range");
            if (e.index <= prev)
                throw std::invalid_argument("SparseVector: indices must be strictly increasing");
            if (!std::isfinite(e.value) || e.value == 0.0)
                throw std::invalid_argument("SparseVector: values must be finite and nonzero");
            prev = e.index;
        }
    }
};

// The d x n column-sparse dataset matrix X. Columns are data points. Row
// views are built once at construction since the samplers walk X by rows.
class SparseDataMatrix {
public:
    SparseDataMatrix() = default;

    SparseDataMatrix(index_t n_rows, std::vector<std::vector<SparseEntry>> columns)
        : d_(n_rows), cols_(std::move(columns)) {
        if (d_ <= 0) throw std::invalid_argument("SparseDataMatrix: n_rows must be positive");
        if (cols_.empty()) throw std::invalid_argument("SparseDataMatrix: need at least one column");
        rows_.assign(static_cast<size_t>(d_), {});
        nnz_ = 0;
        for (index_t c = 0; c < n_cols(); ++c) {
            index_t prev = -1;
            for (const auto& e : cols_[static_cast<size_t>(c)]) {
                if (e.index < 0 || e.index >= d_)
                    throw std::invalid_argument("SparseDataMatrix: row index out of range");
                if (e.index <= prev)
                    throw std::invalid_argument("SparseDataMatrix: row indices must be strictly increasing per column");
                if (!std::isfinite(e.value) || e.value == 0.0)
                    throw std::invalid_argument("SparseDataMatrix: values must be finite and nonzero");
                prev = e.index;
                rows_[static_cast<size_t>(e.index)].push_back({c, e.value});
                ++nnz_;
            }
        }
    }

    static SparseDataMatrix from_dense(const DenseMatrix& X, double drop_tol = 0.0) {
        std::vector<std::vector<SparseEntry>> cols(static_cast<size_t>(X.cols()));
        for (index_t c = 0; c < X.cols(); ++c)
            for (index_t r = 0; r < X.rows(); ++r)
                if (std::abs(X(r, c)) > drop_tol) cols[static_cast<size_t>(c)].push_back({r, X(r, c)});
        return SparseDataMatrix(X.rows(), std::move(cols));
    }

    index_t n_rows() const { return d_; }
    index_t n_cols() const { return static_cast<index_t>(cols_.size()); }
    index_t nnz() const { return nnz_; }

    const std::vector<SparseEntry>& col(index_t c) const { return cols_[static_cast<size_t>(c)]; }
    // Row i as (column, value) pairs, columns increasing.
    const std::vector<SparseEntry>& row(index_t i) const { return rows_[static_cast<size_t>(i)]; }

    SparseVector col_vector(index_t c) const {
        SparseVector v;
        v.dim = d_;
        v.entries = cols_[static_cast<size_t>(c)];
        return v;
    }

    double col_squared_norm(index_t c) const {
        double s = 0;
        for (const auto& e : col(c)) s += e.value * e.value;
        return s;
    }

    double frobenius_squared() const {
        double s = 0;
        for (index_t c = 0; c < n_cols(); ++c) s += col_squared_norm(c);
        return s;
    }

    DenseMatrix to_dense() const {
        DenseMatrix X = DenseMatrix::Zero(d_, n_cols());
        for (index_t c = 0; c < n_cols(); ++c)
            for (const auto& e : col(c)) X(e.index, c) = e.value;
        return X;
    }

private:
    index_t d_ = 0;
    index_t nnz_ = 0;
    std::vector<std::vector<SparseEntry>> cols_;
    std::vector<std::vector<SparseEntry>> rows_;
};

}  // namespace ksembed
