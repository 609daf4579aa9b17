#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "ksembed/common.hpp"
#include "ksembed/linalg.hpp"
#include "ksembed/rng.hpp"
#include "ksembed/sparse_matrix.hpp"

namespace ksembed {

// Dimensions for the Q^q sketch at accuracy eps and failure probability
// delta: internal tree dimension (power of two, Hadamard nodes need it) and
// the final Gaussian compression target.
struct SketchDims {
    index_t s_int;
    index_t m_prime;
};

inline SketchDims sketch_dims(index_t q, double epsilon, double delta,
                              double internal_constant = 1.0) {
    if (q < 1 || !(epsilon > 0) || !(delta > 0) || delta >= 1)
        throw std::invalid_argument("sketch_dims: bad arguments");
    double l = std::log(1.0 / delta);
    double s = internal_constant * static_cast<double>(q) / (epsilon * epsilon) * l * l * l;
    double m = 4.0 / (epsilon * epsilon) * std::log(2.0 / delta);
    index_t s_int = next_pow2(std::max<index_t>(8, static_cast<index_t>(std::ceil(s))));
    index_t m_prime = std::max<index_t>(8, static_cast<index_t>(std::ceil(m)));
    if (m_prime > s_int) m_prime = s_int;
    return {s_int, m_prime};
}

namespace detail {

// In-place unnormalized Walsh-Hadamard transform, n a power of two.
inline void fwht(double* data, index_t n) {
    for (index_t h = 1; h < n; h <<= 1) {
        for (index_t i = 0; i < n; i += (h << 1)) {
            for (index_t j = i; j < i + h; ++j) {
                double y = data[j + h];
                data[j + h] = data[j] - y;
                data[j] += y;
            }
        }
    }
}

// Internal combining node: evaluates a norm-preserving sketch of u (x) v
// without materializing the Kronecker product. Each node carries its own
// sign diagonals and row-sampling permutation.
struct PairNode {
    Vector sign_left;             // +/-1, length s_int
    Vector sign_right;
    std::vector<std::int32_t> perm;
    int child[2] = {-1, -1};      // indices into nodes (internal) ...
    index_t leaf_child[2] = {-1, -1};  // ... or leaves; exactly one of each pair is set
};

}  // namespace detail

struct SketchTreeImpl {
    index_t input_dim = 0;
    index_t q = 0;
    index_t m_prime = 0;
    index_t s_int = 0;
    index_t osnap_sparsity = 0;
    double epsilon = 0;
    double delta = 0;
    RngStream stream;                       // base stream; leaves/nodes/G derive from it
    std::vector<detail::PairNode> nodes;    // postorder: children precede parents
    int root_node = -1;                     // -1 when q == 1
    std::vector<std::vector<int>> leaf_path;  // ancestors of each leaf, bottom-up
    DenseMatrix G;                          // m' x s_int, entries N(0, 1/m')
};

// The Q^q structure: q independent OSNAP leaves, a binary tree of pairwise
// combining sketches over them, and a final Gaussian compression. Parameters
// are immutable and shared between copies; the per-input caches (leaf and
// node outputs) are copied, so clones can evaluate different columns
// concurrently.
class SketchTree {
public:
    std::shared_ptr<const SketchTreeImpl> impl;
    std::vector<Vector> leaf_out;   // q cached leaf outputs, length s_int each
    std::vector<Vector> node_out;   // q-1 cached internal node outputs

    index_t input_dim() const { return impl->input_dim; }
    index_t degree() const { return impl->q; }
    index_t output_dim() const { return impl->m_prime; }
    index_t internal_dim() const { return impl->s_int; }

    // Leaf OSNAP: each input coordinate hits osnap_sparsity distinct rows
    // with +/- 1/sqrt(sparsity); regenerated per coordinate from the leaf
    // stream, so nothing is stored even for huge input dimension.
    void apply_leaf(index_t leaf, const SparseVector& x, Vector& out) const {
        const auto& im = *impl;
        out.setZero(im.s_int);
        const double scale = 1.0 / std::sqrt(static_cast<double>(im.osnap_sparsity));
        RngStream leaf_stream = im.stream.derive("osnap", static_cast<std::uint64_t>(leaf));
        for (const auto& e : x.entries) {
            RngStream cs = leaf_stream.derive(static_cast<std::uint64_t>(e.index));
            auto rows = cs.distinct(im.s_int, im.osnap_sparsity);
            std::uint64_t bits = cs.next_u64();
            for (index_t k = 0; k < im.osnap_sparsity; ++k) {
                double sign = (bits >> k) & 1 ? 1.0 : -1.0;
                out[rows[static_cast<size_t>(k)]] += sign * e.value * scale;
            }
        }
    }

    void eval_node(int node_idx) {
        const auto& nd = impl->nodes[static_cast<size_t>(node_idx)];
        const Vector& u = nd.child[0] >= 0 ? node_out[static_cast<size_t>(nd.child[0])]
                                           : leaf_out[static_cast<size_t>(nd.leaf_child[0])];
        const Vector& v = nd.child[1] >= 0 ? node_out[static_cast<size_t>(nd.child[1])]
                                           : leaf_out[static_cast<size_t>(nd.leaf_child[1])];
        const index_t s = impl->s_int;
        Vector a = nd.sign_left.cwiseProduct(u);
        Vector b = nd.sign_right.cwiseProduct(v);
        detail::fwht(a.data(), s);
        detail::fwht(b.data(), s);
        Vector& out = node_out[static_cast<size_t>(node_idx)];
        out.resize(s);
        const double scale = 1.0 / std::sqrt(static_cast<double>(s));
        for (index_t k = 0; k < s; ++k) {
            index_t p = nd.perm[static_cast<size_t>(k)];
            out[k] = a[p] * b[p] * scale;
        }
    }

    const Vector& root_value() const {
        return impl->root_node >= 0 ? node_out[static_cast<size_t>(impl->root_node)] : leaf_out[0];
    }
};

inline SketchTree build_sketch_tree(index_t d, index_t q, index_t m_prime, index_t s_int,
                                    index_t osnap_sparsity, RngStream stream,
                                    double epsilon = 0.0, double delta = 0.0) {
    if (d < 1 || q < 1 || m_prime < 1 || osnap_sparsity < 1)
        throw std::invalid_argument("build_sketch_tree: dimensions must be positive");
    s_int = next_pow2(std::max(s_int, m_prime));
    auto impl = std::make_shared<SketchTreeImpl>();
    impl->input_dim = d;
    impl->q = q;
    impl->m_prime = m_prime;
    impl->s_int = s_int;
    impl->osnap_sparsity = std::min(osnap_sparsity, s_int);
    impl->epsilon = epsilon;
    impl->delta = delta;
    impl->stream = stream;

    // Balanced binary tree over leaves [0, q), nodes in postorder.
    struct Ref { bool is_node; index_t idx; };
    std::vector<std::vector<int>> paths(static_cast<size_t>(q));
    auto build = [&](auto&& self, index_t lo, index_t hi) -> Ref {
        if (hi - lo == 1) return {false, lo};
        index_t mid = lo + (hi - lo + 1) / 2;
        Ref l = self(self, lo, mid);
        Ref r = self(self, mid, hi);
        detail::PairNode nd;
        RngStream ns = stream.derive("node", static_cast<std::uint64_t>(impl->nodes.size()));
        nd.sign_left.resize(s_int);
        nd.sign_right.resize(s_int);
        RngStream sl = ns.derive("sl"), sr = ns.derive("sr");
        for (index_t k = 0; k < s_int; ++k) nd.sign_left[k] = sl.uniform() < 0.5 ? -1.0 : 1.0;
        for (index_t k = 0; k < s_int; ++k) nd.sign_right[k] = sr.uniform() < 0.5 ? -1.0 : 1.0;
        nd.perm = ns.derive("perm").permutation(s_int);
        if (l.is_node) nd.child[0] = static_cast<int>(l.idx); else nd.leaf_child[0] = l.idx;
        if (r.is_node) nd.child[1] = static_cast<int>(r.idx); else nd.leaf_child[1] = r.idx;
        int id = static_cast<int>(impl->nodes.size());
        impl->nodes.push_back(std::move(nd));
        for (index_t leaf = lo; leaf < hi; ++leaf) paths[static_cast<size_t>(leaf)].push_back(id);
        return {true, static_cast<index_t>(id)};
    };
    Ref root = build(build, 0, q);
    impl->root_node = root.is_node ? static_cast<int>(root.idx) : -1;
    impl->leaf_path = std::move(paths);

    RngStream gs = stream.derive("G");
    impl->G.resize(m_prime, s_int);
    const double gscale = 1.0 / std::sqrt(static_cast<double>(m_prime));
    double* gp = impl->G.data();
    const index_t gcount = m_prime * s_int;
    for (index_t i = 0; i < gcount; ++i) gp[i] = gs.normal() * gscale;

    SketchTree tree;
    tree.impl = impl;
    tree.leaf_out.assign(static_cast<size_t>(q), Vector());
    tree.node_out.assign(static_cast<size_t>(q > 1 ? q - 1 : 0), Vector());
    return tree;
}

inline SketchTree build_sketch_tree(index_t d, index_t q, index_t m_prime, index_t s_int,
                                    index_t osnap_sparsity, RandomSeed seed) {
    return build_sketch_tree(d, q, m_prime, s_int, osnap_sparsity,
                             RngStream(seed).derive("sketch_tree"));
}

namespace detail {

// Recompute every leaf and node from the given per-leaf inputs; the cached
// state afterwards is exactly what a sequence of path updates would leave.
inline Vector sketch_full_pass(SketchTree& tree, const std::vector<const SparseVector*>& inputs) {
    const auto& im = *tree.impl;
    for (index_t l = 0; l < im.q; ++l) {
        if (inputs[static_cast<size_t>(l)]->dim != im.input_dim)
            throw std::invalid_argument("sketch: input dimension mismatch");
        tree.apply_leaf(l, *inputs[static_cast<size_t>(l)], tree.leaf_out[static_cast<size_t>(l)]);
    }
    for (int nidx = 0; nidx < static_cast<int>(im.nodes.size()); ++nidx) tree.eval_node(nidx);
    return im.G * tree.root_value();
}

}  // namespace detail

// Q^q applied to the q-fold self-tensoring x^{(x) q}; caches all node outputs.
inline Vector sketch_tensor_power(SketchTree& tree, const SparseVector& x) {
    std::vector<const SparseVector*> inputs(static_cast<size_t>(tree.impl->q), &x);
    return detail::sketch_full_pass(tree, inputs);
}

// Several tensor powers through one tree, with the final Gaussian
// compression batched into a single GEMM. Column k is Q^q x_k^{(x) q}.
inline DenseMatrix sketch_tensor_power_batch(SketchTree& tree,
                                             const std::vector<SparseVector>& xs) {
    const auto& im = *tree.impl;
    DenseMatrix roots(im.s_int, static_cast<index_t>(xs.size()));
    for (size_t k = 0; k < xs.size(); ++k) {
        if (xs[k].dim != im.input_dim)
            throw std::invalid_argument("sketch: input dimension mismatch");
        for (index_t l = 0; l < im.q; ++l)
            tree.apply_leaf(l, xs[k], tree.leaf_out[static_cast<size_t>(l)]);
        for (int nidx = 0; nidx < static_cast<int>(im.nodes.size()); ++nidx) tree.eval_node(nidx);
        roots.col(static_cast<index_t>(k)) = tree.root_value();
    }
    return im.G * roots;
}

// Q^q with explicit per-leaf inputs (the from-scratch reference for the
// incremental suffix evaluation).
inline Vector sketch_with_leaf_inputs(SketchTree& tree, const std::vector<SparseVector>& inputs) {
    if (static_cast<index_t>(inputs.size()) != tree.impl->q)
        throw std::invalid_argument("sketch_with_leaf_inputs: need exactly q inputs");
    std::vector<const SparseVector*> ptrs;
    ptrs.reserve(inputs.size());
    for (const auto& v : inputs) ptrs.push_back(&v);
    return detail::sketch_full_pass(tree, ptrs);
}

// Entry j is Q^q(x^{(x) q-j} (x) e_1^{(x) j}): one full pass, then q path
// updates that replace the rightmost remaining leaf input with e_1 and
// recompute only that leaf's ancestors.
inline std::vector<Vector> sketch_suffix_family(SketchTree& tree, const SparseVector& x) {
    const auto& im = *tree.impl;
    std::vector<Vector> family;
    family.reserve(static_cast<size_t>(im.q + 1));
    family.push_back(sketch_tensor_power(tree, x));
    SparseVector e1 = SparseVector::basis(im.input_dim, 0);
    for (index_t j = 1; j <= im.q; ++j) {
        index_t leaf = im.q - j;
        tree.apply_leaf(leaf, e1, tree.leaf_out[static_cast<size_t>(leaf)]);
        for (int nidx : im.leaf_path[static_cast<size_t>(leaf)]) tree.eval_node(nidx);
        family.push_back(im.G * tree.root_value());
    }
    return family;
}

// P_j = Q^q (X^{(x) q-j} (x) E_1^{(x) j}) for j = 0..q, columns independent.
// Columns are processed in blocks so the final Gaussian compression runs as
// one GEMM per block; blocks are distributed over workers, each with its own
// tree clone.
inline std::vector<DenseMatrix> sketch_matrix_family(const SketchTree& tree,
                                                     const SparseDataMatrix& X) {
    const auto& im = *tree.impl;
    if (X.n_rows() != im.input_dim)
        throw std::invalid_argument("sketch_matrix_family: dimension mismatch");
    const index_t n = X.n_cols();
    const index_t fam = im.q + 1;
    std::vector<DenseMatrix> P(static_cast<size_t>(fam));
    for (auto& M : P) M.resize(im.m_prime, n);

    const index_t block = std::max<index_t>(1, std::min<index_t>(64, n));
    const index_t n_blocks = (n + block - 1) / block;
    parallel_for(n_blocks, [&](index_t b_lo, index_t b_hi) {
        SketchTree local = tree;
        SparseVector e1 = SparseVector::basis(im.input_dim, 0);
        DenseMatrix roots(im.s_int, block * fam);
        for (index_t b = b_lo; b < b_hi; ++b) {
            index_t c_lo = b * block;
            index_t c_hi = std::min(n, c_lo + block);
            index_t width = c_hi - c_lo;
            for (index_t c = c_lo; c < c_hi; ++c) {
                SparseVector xc = X.col_vector(c);
                for (index_t l = 0; l < im.q; ++l)
                    local.apply_leaf(l, xc, local.leaf_out[static_cast<size_t>(l)]);
                for (int nidx = 0; nidx < static_cast<int>(im.nodes.size()); ++nidx)
                    local.eval_node(nidx);
                roots.col((c - c_lo) * fam) = local.root_value();
                for (index_t j = 1; j <= im.q; ++j) {
                    index_t leaf = im.q - j;
                    local.apply_leaf(leaf, e1, local.leaf_out[static_cast<size_t>(leaf)]);
                    for (int nidx : im.leaf_path[static_cast<size_t>(leaf)]) local.eval_node(nidx);
                    roots.col((c - c_lo) * fam + j) = local.root_value();
                }
            }
            DenseMatrix out = im.G * roots.leftCols(width * fam);
            for (index_t c = c_lo; c < c_hi; ++c)
                for (index_t j = 0; j < fam; ++j)
                    P[static_cast<size_t>(j)].col(c) = out.col((c - c_lo) * fam + j);
        }
    });
    return P;
}

// Explicit q-fold tensor power, row-major index convention: the flat offset
// of (i_1, ..., i_q) is sum_a i_a d^{q-a} (leftmost slowest). Oracle only.
inline Vector dense_tensor_power(const Vector& x, index_t q) {
    const index_t d = x.size();
    if (q < 1) throw std::invalid_argument("dense_tensor_power: q must be >= 1");
    double logsize = static_cast<double>(q) * std::log(std::max<double>(2.0, static_cast<double>(d)));
    if (d > 1 && logsize > std::log(1e7))
        throw resource_limit_error("dense_tensor_power: d^q exceeds the oracle guard");
    Vector out(1);
    out[0] = 1.0;
    for (index_t step = 0; step < q; ++step) {
        Vector next(out.size() * d);
        for (index_t i = 0; i < out.size(); ++i)
            for (index_t j = 0; j < d; ++j) next[i * d + j] = out[i] * x[j];
        out.swap(next);
    }
    return out;
}

// The tree as an explicit m' x d^q matrix, column (i_1,...,i_q) obtained by
// running the tree on basis inputs. Tiny-scale test oracle.
inline DenseMatrix materialize_sketch_matrix(SketchTree& tree) {
    const auto& im = *tree.impl;
    double logsize = static_cast<double>(im.q) *
                     std::log(std::max<double>(2.0, static_cast<double>(im.input_dim)));
    if (im.input_dim > 1 && logsize > std::log(65536.0))
        throw resource_limit_error("materialize_sketch_matrix: d^q exceeds the oracle guard");
    index_t total = 1;
    for (index_t a = 0; a < im.q; ++a) total *= im.input_dim;
    DenseMatrix Q(im.m_prime, total);
    std::vector<SparseVector> inputs(static_cast<size_t>(im.q));
    for (index_t flat = 0; flat < total; ++flat) {
        index_t rem = flat;
        for (index_t a = im.q - 1; a >= 0; --a) {
            inputs[static_cast<size_t>(a)] = SparseVector::basis(im.input_dim, rem % im.input_dim);
            rem /= im.input_dim;
        }
        Q.col(flat) = sketch_with_leaf_inputs(tree, inputs);
    }
    return Q;
}

}  // namespace ksembed
