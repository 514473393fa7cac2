#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "metagps/sparse.hpp"
#include "metagps/tensor.hpp"

namespace metagps {

struct ClassSplit {
    std::vector<std::int64_t> train, val, test;

    const std::vector<std::int64_t>& of(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw std::invalid_argument("unknown split: " + name);
    }
};

// Undirected attributed graph with a class-level train/val/test split.
// Immutable after construction; adjacency is built once up front.
class Graph {
public:
    Graph(std::int64_t n, std::vector<std::pair<std::int64_t, std::int64_t>> edges, Tensor features,
          std::vector<std::int64_t> labels, ClassSplit split)
        : n_(n), edges_(std::move(edges)), x_(std::move(features)), y_(std::move(labels)), split_(std::move(split)) {
        if (x_.shape.size() != 2 || x_.shape[0] != n_)
            throw std::invalid_argument("Graph: feature matrix must be n x d, got " + shape_str(x_.shape));
        if (static_cast<std::int64_t>(y_.size()) != n_)
            throw std::invalid_argument("Graph: expected " + std::to_string(n_) + " labels, got " +
                                        std::to_string(y_.size()));
        std::set<std::pair<std::int64_t, std::int64_t>> seen;
        for (auto& [u, v] : edges_) {
            if (u == v) throw std::invalid_argument("Graph: self-loop at node " + std::to_string(u));
            if (u > v) std::swap(u, v);
            if (u < 0 || v >= n_) throw std::invalid_argument("Graph: edge endpoint out of range");
            if (!seen.insert({u, v}).second)
                throw std::invalid_argument("Graph: duplicate edge (" + std::to_string(u) + "," + std::to_string(v) + ")");
        }
        std::sort(edges_.begin(), edges_.end());

        std::set<std::int64_t> in_split;
        auto collect = [&](const std::vector<std::int64_t>& cls, const char* name) {
            for (auto c : cls)
                if (!in_split.insert(c).second)
                    throw std::invalid_argument("Graph: class " + std::to_string(c) + " in more than one split (" +
                                                name + ")");
        };
        collect(split_.train, "train");
        collect(split_.val, "val");
        collect(split_.test, "test");
        for (std::int64_t v = 0; v < n_; ++v)
            if (!in_split.count(y_[static_cast<std::size_t>(v)]))
                throw std::invalid_argument("Graph: class " + std::to_string(y_[static_cast<std::size_t>(v)]) +
                                            " not in any split");
        adj_ = std::make_shared<SparseMatrix>(adjacency_from_edges(n_, edges_));
    }

    std::int64_t n() const { return n_; }
    const std::vector<std::pair<std::int64_t, std::int64_t>>& edges() const { return edges_; }
    const Tensor& features() const { return x_; }
    const std::vector<std::int64_t>& labels() const { return y_; }
    const ClassSplit& split() const { return split_; }
    std::shared_ptr<const SparseMatrix> adjacency() const { return adj_; }

    std::int64_t feature_dim() const { return x_.shape[1]; }

    std::vector<std::int64_t> nodes_of_class(std::int64_t c) const {
        std::vector<std::int64_t> out;
        for (std::int64_t v = 0; v < n_; ++v)
            if (y_[static_cast<std::size_t>(v)] == c) out.push_back(v);
        return out;
    }

private:
    std::int64_t n_;
    std::vector<std::pair<std::int64_t, std::int64_t>> edges_;
    Tensor x_;
    std::vector<std::int64_t> y_;
    ClassSplit split_;
    std::shared_ptr<const SparseMatrix> adj_;
};

namespace detail {

// rows of an n x n boolean matrix as packed bitsets
struct BitMatrix {
    std::int64_t n = 0;
    std::int64_t words = 0;
    std::vector<std::uint64_t> bits;

    explicit BitMatrix(std::int64_t n_) : n(n_), words((n_ + 63) / 64), bits(static_cast<std::size_t>(n_ * words), 0) {}

    void set(std::int64_t r, std::int64_t c) {
        bits[static_cast<std::size_t>(r * words + c / 64)] |= (1ULL << (c % 64));
    }
    bool get(std::int64_t r, std::int64_t c) const {
        return (bits[static_cast<std::size_t>(r * words + c / 64)] >> (c % 64)) & 1ULL;
    }
    std::uint64_t* row(std::int64_t r) { return bits.data() + r * words; }
    const std::uint64_t* row(std::int64_t r) const { return bits.data() + r * words; }
};

} // namespace detail

inline constexpr std::int64_t kMaxHop = 3;

// Exact i-hop adjacency without self-loops: walk-existence matrices minus all
// lower hops and the diagonal. Reduces to I(A - I > 0) and I(A^2 - A - I > 0)
// for hops 1 and 2.
inline SparseMatrix hop_adjacency(const SparseMatrix& a, std::int64_t hop) {
    if (hop < 1 || hop > kMaxHop)
        throw std::invalid_argument("hop_adjacency: hop must be in [1," + std::to_string(kMaxHop) + "], got " +
                                    std::to_string(hop));
    if (a.n_rows() != a.n_cols() || !a.is_symmetric() || !a.has_zero_diagonal())
        throw std::invalid_argument("hop_adjacency: input must be symmetric with zero diagonal");
    const std::int64_t n = a.n_rows();

    detail::BitMatrix adj(n);
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t k = a.row_begin(r); k < a.row_end(r); ++k) adj.set(r, a.col(k));

    detail::BitMatrix walks = adj;     // walks of length exactly i (as existence)
    detail::BitMatrix covered(n);      // union of lower hops plus diagonal
    for (std::int64_t r = 0; r < n; ++r) covered.set(r, r);

    for (std::int64_t i = 1; i < hop; ++i) {
        // covered |= hop_i = walks & ~covered
        for (std::size_t w = 0; w < covered.bits.size(); ++w) covered.bits[w] |= walks.bits[w];
        // walks_{i+1} = boolean A * walks_i: row r = OR of walks rows over neighbors of r
        detail::BitMatrix next(n);
        for (std::int64_t r = 0; r < n; ++r) {
            std::uint64_t* dst = next.row(r);
            for (std::int64_t k = a.row_begin(r); k < a.row_end(r); ++k) {
                const std::uint64_t* src = walks.row(a.col(k));
                for (std::int64_t w = 0; w < next.words; ++w) dst[w] |= src[w];
            }
        }
        walks = std::move(next);
    }

    std::vector<std::tuple<std::int64_t, std::int64_t, double>> coo;
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t c = 0; c < n; ++c)
            if (walks.get(r, c) && !covered.get(r, c)) coo.emplace_back(r, c, 1.0);
    return SparseMatrix(n, n, std::move(coo));
}

// D^{-1/2} B D^{-1/2} for a binary symmetric zero-diagonal B; rows of
// degree-0 nodes stay zero.
inline SparseMatrix sym_normalize(const SparseMatrix& b) {
    if (b.n_rows() != b.n_cols() || !b.is_symmetric() || !b.has_zero_diagonal())
        throw std::invalid_argument("sym_normalize: input must be symmetric with zero diagonal");
    const std::int64_t n = b.n_rows();
    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n), 0.0);
    for (std::int64_t r = 0; r < n; ++r) {
        std::int64_t deg = b.degree(r);
        if (deg > 0) inv_sqrt_deg[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(static_cast<double>(deg));
    }
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> coo;
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t k = b.row_begin(r); k < b.row_end(r); ++k)
            coo.emplace_back(r, b.col(k),
                             b.val(k) * inv_sqrt_deg[static_cast<std::size_t>(r)] *
                                 inv_sqrt_deg[static_cast<std::size_t>(b.col(k))]);
    return SparseMatrix(n, n, std::move(coo));
}

// SGC propagation matrix: D_hat^{-1/2} (A + I) D_hat^{-1/2}, self-loops included
inline SparseMatrix sgc_normalized_adjacency(const SparseMatrix& a) {
    if (a.n_rows() != a.n_cols() || !a.is_symmetric() || !a.has_zero_diagonal())
        throw std::invalid_argument("sgc_normalized_adjacency: input must be symmetric with zero diagonal");
    const std::int64_t n = a.n_rows();
    std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
    for (std::int64_t r = 0; r < n; ++r)
        inv_sqrt_deg[static_cast<std::size_t>(r)] = 1.0 / std::sqrt(static_cast<double>(a.degree(r) + 1));
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> coo;
    for (std::int64_t r = 0; r < n; ++r) {
        coo.emplace_back(r, r, inv_sqrt_deg[static_cast<std::size_t>(r)] * inv_sqrt_deg[static_cast<std::size_t>(r)]);
        for (std::int64_t k = a.row_begin(r); k < a.row_end(r); ++k)
            coo.emplace_back(r, a.col(k),
                             a.val(k) * inv_sqrt_deg[static_cast<std::size_t>(r)] *
                                 inv_sqrt_deg[static_cast<std::size_t>(a.col(k))]);
    }
    return SparseMatrix(n, n, std::move(coo));
}

// mean over nodes of the same-label neighbor fraction; isolated nodes count 0
inline double node_homophily(const Graph& g) {
    if (g.n() == 0) throw std::invalid_argument("node_homophily: empty graph");
    const auto& a = *g.adjacency();
    const auto& y = g.labels();
    double acc = 0.0;
    for (std::int64_t v = 0; v < g.n(); ++v) {
        const std::int64_t deg = a.degree(v);
        if (deg == 0) continue;
        std::int64_t same = 0;
        for (std::int64_t k = a.row_begin(v); k < a.row_end(v); ++k)
            if (y[static_cast<std::size_t>(a.col(k))] == y[static_cast<std::size_t>(v)]) ++same;
        acc += static_cast<double>(same) / static_cast<double>(deg);
    }
    return acc / static_cast<double>(g.n());
}

} // namespace metagps
