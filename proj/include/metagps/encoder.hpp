#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "metagps/autodiff.hpp"
#include "metagps/graph.hpp"
#include "metagps/rng.hpp"

namespace metagps {

// hop-normalized adjacencies used by the concatenating encoder
inline std::vector<std::shared_ptr<const SparseMatrix>> hop_operators(const Graph& g, std::int64_t hops) {
    std::vector<std::shared_ptr<const SparseMatrix>> out;
    out.reserve(static_cast<std::size_t>(hops));
    for (std::int64_t i = 1; i <= hops; ++i)
        out.push_back(std::make_shared<SparseMatrix>(sym_normalize(hop_adjacency(*g.adjacency(), i))));
    return out;
}

inline Tensor xavier_uniform(Shape shape, Rng& rng) {
    Tensor t(std::move(shape));
    const double fan_in = static_cast<double>(t.shape[0]);
    const double fan_out = static_cast<double>(t.shape.size() > 1 ? t.shape[1] : 1);
    const double a = std::sqrt(6.0 / (fan_in + fan_out));
    for (auto& v : t.values) v = rng.uniform(-a, a);
    return t;
}

// F = relu(X Wf); H_0 = F; H_i = tilde_A_i F; Z = relu([H_0 || ... || H_l] Wr).
// `rows` restricts the output (and the final matmul) to the given node rows.
inline ad::Var encode(const ad::Var& x, const std::vector<std::shared_ptr<const SparseMatrix>>& hop_ops,
                      const ad::Var& w_f, const ad::Var& w_r,
                      const std::vector<std::int64_t>* rows = nullptr) {
    using namespace ad;
    if (x.shape()[1] != w_f.shape()[0])
        throw std::invalid_argument("encode: feature dim " + shape_str(x.shape()) + " does not match Wf " +
                                    shape_str(w_f.shape()));
    Var f = relu(matmul(x, w_f));
    std::vector<Var> blocks{f};
    for (const auto& op : hop_ops) blocks.push_back(spmm(op, f));
    Var r = concat_cols(std::span<const Var>(blocks));
    if (static_cast<std::int64_t>(blocks.size()) * f.shape()[1] != w_r.shape()[0])
        throw std::invalid_argument("encode: concatenated width does not match Wr " + shape_str(w_r.shape()));
    if (rows) r = gather_rows(r, *rows);
    return relu(matmul(r, w_r));
}

// SGC: Z = hat_A^l X W, propagated iteratively (the power is never formed)
inline ad::Var encode_sgc(const ad::Var& x, const std::shared_ptr<const SparseMatrix>& a_hat, std::int64_t power,
                          const ad::Var& w, const std::vector<std::int64_t>* rows = nullptr) {
    using namespace ad;
    if (power < 0) throw std::invalid_argument("encode_sgc: negative propagation power");
    Var h = x;
    for (std::int64_t i = 0; i < power; ++i) h = spmm(a_hat, h);
    if (rows) h = gather_rows(h, *rows);
    return matmul(h, w);
}

} // namespace metagps
