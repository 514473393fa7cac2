#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "metagps/graph.hpp"
#include "metagps/rng.hpp"

namespace metagps {

struct SbmSpec {
    std::int64_t n_classes = 10;
    std::int64_t nodes_per_class = 200;
    double p_in = 0.02;
    double p_out = 0.002;
    std::int64_t feature_dim = 10;
    double feature_noise = 1.0;
    // class-level split sizes; remaining classes go to test
    std::int64_t train_classes = -1; // -1: 60/20/20 by class id
    std::int64_t val_classes = -1;
};

// Stochastic block model with orthogonal-axis class means. Node v of class c
// gets feature e_c + noise * N(0, I). Deterministic under seed.
inline Graph generate_sbm(const SbmSpec& spec, std::uint64_t seed) {
    if (spec.n_classes < 1 || spec.nodes_per_class < 1)
        throw std::invalid_argument("generate_sbm: need at least one class and one node per class");
    if (spec.p_in < 0 || spec.p_in > 1 || spec.p_out < 0 || spec.p_out > 1)
        throw std::invalid_argument("generate_sbm: edge probabilities must lie in [0,1]");
    if (spec.feature_dim < spec.n_classes)
        throw std::invalid_argument("generate_sbm: feature_dim " + std::to_string(spec.feature_dim) +
                                    " < n_classes " + std::to_string(spec.n_classes) +
                                    " (orthogonal class means impossible)");

    const std::int64_t n = spec.n_classes * spec.nodes_per_class;
    std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
    for (std::int64_t v = 0; v < n; ++v) labels[static_cast<std::size_t>(v)] = v / spec.nodes_per_class;

    Rng edge_rng(sub_seed(seed, 1));
    std::vector<std::pair<std::int64_t, std::int64_t>> edges;
    for (std::int64_t u = 0; u < n; ++u)
        for (std::int64_t v = u + 1; v < n; ++v) {
            double p = labels[static_cast<std::size_t>(u)] == labels[static_cast<std::size_t>(v)] ? spec.p_in
                                                                                                  : spec.p_out;
            if (edge_rng.bernoulli(p)) edges.emplace_back(u, v);
        }

    Rng feat_rng(sub_seed(seed, 2));
    Tensor x({n, spec.feature_dim});
    for (std::int64_t v = 0; v < n; ++v) {
        x.at(v, labels[static_cast<std::size_t>(v)]) = 1.0;
        for (std::int64_t j = 0; j < spec.feature_dim; ++j) x.at(v, j) += spec.feature_noise * feat_rng.normal();
    }

    std::int64_t tr = spec.train_classes, va = spec.val_classes;
    if (tr < 0 || va < 0) {
        tr = std::max<std::int64_t>(1, (spec.n_classes * 6) / 10);
        va = std::max<std::int64_t>(spec.n_classes > 2 ? 1 : 0, (spec.n_classes * 2) / 10);
        if (tr + va >= spec.n_classes) tr = spec.n_classes - va - 1;
    }
    if (tr < 1 || tr + va >= spec.n_classes + 1 || spec.n_classes - tr - va < 0)
        throw std::invalid_argument("generate_sbm: bad class split");
    ClassSplit split;
    for (std::int64_t c = 0; c < spec.n_classes; ++c) {
        if (c < tr)
            split.train.push_back(c);
        else if (c < tr + va)
            split.val.push_back(c);
        else
            split.test.push_back(c);
    }
    return Graph(n, std::move(edges), std::move(x), std::move(labels), std::move(split));
}

} // namespace metagps
