#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <vector>

#include "metagps/tensor.hpp"

namespace metagps {

inline double accuracy(const std::vector<std::int64_t>& preds, const std::vector<std::int64_t>& labels) {
    if (preds.size() != labels.size() || preds.empty())
        throw std::invalid_argument("accuracy: size mismatch or empty input");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++hit;
    return static_cast<double>(hit) / static_cast<double>(preds.size());
}

// unweighted mean of per-class F1; undefined precision/recall and classes
// absent from both sides contribute 0
inline double macro_f1(const std::vector<std::int64_t>& preds, const std::vector<std::int64_t>& labels,
                       const std::vector<std::int64_t>& classes) {
    if (preds.size() != labels.size()) throw std::invalid_argument("macro_f1: size mismatch");
    if (classes.empty()) throw std::invalid_argument("macro_f1: empty class list");
    double acc = 0.0;
    for (auto c : classes) {
        std::int64_t tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            if (preds[i] == c && labels[i] == c) ++tp;
            if (preds[i] == c && labels[i] != c) ++fp;
            if (preds[i] != c && labels[i] == c) ++fn;
        }
        if (tp > 0) acc += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    }
    return acc / static_cast<double>(classes.size());
}

namespace detail {

inline double euclid(const Tensor& x, std::int64_t i, std::int64_t j) {
    double s = 0.0;
    for (std::int64_t k = 0; k < x.shape[1]; ++k) {
        double d = x.at(i, k) - x.at(j, k);
        s += d * d;
    }
    return std::sqrt(s);
}

inline std::map<std::int64_t, std::vector<std::int64_t>> group_by_label(const std::vector<std::int64_t>& labels) {
    std::map<std::int64_t, std::vector<std::int64_t>> groups;
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<std::int64_t>(i));
    return groups;
}

} // namespace detail

// mean over points of (b - a) / max(a, b); singleton-class points contribute 0
inline double silhouette(const Tensor& x, const std::vector<std::int64_t>& labels) {
    if (x.shape.size() != 2 || static_cast<std::size_t>(x.shape[0]) != labels.size())
        throw std::invalid_argument("silhouette: embeddings/labels mismatch");
    auto groups = detail::group_by_label(labels);
    if (groups.size() < 2) throw std::invalid_argument("silhouette: needs at least 2 classes");
    const std::int64_t n = x.shape[0];
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const auto& own = groups[labels[static_cast<std::size_t>(i)]];
        if (own.size() == 1) continue; // sc_i = 0
        double a = 0.0;
        for (auto j : own)
            if (j != i) a += detail::euclid(x, i, j);
        a /= static_cast<double>(own.size() - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [c, members] : groups) {
            if (c == labels[static_cast<std::size_t>(i)]) continue;
            double m = 0.0;
            for (auto j : members) m += detail::euclid(x, i, j);
            b = std::min(b, m / static_cast<double>(members.size()));
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

// mean over clusters of the worst (s_i + s_j) / d_ij ratio
inline double davies_bouldin(const Tensor& x, const std::vector<std::int64_t>& labels) {
    if (x.shape.size() != 2 || static_cast<std::size_t>(x.shape[0]) != labels.size())
        throw std::invalid_argument("davies_bouldin: embeddings/labels mismatch");
    auto groups = detail::group_by_label(labels);
    if (groups.size() < 2) throw std::invalid_argument("davies_bouldin: needs at least 2 classes");
    const std::int64_t d = x.shape[1];

    std::vector<std::vector<double>> centroids;
    std::vector<double> scatter;
    for (const auto& [c, members] : groups) {
        std::vector<double> mu(static_cast<std::size_t>(d), 0.0);
        for (auto i : members)
            for (std::int64_t k = 0; k < d; ++k) mu[static_cast<std::size_t>(k)] += x.at(i, k);
        for (auto& v : mu) v /= static_cast<double>(members.size());
        double s = 0.0;
        for (auto i : members) {
            double dist = 0.0;
            for (std::int64_t k = 0; k < d; ++k) {
                double diff = x.at(i, k) - mu[static_cast<std::size_t>(k)];
                dist += diff * diff;
            }
            s += std::sqrt(dist);
        }
        centroids.push_back(std::move(mu));
        scatter.push_back(s / static_cast<double>(members.size()));
    }

    const std::size_t m = centroids.size();
    double db = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double worst = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
            if (i == j) continue;
            double dij = 0.0;
            for (std::size_t k = 0; k < centroids[i].size(); ++k) {
                double diff = centroids[i][k] - centroids[j][k];
                dij += diff * diff;
            }
            dij = std::sqrt(dij);
            if (dij == 0.0)
                throw std::domain_error("davies_bouldin: coincident centroids of two nonempty classes");
            worst = std::max(worst, (scatter[i] + scatter[j]) / dij);
        }
        db += worst;
    }
    return db / static_cast<double>(m);
}

} // namespace metagps
