#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "metagps/graph.hpp"
#include "metagps/rng.hpp"

namespace metagps {

// One N-way K-shot task. support/query hold (node, label) pairs; pool holds
// split nodes outside support+query, available to self-training.
struct Episode {
    std::vector<std::int64_t> classes;
    std::vector<std::pair<std::int64_t, std::int64_t>> support;
    std::vector<std::pair<std::int64_t, std::int64_t>> query;
    std::vector<std::int64_t> pool;

    std::int64_t n_way() const { return static_cast<std::int64_t>(classes.size()); }

    std::int64_t class_index(std::int64_t label) const {
        for (std::size_t i = 0; i < classes.size(); ++i)
            if (classes[i] == label) return static_cast<std::int64_t>(i);
        throw std::out_of_range("Episode: label " + std::to_string(label) + " not in task classes");
    }

    bool operator==(const Episode& other) const = default;
};

struct EpisodeSpec {
    std::string split = "train";
    std::int64_t n_way = 5;
    std::int64_t k_shot = 5;
    std::int64_t m_query = 10;
    std::int64_t pool_cap = 2048;
};

inline Episode sample_episode(const Graph& g, const EpisodeSpec& spec, std::uint64_t seed) {
    const auto& split_classes = g.split().of(spec.split);
    if (static_cast<std::int64_t>(split_classes.size()) < spec.n_way)
        throw std::invalid_argument("sample_episode: split '" + spec.split + "' has " +
                                    std::to_string(split_classes.size()) + " classes, need " +
                                    std::to_string(spec.n_way));
    Rng rng(seed);
    Episode ep;
    ep.classes = rng.sample_without_replacement(split_classes, static_cast<std::size_t>(spec.n_way));

    std::set<std::int64_t> taken;
    for (auto c : ep.classes) {
        auto members = g.nodes_of_class(c);
        if (static_cast<std::int64_t>(members.size()) < spec.k_shot + spec.m_query)
            throw std::invalid_argument("sample_episode: class " + std::to_string(c) + " has " +
                                        std::to_string(members.size()) + " nodes, need " +
                                        std::to_string(spec.k_shot + spec.m_query));
        auto drawn = rng.sample_without_replacement(members, static_cast<std::size_t>(spec.k_shot + spec.m_query));
        for (std::int64_t i = 0; i < spec.k_shot; ++i) ep.support.emplace_back(drawn[static_cast<std::size_t>(i)], c);
        for (std::int64_t i = spec.k_shot; i < spec.k_shot + spec.m_query; ++i)
            ep.query.emplace_back(drawn[static_cast<std::size_t>(i)], c);
        taken.insert(drawn.begin(), drawn.end());
    }

    // pool: split-labeled nodes outside support+query, capped
    std::vector<std::int64_t> candidates;
    for (auto c : split_classes)
        for (auto v : g.nodes_of_class(c))
            if (!taken.count(v)) candidates.push_back(v);
    std::sort(candidates.begin(), candidates.end());
    if (spec.pool_cap > 0 && !candidates.empty()) {
        std::size_t take = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(spec.pool_cap));
        ep.pool = rng.sample_without_replacement(candidates, take);
        std::sort(ep.pool.begin(), ep.pool.end());
    }
    return ep;
}

// Replace floor(ratio*K) support slots per class with nodes from other
// classes of the same split, keeping the original (now wrong) label.
inline Episode inject_noise(const Episode& ep, const Graph& g, const std::string& split, double ratio,
                            std::uint64_t seed) {
    if (ratio < 0.0 || ratio >= 1.0) throw std::invalid_argument("inject_noise: ratio must be in [0,1)");
    const std::int64_t k_shot = static_cast<std::int64_t>(ep.support.size()) / ep.n_way();
    const std::int64_t per_class = static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(k_shot)));
    if (per_class == 0) return ep;

    Rng rng(seed);
    Episode noisy = ep;

    std::set<std::int64_t> excluded;
    for (auto [v, _] : ep.support) excluded.insert(v);
    for (auto [v, _] : ep.query) excluded.insert(v);

    for (auto c : ep.classes) {
        // slots of this class within the support list
        std::vector<std::size_t> slots;
        for (std::size_t i = 0; i < ep.support.size(); ++i)
            if (ep.support[i].second == c) slots.push_back(i);
        auto corrupt = rng.sample_without_replacement(slots, static_cast<std::size_t>(per_class));
        std::sort(corrupt.begin(), corrupt.end());

        std::vector<std::int64_t> donors;
        for (auto dc : g.split().of(split)) {
            if (dc == c) continue;
            for (auto v : g.nodes_of_class(dc))
                if (!excluded.count(v)) donors.push_back(v);
        }
        std::sort(donors.begin(), donors.end());
        if (donors.size() < static_cast<std::size_t>(per_class))
            throw std::invalid_argument("inject_noise: no donor nodes available for class " + std::to_string(c));
        auto picked = rng.sample_without_replacement(donors, static_cast<std::size_t>(per_class));
        for (std::size_t i = 0; i < picked.size(); ++i) {
            noisy.support[corrupt[i]].first = picked[i];
            excluded.insert(picked[i]); // donors must stay distinct across classes
        }
    }

    // keep pool disjoint from the new support set
    std::set<std::int64_t> support_now;
    for (auto [v, _] : noisy.support) support_now.insert(v);
    std::erase_if(noisy.pool, [&](std::int64_t v) { return support_now.count(v) > 0; });
    return noisy;
}

// Deterministic stream of episode batches; distinct episodes get distinct
// derived sub-seeds, so the stream is reproducible and random-access.
class EpisodeStream {
public:
    EpisodeStream(const Graph& g, EpisodeSpec spec, std::int64_t batch_size, std::uint64_t seed)
        : g_(&g), spec_(std::move(spec)), batch_size_(batch_size), seed_(seed) {
        if (batch_size_ < 1) throw std::invalid_argument("EpisodeStream: batch_size must be >= 1");
    }

    std::vector<Episode> batch(std::int64_t index) const {
        std::vector<Episode> out;
        out.reserve(static_cast<std::size_t>(batch_size_));
        for (std::int64_t i = 0; i < batch_size_; ++i)
            out.push_back(sample_episode(*g_, spec_,
                                         sub_seed(seed_, static_cast<std::uint64_t>(index),
                                                  static_cast<std::uint64_t>(i) + 1)));
        return out;
    }

    std::vector<Episode> next() { return batch(cursor_++); }

    std::int64_t batch_size() const { return batch_size_; }

private:
    const Graph* g_;
    EpisodeSpec spec_;
    std::int64_t batch_size_;
    std::uint64_t seed_;
    std::int64_t cursor_ = 0;
};

} // namespace metagps
