#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "metagps/graph.hpp"

namespace metagps {

namespace detail {

[[noreturn]] inline void io_fail(const std::filesystem::path& file, std::size_t line, const std::string& what) {
    throw std::runtime_error(file.string() + ":" + std::to_string(line) + ": " + what);
}

inline std::int64_t parse_int(const std::string& s, const std::filesystem::path& file, std::size_t line) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) io_fail(file, line, "expected integer, got '" + s + "'");
    return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::ifstream open_or_fail(const std::filesystem::path& p) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("missing file: " + p.string());
    return f;
}

// shortest decimal string that round-trips the double exactly
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline void save_graph(const Graph& g, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream f(dir / "edges.csv");
        for (auto [u, v] : g.edges()) f << u << "," << v << "\n";
    }
    {
        std::ofstream f(dir / "features.csv");
        const Tensor& x = g.features();
        for (std::int64_t i = 0; i < x.shape[0]; ++i) {
            for (std::int64_t j = 0; j < x.shape[1]; ++j) f << (j ? "," : "") << detail::format_double(x.at(i, j));
            f << "\n";
        }
    }
    {
        std::ofstream f(dir / "labels.csv");
        for (auto y : g.labels()) f << y << "\n";
    }
    {
        nlohmann::json j;
        j["train"] = g.split().train;
        j["val"] = g.split().val;
        j["test"] = g.split().test;
        std::ofstream f(dir / "splits.json");
        f << j.dump(2) << "\n";
    }
}

inline Graph load_graph(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    const fs::path edges_path = dir / "edges.csv";
    const fs::path feats_path = dir / "features.csv";
    const fs::path labels_path = dir / "labels.csv";
    const fs::path splits_path = dir / "splits.json";

    std::vector<std::vector<double>> feat_rows;
    {
        auto f = detail::open_or_fail(feats_path);
        std::string line;
        std::size_t ln = 0;
        while (std::getline(f, line)) {
            ++ln;
            if (line.empty()) continue;
            std::vector<double> row;
            for (const auto& tok : detail::split_csv(line)) {
                char* end = nullptr;
                double v = std::strtod(tok.c_str(), &end);
                if (end != tok.c_str() + tok.size()) detail::io_fail(feats_path, ln, "bad decimal '" + tok + "'");
                row.push_back(v);
            }
            if (!feat_rows.empty() && row.size() != feat_rows.front().size())
                detail::io_fail(feats_path, ln, "inconsistent column count");
            feat_rows.push_back(std::move(row));
        }
        if (feat_rows.empty()) detail::io_fail(feats_path, 0, "no feature rows");
    }
    const std::int64_t n = static_cast<std::int64_t>(feat_rows.size());
    const std::int64_t d = static_cast<std::int64_t>(feat_rows.front().size());

    std::vector<std::pair<std::int64_t, std::int64_t>> edges;
    {
        auto f = detail::open_or_fail(edges_path);
        std::string line;
        std::size_t ln = 0;
        std::set<std::pair<std::int64_t, std::int64_t>> seen;
        while (std::getline(f, line)) {
            ++ln;
            if (line.empty()) continue;
            auto toks = detail::split_csv(line);
            if (toks.size() != 2) detail::io_fail(edges_path, ln, "expected 'u,v'");
            std::int64_t u = detail::parse_int(toks[0], edges_path, ln);
            std::int64_t v = detail::parse_int(toks[1], edges_path, ln);
            if (u == v) detail::io_fail(edges_path, ln, "self-loop at line " + std::to_string(ln));
            if (u > v) detail::io_fail(edges_path, ln, "edges require u < v");
            if (u < 0 || v >= n)
                detail::io_fail(edges_path, ln,
                                "node id out of range (graph has " + std::to_string(n) + " feature rows)");
            if (!seen.insert({u, v}).second) detail::io_fail(edges_path, ln, "duplicate edge");
            edges.emplace_back(u, v);
        }
    }

    std::vector<std::int64_t> labels;
    {
        auto f = detail::open_or_fail(labels_path);
        std::string line;
        std::size_t ln = 0;
        while (std::getline(f, line)) {
            ++ln;
            if (line.empty()) continue;
            labels.push_back(detail::parse_int(line, labels_path, ln));
        }
        if (static_cast<std::int64_t>(labels.size()) != n)
            detail::io_fail(labels_path, labels.size(),
                            "expected " + std::to_string(n) + " labels, got " + std::to_string(labels.size()));
    }

    ClassSplit split;
    {
        auto f = detail::open_or_fail(splits_path);
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::exception& e) {
            detail::io_fail(splits_path, 0, e.what());
        }
        for (const char* key : {"train", "val", "test"})
            if (!j.contains(key)) detail::io_fail(splits_path, 0, std::string("missing key '") + key + "'");
        split.train = j["train"].get<std::vector<std::int64_t>>();
        split.val = j["val"].get<std::vector<std::int64_t>>();
        split.test = j["test"].get<std::vector<std::int64_t>>();
    }

    Tensor x({n, d});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < d; ++j) x.at(i, j) = feat_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];

    // label-outside-splits and duplicate checks also live in the Graph ctor;
    // rephrase its errors with the offending file for the CLI contract
    try {
        return Graph(n, std::move(edges), std::move(x), std::move(labels), std::move(split));
    } catch (const std::invalid_argument& e) {
        throw std::runtime_error(dir.string() + ": " + e.what());
    }
}

} // namespace metagps
