#include <catch2/catch_amalgamated.hpp>

#include "metagps/metrics.hpp"
#include "metagps/rng.hpp"

using namespace metagps;

namespace {

// oracle: macro-F1 from an explicitly built confusion matrix
double macro_f1_oracle(const std::vector<std::int64_t>& preds, const std::vector<std::int64_t>& labels,
                       const std::vector<std::int64_t>& classes) {
    double total = 0.0;
    for (auto c : classes) {
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            tp += preds[i] == c && labels[i] == c;
            fp += preds[i] == c && labels[i] != c;
            fn += preds[i] != c && labels[i] == c;
        }
        double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        total += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    }
    return total / static_cast<double>(classes.size());
}

// oracle: silhouette from the full pairwise distance matrix
double silhouette_oracle(const Tensor& x, const std::vector<std::int64_t>& labels) {
    const std::int64_t n = x.shape[0];
    std::vector<std::vector<double>> dist(n, std::vector<double>(n, 0.0));
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::int64_t k = 0; k < x.shape[1]; ++k) {
                double d = x.at(i, k) - x.at(j, k);
                s += d * d;
            }
            dist[i][j] = std::sqrt(s);
        }
    double total = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t own = 0;
        for (std::int64_t j = 0; j < n; ++j) own += labels[j] == labels[i];
        if (own == 1) continue;
        double a = 0;
        for (std::int64_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) a += dist[i][j];
        a /= static_cast<double>(own - 1);
        double b = std::numeric_limits<double>::infinity();
        std::set<std::int64_t> other(labels.begin(), labels.end());
        for (auto c : other) {
            if (c == labels[i]) continue;
            double m = 0;
            std::int64_t cnt = 0;
            for (std::int64_t j = 0; j < n; ++j)
                if (labels[j] == c) {
                    m += dist[i][j];
                    ++cnt;
                }
            b = std::min(b, m / cnt);
        }
        total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

} // namespace

TEST_CASE("macro F1 worked examples") {
    SECTION("perfect predictions") {
        CHECK(macro_f1({0, 1, 2}, {0, 1, 2}, {0, 1, 2}) == 1.0);
    }
    SECTION("symmetric binary confusion") {
        // class 0: TP=1 FP=1 FN=1; class 1 symmetric -> per-class F1 = 0.5
        std::vector<std::int64_t> preds = {0, 0, 1, 1};
        std::vector<std::int64_t> labels = {0, 1, 0, 1};
        CHECK(macro_f1(preds, labels, {0, 1}) == Catch::Approx(0.5).margin(1e-15));
    }
    SECTION("class absent from preds and labels contributes zero") {
        std::vector<std::int64_t> preds = {0, 1};
        std::vector<std::int64_t> labels = {0, 1};
        CHECK(macro_f1(preds, labels, {0, 1, 2}) == Catch::Approx(2.0 / 3.0).margin(1e-15));
    }
}

TEST_CASE("accuracy and macro F1 match the confusion-matrix oracle exhaustively") {
    // all prediction vectors of length <= 6 over 3 classes against two label
    // patterns
    std::vector<std::vector<std::int64_t>> label_sets = {{0, 1, 2, 0, 1, 2}, {0, 0, 1, 1, 2, 2}};
    for (const auto& labels : label_sets) {
        for (std::size_t len = 1; len <= 6; ++len) {
            std::vector<std::int64_t> lab(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(len));
            std::size_t total = 1;
            for (std::size_t i = 0; i < len; ++i) total *= 3;
            for (std::size_t code = 0; code < total; ++code) {
                std::vector<std::int64_t> preds(len);
                std::size_t c = code;
                for (std::size_t i = 0; i < len; ++i) {
                    preds[i] = static_cast<std::int64_t>(c % 3);
                    c /= 3;
                }
                double got = macro_f1(preds, lab, {0, 1, 2});
                double expect = macro_f1_oracle(preds, lab, {0, 1, 2});
                REQUIRE(got == Catch::Approx(expect).margin(1e-12));
                std::size_t hits = 0;
                for (std::size_t i = 0; i < len; ++i) hits += preds[i] == lab[i];
                REQUIRE(accuracy(preds, lab) ==
                        Catch::Approx(static_cast<double>(hits) / static_cast<double>(len)).margin(1e-15));
            }
        }
    }
}

TEST_CASE("silhouette worked examples") {
    SECTION("two tight far-apart clusters") {
        Tensor x({6, 2});
        Rng rng(4);
        for (int i = 0; i < 3; ++i) {
            x.at(i, 0) = 0.01 * rng.normal();
            x.at(i, 1) = 0.01 * rng.normal();
            x.at(i + 3, 0) = 50.0 + 0.01 * rng.normal();
            x.at(i + 3, 1) = 0.01 * rng.normal();
        }
        CHECK(silhouette(x, {0, 0, 0, 1, 1, 1}) >= 0.9);
    }
    SECTION("interleaved identical clusters score non-positive") {
        Tensor x({6, 1}, {0, 1, 2, 0, 1, 2});
        CHECK(silhouette(x, {0, 0, 0, 1, 1, 1}) <= 0.0);
    }
    SECTION("points on a line, hand arithmetic") {
        Tensor x({4, 1}, {0.0, 1.0, 10.0, 11.0});
        std::vector<std::int64_t> labels = {0, 0, 1, 1};
        // at x=0: a=1, b=10.5; at x=1: a=1, b=9.5; symmetric on the right
        double expect = ((10.5 - 1) / 10.5 + (9.5 - 1) / 9.5) / 2.0;
        CHECK(silhouette(x, labels) == Catch::Approx(expect).margin(1e-12));
    }
    SECTION("single class is rejected") {
        Tensor x({2, 1}, {0, 1});
        CHECK_THROWS_AS(silhouette(x, {0, 0}), std::invalid_argument);
    }
    SECTION("singleton-class points contribute zero") {
        Tensor x({3, 1}, {0.0, 1.0, 5.0});
        std::vector<std::int64_t> labels = {0, 0, 1};
        // point 2 is a singleton: sc = 0; points 0,1: a=1, b = 5 resp. 4
        double expect = ((5.0 - 1) / 5.0 + (4.0 - 1) / 4.0 + 0.0) / 3.0;
        CHECK(silhouette(x, labels) == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("davies-bouldin worked examples") {
    SECTION("point-mass clusters give zero") {
        Tensor x({4, 1}, {1.0, 1.0, 9.0, 9.0});
        CHECK(davies_bouldin(x, {0, 0, 1, 1}) == 0.0);
    }
    SECTION("line clusters, hand arithmetic") {
        Tensor x({4, 1}, {0.0, 2.0, 10.0, 12.0});
        CHECK(davies_bouldin(x, {0, 0, 1, 1}) == Catch::Approx(0.2).margin(1e-15));
    }
    SECTION("scaling invariance") {
        Rng rng(9);
        Tensor x({8, 2});
        for (auto& v : x.values) v = rng.uniform(-2, 2);
        std::vector<std::int64_t> labels = {0, 0, 1, 1, 2, 2, 0, 1};
        double base = davies_bouldin(x, labels);
        Tensor y = x;
        for (auto& v : y.values) v *= 7.5;
        CHECK(davies_bouldin(y, labels) == Catch::Approx(base).epsilon(1e-12));
    }
    SECTION("coincident centroids are rejected") {
        Tensor x({4, 1}, {-1.0, 1.0, -2.0, 2.0});
        CHECK_THROWS_AS(davies_bouldin(x, {0, 0, 1, 1}), std::domain_error);
    }
}

TEST_CASE("cluster metrics match brute-force oracles on random instances") {
    Rng rng(77);
    for (int trial = 0; trial < 25; ++trial) {
        std::int64_t n = 4 + static_cast<std::int64_t>(rng.uniform_index(27)); // up to 30
        Tensor x({n, 3});
        for (auto& v : x.values) v = rng.uniform(-4, 4);
        std::vector<std::int64_t> labels(static_cast<std::size_t>(n));
        for (auto& l : labels) l = static_cast<std::int64_t>(rng.uniform_index(3));
        std::set<std::int64_t> uniq(labels.begin(), labels.end());
        if (uniq.size() < 2) continue;
        CHECK(std::abs(silhouette(x, labels) - silhouette_oracle(x, labels)) <= 1e-10);
    }
}
