#pragma once

#include <cstdint>
#include <random>
#include <vector>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace metagps {

// splitmix64, used to derive independent sub-seeds from a root seed.
inline std::uint64_t mix_seed(std::uint64_t s) {
    s += 0x9e3779b97f4a7c15ULL;
    s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
    s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
    return s ^ (s >> 31);
}

inline std::uint64_t sub_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0) {
    return mix_seed(mix_seed(root ^ (a * 0xd6e8feb86659fd93ULL)) ^ (b * 0xa2f9fd70950b7fd5ULL));
}

// mt19937_64 core with hand-rolled distributions. The engine's output sequence
// is pinned by the standard; std:: distributions are not, so we avoid them to
// keep runs bit-reproducible across stdlibs.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform in [0, 1)
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    // unbiased integer in [0, n) by rejection
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n == 0");
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v;
        do { v = eng_(); } while (v >= limit);
        return v % n;
    }

    // standard normal via Box-Muller (cached second value)
    double normal() {
        if (has_cache_) { has_cache_ = false; return cache_; }
        double u1, u2;
        do { u1 = uniform01(); } while (u1 <= 0.0);
        u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cache_ = r * std::sin(a);
        has_cache_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct elements drawn uniformly from pool, order random
    template <typename T>
    std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k) {
        if (k > pool.size())
            throw std::invalid_argument("sample_without_replacement: k exceeds pool size");
        std::vector<T> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::size_t j = i + static_cast<std::size_t>(uniform_index(pool.size() - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

private:
    std::mt19937_64 eng_;
    double cache_ = 0.0;
    bool has_cache_ = false;
};

} // namespace metagps
