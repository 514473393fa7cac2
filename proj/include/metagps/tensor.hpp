#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace metagps {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major f64 tensor. Rank 0 (empty shape) is a scalar with one value.
struct Tensor {
    Shape shape;
    std::vector<double> values;

    Tensor() = default;
    explicit Tensor(Shape s) : shape(std::move(s)), values(static_cast<std::size_t>(shape_numel(shape)), 0.0) {}
    Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
        if (static_cast<std::int64_t>(values.size()) != shape_numel(shape))
            throw std::invalid_argument("tensor values/shape mismatch: " + shape_str(shape) +
                                        " vs " + std::to_string(values.size()) + " values");
    }

    static Tensor scalar(double v) { return Tensor({}, {v}); }
    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor ones(Shape s) {
        Tensor t(std::move(s));
        std::fill(t.values.begin(), t.values.end(), 1.0);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
    std::int64_t rows() const { return shape.size() == 2 ? shape[0] : throw_rank2(); }
    std::int64_t cols() const { return shape.size() == 2 ? shape[1] : throw_rank2(); }
    bool is_scalar() const { return shape.empty(); }

    double& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * shape[1] + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * shape[1] + c)]; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }

private:
    [[noreturn]] std::int64_t throw_rank2() const {
        throw std::logic_error("tensor is not rank-2: shape " + shape_str(shape));
    }
};

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (!same_shape(a, b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

} // namespace metagps
