#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "metagps/paramset.hpp"
#include "metagps/sparse.hpp"
#include "metagps/tensor.hpp"

namespace metagps::ad {

enum class Mode { FirstOrder, ExactSecondOrder };

enum class Op {
    Leaf,
    Add, Sub, Mul, Div,
    AddScalar, MulScalar,
    MatMul, Transpose,
    ConcatCols, SliceCols, PadCols,
    Relu, StepMask, Tanh, Log, Exp, Square, Sqrt,
    RowSoftmax, RowLogSoftmax, RowL2Normalize,
    Sum, Mean, RowSum, ColSum,
    BroadcastCols, BroadcastRow, BroadcastScalar,
    GatherRows, ScatterRows,
    Spmm,
    Reshape,
};

inline const char* op_name(Op op) {
    switch (op) {
        case Op::Leaf: return "leaf";
        case Op::Add: return "add";
        case Op::Sub: return "sub";
        case Op::Mul: return "mul";
        case Op::Div: return "div";
        case Op::AddScalar: return "add_scalar";
        case Op::MulScalar: return "mul_scalar";
        case Op::MatMul: return "matmul";
        case Op::Transpose: return "transpose";
        case Op::ConcatCols: return "concat_cols";
        case Op::SliceCols: return "slice_cols";
        case Op::PadCols: return "pad_cols";
        case Op::Relu: return "relu";
        case Op::StepMask: return "step_mask";
        case Op::Tanh: return "tanh";
        case Op::Log: return "log";
        case Op::Exp: return "exp";
        case Op::Square: return "square";
        case Op::Sqrt: return "sqrt";
        case Op::RowSoftmax: return "row_softmax";
        case Op::RowLogSoftmax: return "row_log_softmax";
        case Op::RowL2Normalize: return "row_l2_normalize";
        case Op::Sum: return "sum";
        case Op::Mean: return "mean";
        case Op::RowSum: return "row_sum";
        case Op::ColSum: return "col_sum";
        case Op::BroadcastCols: return "broadcast_cols";
        case Op::BroadcastRow: return "broadcast_row";
        case Op::BroadcastScalar: return "broadcast_scalar";
        case Op::GatherRows: return "gather_rows";
        case Op::ScatterRows: return "scatter_rows";
        case Op::Spmm: return "spmm";
        case Op::Reshape: return "reshape";
    }
    return "?";
}

struct Node {
    Op op = Op::Leaf;
    std::vector<std::int32_t> inputs;
    Tensor out;
    double scalar = 0.0;                       // AddScalar / MulScalar payload
    std::vector<std::int64_t> ids;             // gather/scatter row ids, slice/pad bounds
    std::shared_ptr<const SparseMatrix> sp;    // Spmm payload
    bool sp_transposed = false;
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape; }
};

class Tape {
public:
    explicit Tape(Mode mode = Mode::FirstOrder) : mode_(mode) {}

    Mode mode() const { return mode_; }
    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)]; }

    Var emit(Node n) {
        if (!n.out.all_finite())
            throw std::runtime_error(std::string("non-finite values produced by ") + op_name(n.op));
        nodes_.push_back(std::move(n));
        return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    Var leaf(Tensor t) {
        Node n;
        n.op = Op::Leaf;
        n.out = std::move(t);
        return emit(std::move(n));
    }

private:
    std::vector<Node> nodes_;
    Mode mode_;
};

inline const Tensor& Var::value() const { return tape->node(id).out; }

namespace detail {

inline void check_same_tape(const Var& a, const Var& b, const char* op) {
    if (a.tape != b.tape) throw std::logic_error(std::string(op) + ": operands on different tapes");
}

inline Node binary_node(Op op, const Var& a, const Var& b, Tensor out) {
    Node n;
    n.op = op;
    n.inputs = {a.id, b.id};
    n.out = std::move(out);
    return n;
}

inline Node unary_node(Op op, const Var& a, Tensor out) {
    Node n;
    n.op = op;
    n.inputs = {a.id};
    n.out = std::move(out);
    return n;
}

} // namespace detail

// ---- primitives -----------------------------------------------------------

inline Var constant(Tape& t, Tensor v) { return t.leaf(std::move(v)); }
inline Var scalar_const(Tape& t, double v) { return t.leaf(Tensor::scalar(v)); }

inline Var detach(const Var& x) { return x.tape->leaf(x.value()); }

inline Var add(const Var& a, const Var& b) {
    detail::check_same_tape(a, b, "add");
    require_same_shape(a.shape(), b.shape(), "add");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] + b.value().values[i];
    return a.tape->emit(detail::binary_node(Op::Add, a, b, std::move(out)));
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_tape(a, b, "sub");
    require_same_shape(a.shape(), b.shape(), "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] - b.value().values[i];
    return a.tape->emit(detail::binary_node(Op::Sub, a, b, std::move(out)));
}

inline Var mul(const Var& a, const Var& b) {
    detail::check_same_tape(a, b, "mul");
    require_same_shape(a.shape(), b.shape(), "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] * b.value().values[i];
    return a.tape->emit(detail::binary_node(Op::Mul, a, b, std::move(out)));
}

inline Var div(const Var& a, const Var& b) {
    detail::check_same_tape(a, b, "div");
    require_same_shape(a.shape(), b.shape(), "div");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (b.value().values[i] == 0.0) throw std::domain_error("div: division by exact zero");
        out.values[i] = a.value().values[i] / b.value().values[i];
    }
    return a.tape->emit(detail::binary_node(Op::Div, a, b, std::move(out)));
}

inline Var add_scalar(const Var& a, double c) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] + c;
    Node n = detail::unary_node(Op::AddScalar, a, std::move(out));
    n.scalar = c;
    return a.tape->emit(std::move(n));
}

inline Var mul_scalar(const Var& a, double c) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] * c;
    Node n = detail::unary_node(Op::MulScalar, a, std::move(out));
    n.scalar = c;
    return a.tape->emit(std::move(n));
}

inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

inline Var matmul(const Var& a, const Var& b) {
    detail::check_same_tape(a, b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0])
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    std::int64_t m = A.shape[0], k = A.shape[1], p = B.shape[1];
    Tensor out({m, p});
    for (std::int64_t i = 0; i < m; ++i) {
        const double* arow = A.values.data() + i * k;
        double* orow = out.values.data() + i * p;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            const double* brow = B.values.data() + kk * p;
            for (std::int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
        }
    }
    return a.tape->emit(detail::binary_node(Op::MatMul, a, b, std::move(out)));
}

inline Var transpose(const Var& a) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("transpose: rank-2 required, got " + shape_str(A.shape));
    Tensor out({A.shape[1], A.shape[0]});
    for (std::int64_t i = 0; i < A.shape[0]; ++i)
        for (std::int64_t j = 0; j < A.shape[1]; ++j) out.at(j, i) = A.at(i, j);
    return a.tape->emit(detail::unary_node(Op::Transpose, a, std::move(out)));
}

// concatenate rank-2 tensors along the feature (column) axis
inline Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
    Tape* tape = parts[0].tape;
    std::int64_t rows = parts[0].value().shape[0], total = 0;
    for (const Var& p : parts) {
        detail::check_same_tape(parts[0], p, "concat_cols");
        if (p.value().shape.size() != 2 || p.value().shape[0] != rows)
            throw std::invalid_argument("concat_cols: shape mismatch " + shape_str(parts[0].shape()) + " vs " +
                                        shape_str(p.shape()));
        total += p.value().shape[1];
    }
    Tensor out({rows, total});
    Node n;
    n.op = Op::ConcatCols;
    std::int64_t off = 0;
    for (const Var& p : parts) {
        const Tensor& P = p.value();
        std::int64_t w = P.shape[1];
        for (std::int64_t i = 0; i < rows; ++i)
            std::copy(P.values.begin() + i * w, P.values.begin() + (i + 1) * w, out.values.begin() + i * total + off);
        n.inputs.push_back(p.id);
        n.ids.push_back(off);
        off += w;
    }
    n.ids.push_back(total);
    n.out = std::move(out);
    return tape->emit(std::move(n));
}

inline Var concat_cols(std::initializer_list<Var> parts) {
    std::vector<Var> v(parts);
    return concat_cols(std::span<const Var>(v));
}

inline Var slice_cols(const Var& a, std::int64_t lo, std::int64_t hi) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2 || lo < 0 || hi > A.shape[1] || lo >= hi)
        throw std::invalid_argument("slice_cols: bad range");
    Tensor out({A.shape[0], hi - lo});
    for (std::int64_t i = 0; i < A.shape[0]; ++i)
        for (std::int64_t j = lo; j < hi; ++j) out.at(i, j - lo) = A.at(i, j);
    Node n = detail::unary_node(Op::SliceCols, a, std::move(out));
    n.ids = {lo, hi, A.shape[1]};
    return a.tape->emit(std::move(n));
}

// place a into columns [lo, lo+width(a)) of a zero matrix with `total` columns
inline Var pad_cols(const Var& a, std::int64_t lo, std::int64_t total) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2 || lo < 0 || lo + A.shape[1] > total) throw std::invalid_argument("pad_cols: bad range");
    Tensor out({A.shape[0], total});
    for (std::int64_t i = 0; i < A.shape[0]; ++i)
        for (std::int64_t j = 0; j < A.shape[1]; ++j) out.at(i, j + lo) = A.at(i, j);
    Node n = detail::unary_node(Op::PadCols, a, std::move(out));
    n.ids = {lo, lo + A.shape[1], total};
    return a.tape->emit(std::move(n));
}

inline Var relu(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::max(0.0, a.value().values[i]);
    return a.tape->emit(detail::unary_node(Op::Relu, a, std::move(out)));
}

// 1 where x > 0 else 0; derivative registered as zero
inline Var step_mask(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] > 0.0 ? 1.0 : 0.0;
    return a.tape->emit(detail::unary_node(Op::StepMask, a, std::move(out)));
}

inline Var tanh_(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::tanh(a.value().values[i]);
    return a.tape->emit(detail::unary_node(Op::Tanh, a, std::move(out)));
}

inline Var log_(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (a.value().values[i] <= 0.0) throw std::domain_error("log: non-positive input");
        out.values[i] = std::log(a.value().values[i]);
    }
    return a.tape->emit(detail::unary_node(Op::Log, a, std::move(out)));
}

inline Var exp_(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = std::exp(a.value().values[i]);
    return a.tape->emit(detail::unary_node(Op::Exp, a, std::move(out)));
}

inline Var square(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] = a.value().values[i] * a.value().values[i];
    return a.tape->emit(detail::unary_node(Op::Square, a, std::move(out)));
}

inline Var sqrt_(const Var& a) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        if (a.value().values[i] < 0.0) throw std::domain_error("sqrt: negative input");
        out.values[i] = std::sqrt(a.value().values[i]);
    }
    return a.tape->emit(detail::unary_node(Op::Sqrt, a, std::move(out)));
}

inline Var row_softmax(const Var& a) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("row_softmax: rank-2 required");
    Tensor out(A.shape);
    std::int64_t n = A.shape[0], d = A.shape[1];
    for (std::int64_t i = 0; i < n; ++i) {
        double mx = A.at(i, 0);
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, A.at(i, j));
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += (out.at(i, j) = std::exp(A.at(i, j) - mx));
        for (std::int64_t j = 0; j < d; ++j) out.at(i, j) /= s;
    }
    return a.tape->emit(detail::unary_node(Op::RowSoftmax, a, std::move(out)));
}

inline Var row_log_softmax(const Var& a) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("row_log_softmax: rank-2 required");
    Tensor out(A.shape);
    std::int64_t n = A.shape[0], d = A.shape[1];
    for (std::int64_t i = 0; i < n; ++i) {
        double mx = A.at(i, 0);
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, A.at(i, j));
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += std::exp(A.at(i, j) - mx);
        double lse = mx + std::log(s);
        for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = A.at(i, j) - lse;
    }
    return a.tape->emit(detail::unary_node(Op::RowLogSoftmax, a, std::move(out)));
}

inline Var row_l2_normalize(const Var& a) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("row_l2_normalize: rank-2 required");
    Tensor out(A.shape);
    std::int64_t n = A.shape[0], d = A.shape[1];
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < d; ++j) s += A.at(i, j) * A.at(i, j);
        if (s == 0.0) throw std::domain_error("row_l2_normalize: zero-norm row " + std::to_string(i));
        double inv = 1.0 / std::sqrt(s);
        for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = A.at(i, j) * inv;
    }
    return a.tape->emit(detail::unary_node(Op::RowL2Normalize, a, std::move(out)));
}

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().values) s += v;
    return a.tape->emit(detail::unary_node(Op::Sum, a, Tensor::scalar(s)));
}

inline Var mean(const Var& a) {
    if (a.value().values.empty()) throw std::invalid_argument("mean: empty tensor");
    double s = 0.0;
    for (double v : a.value().values) s += v;
    return a.tape->emit(detail::unary_node(Op::Mean, a, Tensor::scalar(s / static_cast<double>(a.value().numel()))));
}

inline Var row_sum(const Var& a) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("row_sum: rank-2 required");
    Tensor out({A.shape[0], 1});
    for (std::int64_t i = 0; i < A.shape[0]; ++i) {
        double s = 0.0;
        for (std::int64_t j = 0; j < A.shape[1]; ++j) s += A.at(i, j);
        out.at(i, 0) = s;
    }
    return a.tape->emit(detail::unary_node(Op::RowSum, a, std::move(out)));
}

inline Var col_sum(const Var& a) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("col_sum: rank-2 required");
    Tensor out({1, A.shape[1]});
    for (std::int64_t i = 0; i < A.shape[0]; ++i)
        for (std::int64_t j = 0; j < A.shape[1]; ++j) out.at(0, j) += A.at(i, j);
    return a.tape->emit(detail::unary_node(Op::ColSum, a, std::move(out)));
}

// n x 1 -> n x d (replicate the single column)
inline Var broadcast_cols(const Var& a, std::int64_t d) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2 || A.shape[1] != 1) throw std::invalid_argument("broadcast_cols: n x 1 required");
    Tensor out({A.shape[0], d});
    for (std::int64_t i = 0; i < A.shape[0]; ++i)
        for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = A.at(i, 0);
    return a.tape->emit(detail::unary_node(Op::BroadcastCols, a, std::move(out)));
}

// 1 x d -> n x d (replicate the row vector over rows)
inline Var broadcast_row(const Var& a, std::int64_t n) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2 || A.shape[0] != 1) throw std::invalid_argument("broadcast_row: 1 x d required");
    Tensor out({n, A.shape[1]});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < A.shape[1]; ++j) out.at(i, j) = A.at(0, j);
    return a.tape->emit(detail::unary_node(Op::BroadcastRow, a, std::move(out)));
}

inline Var broadcast_scalar(const Var& a, const Shape& shape) {
    if (!a.value().is_scalar()) throw std::invalid_argument("broadcast_scalar: scalar required");
    Tensor out(shape);
    std::fill(out.values.begin(), out.values.end(), a.value().values[0]);
    return a.tape->emit(detail::unary_node(Op::BroadcastScalar, a, std::move(out)));
}

inline Var gather_rows(const Var& a, std::vector<std::int64_t> ids) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2) throw std::invalid_argument("gather_rows: rank-2 required");
    Tensor out({static_cast<std::int64_t>(ids.size()), A.shape[1]});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= A.shape[0]) throw std::out_of_range("gather_rows: row id out of range");
        std::copy(A.values.begin() + ids[i] * A.shape[1], A.values.begin() + (ids[i] + 1) * A.shape[1],
                  out.values.begin() + static_cast<std::int64_t>(i) * A.shape[1]);
    }
    Node n = detail::unary_node(Op::GatherRows, a, std::move(out));
    n.ids = std::move(ids);
    n.ids.push_back(A.shape[0]); // source row count, needed by the adjoint scatter
    return a.tape->emit(std::move(n));
}

// rows of a summed into a zero (n_rows x d) matrix at positions ids
inline Var scatter_rows(const Var& a, std::vector<std::int64_t> ids, std::int64_t n_rows) {
    const Tensor& A = a.value();
    if (A.shape.size() != 2 || static_cast<std::int64_t>(ids.size()) != A.shape[0])
        throw std::invalid_argument("scatter_rows: ids/rows mismatch");
    Tensor out({n_rows, A.shape[1]});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= n_rows) throw std::out_of_range("scatter_rows: row id out of range");
        for (std::int64_t j = 0; j < A.shape[1]; ++j) out.at(ids[i], j) += A.at(static_cast<std::int64_t>(i), j);
    }
    Node n = detail::unary_node(Op::ScatterRows, a, std::move(out));
    n.ids = std::move(ids);
    return a.tape->emit(std::move(n));
}

// S * x (or S^T * x) with S a constant sparse matrix
inline Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& x, bool transpose_s = false) {
    Tensor out = s->multiply(x.value(), transpose_s);
    Node n = detail::unary_node(Op::Spmm, x, std::move(out));
    n.sp = std::move(s);
    n.sp_transposed = transpose_s;
    return x.tape->emit(std::move(n));
}

inline Var reshape(const Var& a, Shape shape) {
    if (shape_numel(shape) != a.value().numel())
        throw std::invalid_argument("reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    Tensor out(std::move(shape), a.value().values);
    return a.tape->emit(detail::unary_node(Op::Reshape, a, std::move(out)));
}

// ---- backward --------------------------------------------------------------

// Reverse sweep from `loss`. Adjoints are emitted as tape nodes built from the
// same primitive set, so a second backward over a returned gradient gives exact
// second-order derivatives.
inline std::vector<Var> backward(const Var& loss, std::span<const Var> wrt) {
    Tape& tape = *loss.tape;
    if (!loss.value().is_scalar())
        throw std::invalid_argument("backward: loss must be scalar, got shape " + shape_str(loss.shape()));

    const std::int32_t root = loss.id;
    std::vector<bool> reachable(static_cast<std::size_t>(root) + 1, false);
    reachable[static_cast<std::size_t>(root)] = true;
    for (std::int32_t id = root; id >= 0; --id) {
        if (!reachable[static_cast<std::size_t>(id)]) continue;
        for (std::int32_t in : tape.node(id).inputs) reachable[static_cast<std::size_t>(in)] = true;
    }

    // adjoints only flow through nodes whose input subtree contains a wrt
    // target; everything else is dead for this gradient
    std::vector<bool> leads(static_cast<std::size_t>(root) + 1, false);
    for (const Var& w : wrt)
        if (w.id >= 0 && w.id <= root) leads[static_cast<std::size_t>(w.id)] = true;
    for (std::int32_t id = 0; id <= root; ++id) {
        if (leads[static_cast<std::size_t>(id)]) continue;
        for (std::int32_t in : tape.node(id).inputs)
            if (leads[static_cast<std::size_t>(in)]) {
                leads[static_cast<std::size_t>(id)] = true;
                break;
            }
    }

    std::unordered_map<std::int32_t, Var> adj;
    adj.emplace(root, scalar_const(tape, 1.0));

    auto accumulate = [&](std::int32_t id, const Var& g) {
        if (!leads[static_cast<std::size_t>(id)]) return;
        auto it = adj.find(id);
        if (it == adj.end())
            adj.emplace(id, g);
        else
            it->second = add(it->second, g);
    };

    for (std::int32_t id = root; id >= 0; --id) {
        if (!reachable[static_cast<std::size_t>(id)]) continue;
        auto it = adj.find(id);
        if (it == adj.end()) continue; // no gradient flowed here
        Var g = it->second;
        // copy node metadata: emitting VJP nodes may reallocate the tape
        Node n;
        {
            const Node& ref = tape.node(id);
            n.op = ref.op;
            n.inputs = ref.inputs;
            n.ids = ref.ids;
            n.scalar = ref.scalar;
            n.sp = ref.sp;
            n.sp_transposed = ref.sp_transposed;
            n.out.shape = ref.out.shape;
        }
        auto input_shape = [&](std::size_t i) { return tape.node(n.inputs[i]).out.shape; };
        Var self{&tape, id};
        switch (n.op) {
            case Op::Leaf:
                break;
            case Op::Add:
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], g);
                break;
            case Op::Sub:
                accumulate(n.inputs[0], g);
                accumulate(n.inputs[1], neg(g));
                break;
            case Op::Mul: {
                Var a{&tape, n.inputs[0]}, b{&tape, n.inputs[1]};
                accumulate(n.inputs[0], mul(g, b));
                accumulate(n.inputs[1], mul(g, a));
                break;
            }
            case Op::Div: {
                Var b{&tape, n.inputs[1]};
                Var da = div(g, b);
                accumulate(n.inputs[0], da);
                accumulate(n.inputs[1], neg(mul(da, self))); // -g*a/b^2 = -(g/b)*out
                break;
            }
            case Op::AddScalar:
                accumulate(n.inputs[0], g);
                break;
            case Op::MulScalar:
                accumulate(n.inputs[0], mul_scalar(g, n.scalar));
                break;
            case Op::MatMul: {
                Var a{&tape, n.inputs[0]}, b{&tape, n.inputs[1]};
                accumulate(n.inputs[0], matmul(g, transpose(b)));
                accumulate(n.inputs[1], matmul(transpose(a), g));
                break;
            }
            case Op::Transpose:
                accumulate(n.inputs[0], transpose(g));
                break;
            case Op::ConcatCols: {
                for (std::size_t i = 0; i < n.inputs.size(); ++i)
                    accumulate(n.inputs[i], slice_cols(g, n.ids[i], n.ids[i + 1]));
                break;
            }
            case Op::SliceCols:
                accumulate(n.inputs[0], pad_cols(g, n.ids[0], n.ids[2]));
                break;
            case Op::PadCols:
                accumulate(n.inputs[0], slice_cols(g, n.ids[0], n.ids[1]));
                break;
            case Op::Relu: {
                Var x{&tape, n.inputs[0]};
                accumulate(n.inputs[0], mul(g, step_mask(x)));
                break;
            }
            case Op::StepMask:
                break; // piecewise constant
            case Op::Tanh:
                accumulate(n.inputs[0], sub(g, mul(mul(g, self), self)));
                break;
            case Op::Log: {
                Var x{&tape, n.inputs[0]};
                accumulate(n.inputs[0], div(g, x));
                break;
            }
            case Op::Exp:
                accumulate(n.inputs[0], mul(g, self));
                break;
            case Op::Square: {
                Var x{&tape, n.inputs[0]};
                accumulate(n.inputs[0], mul_scalar(mul(g, x), 2.0));
                break;
            }
            case Op::Sqrt:
                accumulate(n.inputs[0], div(g, mul_scalar(self, 2.0)));
                break;
            case Op::RowSoftmax: {
                std::int64_t d = n.out.shape[1];
                Var dot = broadcast_cols(row_sum(mul(g, self)), d);
                accumulate(n.inputs[0], mul(self, sub(g, dot)));
                break;
            }
            case Op::RowLogSoftmax: {
                std::int64_t d = n.out.shape[1];
                Var soft = exp_(self);
                accumulate(n.inputs[0], sub(g, mul(soft, broadcast_cols(row_sum(g), d))));
                break;
            }
            case Op::RowL2Normalize: {
                Var x{&tape, n.inputs[0]};
                std::int64_t d = n.out.shape[1];
                Var norm = broadcast_cols(sqrt_(row_sum(square(x))), d);
                Var proj = mul(self, broadcast_cols(row_sum(mul(g, self)), d));
                accumulate(n.inputs[0], div(sub(g, proj), norm));
                break;
            }
            case Op::Sum:
                accumulate(n.inputs[0], broadcast_scalar(g, input_shape(0)));
                break;
            case Op::Mean: {
                const Shape in_shape = input_shape(0);
                double inv = 1.0 / static_cast<double>(shape_numel(in_shape));
                accumulate(n.inputs[0], broadcast_scalar(mul_scalar(g, inv), in_shape));
                break;
            }
            case Op::RowSum: {
                std::int64_t d = input_shape(0)[1];
                accumulate(n.inputs[0], broadcast_cols(g, d));
                break;
            }
            case Op::ColSum: {
                std::int64_t rows = input_shape(0)[0];
                accumulate(n.inputs[0], broadcast_row(g, rows));
                break;
            }
            case Op::BroadcastCols:
                accumulate(n.inputs[0], row_sum(g));
                break;
            case Op::BroadcastRow:
                accumulate(n.inputs[0], col_sum(g));
                break;
            case Op::BroadcastScalar:
                accumulate(n.inputs[0], sum(g));
                break;
            case Op::GatherRows: {
                std::vector<std::int64_t> ids(n.ids.begin(), n.ids.end() - 1);
                accumulate(n.inputs[0], scatter_rows(g, std::move(ids), n.ids.back()));
                break;
            }
            case Op::ScatterRows:
                accumulate(n.inputs[0], gather_rows(g, n.ids));
                break;
            case Op::Spmm:
                accumulate(n.inputs[0], spmm(n.sp, g, !n.sp_transposed));
                break;
            case Op::Reshape:
                accumulate(n.inputs[0], reshape(g, input_shape(0)));
                break;
        }
        // adjoints stay in the map: wrt entries may be interior nodes
        // (multi-step adapted parameters), whose gradient is the adjoint itself
    }

    std::vector<Var> grads;
    grads.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto it = adj.find(w.id);
        if (it != adj.end() && w.id <= root && reachable[static_cast<std::size_t>(w.id)])
            grads.push_back(it->second);
        else
            grads.push_back(constant(tape, Tensor::zeros(w.shape())));
    }
    return grads;
}

inline Var backward_single(const Var& loss, const Var& wrt) {
    Var ws[1] = {wrt};
    return backward(loss, std::span<const Var>(ws, 1))[0];
}

// ---- ParamSet on tape ------------------------------------------------------

// named leaf Vars mirroring a ParamSet
class TapedParams {
public:
    TapedParams() = default;
    TapedParams(Tape& tape, const ParamSet& ps) {
        for (const auto& [name, t] : ps) add(name, tape.leaf(t));
    }

    void add(const std::string& name, Var v) {
        if (index_.count(name)) throw std::invalid_argument("TapedParams: duplicate name " + name);
        index_[name] = entries_.size();
        entries_.emplace_back(name, v);
    }

    Var& operator[](const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("TapedParams: no entry " + name);
        return entries_[it->second].second;
    }
    const Var& operator[](const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw std::out_of_range("TapedParams: no entry " + name);
        return entries_[it->second].second;
    }
    bool has(const std::string& name) const { return index_.count(name) > 0; }

    std::size_t size() const { return entries_.size(); }
    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    std::vector<Var> vars() const {
        std::vector<Var> v;
        v.reserve(entries_.size());
        for (const auto& [_, var] : entries_) v.push_back(var);
        return v;
    }

    ParamSet values() const {
        ParamSet ps;
        for (const auto& [name, var] : entries_) ps.add(name, var.value());
        return ps;
    }

private:
    std::vector<std::pair<std::string, Var>> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// gradient of a scalar loss with respect to named params
inline ParamSet backward_params(const Var& loss, const TapedParams& params) {
    std::vector<Var> wrt = params.vars();
    std::vector<Var> grads = backward(loss, wrt);
    ParamSet out;
    std::size_t i = 0;
    for (const auto& [name, _] : params) out.add(name, grads[i++].value());
    return out;
}

// d(outer)/d(params) where the outer loss may be built on top of gradients of
// an inner loss. In ExactSecondOrder mode the builder's calls to backward()
// stay differentiable; in FirstOrder mode the builder is expected to detach
// inner gradients (the pipeline does this through Tape::mode()).
inline ParamSet grad_of_grad(const std::function<Var(Tape&, TapedParams&)>& outer_loss_builder,
                             const ParamSet& inner_params, Mode mode) {
    Tape tape(mode);
    TapedParams tp(tape, inner_params);
    Var outer = outer_loss_builder(tape, tp);
    return backward_params(outer, tp);
}

} // namespace metagps::ad
