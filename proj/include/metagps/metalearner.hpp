#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metagps/autodiff.hpp"
#include "metagps/encoder.hpp"
#include "metagps/episodes.hpp"
#include "metagps/graph.hpp"
#include "metagps/metrics.hpp"
#include "metagps/paramset.hpp"
#include "metagps/rng.hpp"

namespace metagps {

struct HyperParams {
    double alpha = 0.5;          // inner step size
    double beta = 0.001;         // outer meta-learning rate
    double xi = 0.1;             // contrastive loss weight
    double zeta = 0.1;           // self-training loss weight
    double gamma = 0.001;        // psi L2 penalty
    double tau = 0.5;            // contrastive temperature
    std::int64_t topk = 30;      // high-confidence nodes per class
    std::int64_t phi_steps = 1;  // head-adaptation steps
    std::int64_t theta_steps = 5;
    ad::Mode order = ad::Mode::FirstOrder;
};

struct Ablation {
    bool no_st = false;
    bool no_s2 = false;
    bool sgc_encoder = false;
    bool no_cl = false;
    bool no_pi = false;
};

struct ModelConfig {
    std::int64_t d_hidden = 16;  // d'
    std::int64_t hops = 2;
    std::int64_t sgc_power = 2;
    std::int64_t proto_hidden = 16;
    std::int64_t s2_hidden = 16;
    std::int64_t n_way = 5;  // head bias width
    HyperParams hyper;
    Ablation ablation;
};

// Prior parameters Theta (encoder + prototype MLP + head bias) and the
// S^2 networks Psi. Psi final layers start at exactly zero so modulation
// begins as the identity.
struct MetaState {
    ParamSet theta;
    ParamSet psi;
    ModelConfig cfg;
};

inline ParamSet init_theta(std::int64_t feature_dim, const ModelConfig& cfg, Rng& rng) {
    ParamSet theta;
    if (cfg.ablation.sgc_encoder) {
        theta.add("enc.W", xavier_uniform({feature_dim, cfg.d_hidden}, rng));
    } else {
        theta.add("enc.W_f", xavier_uniform({feature_dim, cfg.d_hidden}, rng));
        theta.add("enc.W_r", xavier_uniform({(cfg.hops + 1) * cfg.d_hidden, cfg.d_hidden}, rng));
    }
    theta.add("proto.W1", xavier_uniform({cfg.d_hidden, cfg.proto_hidden}, rng));
    theta.add("proto.b1", Tensor::zeros({1, cfg.proto_hidden}));
    theta.add("proto.W2", xavier_uniform({cfg.proto_hidden, cfg.d_hidden}, rng));
    theta.add("proto.b2", Tensor::zeros({1, cfg.d_hidden}));
    theta.add("head.b", Tensor::zeros({1, cfg.n_way}));
    return theta;
}

inline ParamSet init_psi(std::int64_t theta_len, const ModelConfig& cfg, Rng& rng) {
    ParamSet psi;
    for (const char* side : {"lam", "mu"}) {
        std::string p(side);
        psi.add(p + ".W1", xavier_uniform({cfg.d_hidden, cfg.s2_hidden}, rng));
        psi.add(p + ".b1", Tensor::zeros({1, cfg.s2_hidden}));
        psi.add(p + ".W2", Tensor::zeros({cfg.s2_hidden, theta_len})); // identity-modulation start
        psi.add(p + ".b2", Tensor::zeros({1, theta_len}));
    }
    return psi;
}

inline MetaState init_meta_state(std::int64_t feature_dim, const ModelConfig& cfg, std::uint64_t seed) {
    MetaState st;
    st.cfg = cfg;
    Rng rng(sub_seed(seed, 0xC0DE));
    st.theta = init_theta(feature_dim, cfg, rng);
    st.psi = cfg.ablation.no_s2 ? ParamSet{} : init_psi(st.theta.total_len(), cfg, rng);
    return st;
}

// ---- per-operation pieces ---------------------------------------------------

// class prototypes as rows, built from an averaging operator so gradients
// flow into every contributing embedding
inline ad::Var prototypes(const ad::Var& z, const std::vector<std::vector<std::int64_t>>& class_members) {
    const std::int64_t n = z.shape()[0];
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> coo;
    for (std::size_t j = 0; j < class_members.size(); ++j) {
        if (class_members[j].empty())
            throw std::invalid_argument("prototypes: class slot " + std::to_string(j) + " has no contributing nodes");
        const double w = 1.0 / static_cast<double>(class_members[j].size());
        for (auto v : class_members[j]) coo.emplace_back(static_cast<std::int64_t>(j), v, w);
    }
    auto avg = std::make_shared<SparseMatrix>(static_cast<std::int64_t>(class_members.size()), n, std::move(coo));
    return spmm(avg, z);
}

// phi_j = MLP(P_j; theta_p), rows independent
inline ad::Var proto_init(const ad::Var& p, const ad::TapedParams& theta) {
    using namespace ad;
    const std::int64_t rows = p.shape()[0];
    Var h = relu(add(matmul(p, theta["proto.W1"]), broadcast_row(theta["proto.b1"], rows)));
    return add(matmul(h, theta["proto.W2"]), broadcast_row(theta["proto.b2"], rows));
}

inline ad::Var score_logits(const ad::Var& z_rows, const ad::Var& phi, const ad::Var& bias) {
    using namespace ad;
    return add(matmul(z_rows, transpose(phi)), broadcast_row(bias, z_rows.shape()[0]));
}

inline ad::Var score(const ad::Var& z_rows, const ad::Var& phi, const ad::Var& bias) {
    return ad::row_softmax(score_logits(z_rows, phi, bias));
}

// softmax cross-entropy against within-episode class indices, summed over
// rows (losses here sum over the support/query set rather than averaging)
inline ad::Var cross_entropy(const ad::Var& logits, const std::vector<std::int64_t>& label_idx) {
    using namespace ad;
    const std::int64_t rows = logits.shape()[0], cols = logits.shape()[1];
    if (static_cast<std::int64_t>(label_idx.size()) != rows)
        throw std::invalid_argument("cross_entropy: labels/rows mismatch");
    Tensor onehot({rows, cols});
    for (std::int64_t i = 0; i < rows; ++i) {
        if (label_idx[static_cast<std::size_t>(i)] < 0 || label_idx[static_cast<std::size_t>(i)] >= cols)
            throw std::out_of_range("cross_entropy: label index out of range");
        onehot.at(i, label_idx[static_cast<std::size_t>(i)]) = 1.0;
    }
    Var picked = mul(row_log_softmax(logits), constant(*logits.tape, std::move(onehot)));
    return mul_scalar(sum(picked), -1.0);
}

inline std::vector<std::int64_t> argmax_rows(const Tensor& t) {
    std::vector<std::int64_t> out(static_cast<std::size_t>(t.shape[0]));
    for (std::int64_t i = 0; i < t.shape[0]; ++i) {
        std::int64_t best = 0;
        for (std::int64_t j = 1; j < t.shape[1]; ++j)
            if (t.at(i, j) > t.at(i, best)) best = j;
        out[static_cast<std::size_t>(i)] = best;
    }
    return out;
}

// gradient-descent refinement of the head parameters, encoder frozen; in
// first-order mode the inner gradient is detached so it passes through
inline ad::Var adapt_phi(ad::Var phi, const ad::Var& z_support, const std::vector<std::int64_t>& support_label_idx,
                         const ad::Var& bias, double alpha, std::int64_t steps) {
    using namespace ad;
    for (std::int64_t s = 0; s < steps; ++s) {
        Var loss = cross_entropy(score_logits(z_support, phi, bias), support_label_idx);
        Var g = backward_single(loss, phi);
        if (phi.tape->mode() == Mode::FirstOrder) g = detach(g);
        phi = sub(phi, mul_scalar(g, alpha));
    }
    return phi;
}

// supervised contrastive loss over the task's nodes; the anchor's class
// prototype joins both the positive set and the denominator
inline ad::Var contrastive_loss(const ad::Var& z_task, const std::vector<std::int64_t>& label_idx,
                                const ad::Var& p_task, double tau) {
    using namespace ad;
    Tape& tape = *z_task.tape;
    const std::int64_t n = z_task.shape()[0];
    const std::int64_t n_classes = p_task.shape()[0];
    if (static_cast<std::int64_t>(label_idx.size()) != n)
        throw std::invalid_argument("contrastive_loss: labels/rows mismatch");

    Var u = row_l2_normalize(z_task);
    Var up = row_l2_normalize(p_task);
    Var sim = mul_scalar(matmul(u, transpose(u)), 1.0 / tau);        // n x n
    Var sim_p = mul_scalar(matmul(u, transpose(up)), 1.0 / tau);     // n x N

    Tensor off_diag({n, n});
    Tensor pos({n, n});
    Tensor own({n, n_classes});
    std::vector<double> class_count(static_cast<std::size_t>(n_classes), 0.0);
    for (auto c : label_idx) class_count[static_cast<std::size_t>(c)] += 1.0;
    Tensor inv_vy({n, 1});
    Tensor pos_count({n, 1});
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int64_t ci = label_idx[static_cast<std::size_t>(i)];
        for (std::int64_t j = 0; j < n; ++j) {
            if (i == j) continue;
            off_diag.at(i, j) = 1.0;
            if (label_idx[static_cast<std::size_t>(j)] == ci) pos.at(i, j) = 1.0;
        }
        own.at(i, ci) = 1.0;
        inv_vy.at(i, 0) = 1.0 / class_count[static_cast<std::size_t>(ci)];
        pos_count.at(i, 0) = class_count[static_cast<std::size_t>(ci)]; // |same-label others| + prototype
    }

    Var den = add(row_sum(mul(exp_(sim), constant(tape, off_diag))),
                  row_sum(mul(exp_(sim_p), constant(tape, own))));    // n x 1
    Var pos_sim = add(row_sum(mul(sim, constant(tape, pos))), row_sum(mul(sim_p, constant(tape, own))));
    Var per_anchor = sub(mul(constant(tape, pos_count), log_(den)), pos_sim); // |ind+| log den_i - sum of positives
    return sum(mul(constant(tape, inv_vy), per_anchor));
}

// Student-t soft assignments of pool embeddings to prototypes; rows sum to 1
inline ad::Var soft_assign(const ad::Var& z_pool, const ad::Var& p) {
    using namespace ad;
    Tape& tape = *z_pool.tape;
    const std::int64_t n = z_pool.shape()[0], n_classes = p.shape()[0];
    if (n == 0) throw std::invalid_argument("soft_assign: empty pool");
    Var d2 = sub(add(broadcast_cols(row_sum(square(z_pool)), n_classes),
                     broadcast_row(transpose(row_sum(square(p))), n)),
                 mul_scalar(matmul(z_pool, transpose(p)), 2.0));
    Var w = div(constant(tape, Tensor::ones({n, n_classes})), add_scalar(d2, 1.0));
    return div(w, broadcast_cols(row_sum(w), n_classes));
}

// top-K row ids per column (ties to the smaller row index), union across
// columns in ascending order
inline std::vector<std::int64_t> select_high_confidence(const Tensor& q, std::int64_t k) {
    if (q.shape.size() != 2) throw std::invalid_argument("select_high_confidence: rank-2 required");
    const std::int64_t n = q.shape[0], cols = q.shape[1];
    const std::int64_t take = std::min(k, n);
    std::set<std::int64_t> selected;
    for (std::int64_t j = 0; j < cols; ++j) {
        std::vector<std::int64_t> order(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::int64_t a, std::int64_t b) { return q.at(a, j) > q.at(b, j); });
        for (std::int64_t t = 0; t < take; ++t) selected.insert(order[static_cast<std::size_t>(t)]);
    }
    return {selected.begin(), selected.end()};
}

// squared-and-frequency-normalized target distribution (Q is a constant
// target; no gradient flows through it)
inline Tensor sharpen(const Tensor& q_hc) {
    if (q_hc.shape.size() != 2 || q_hc.shape[0] == 0) throw std::invalid_argument("sharpen: empty input");
    const std::int64_t n = q_hc.shape[0], cols = q_hc.shape[1];
    std::vector<double> z(static_cast<std::size_t>(cols), 0.0);
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < cols; ++j) z[static_cast<std::size_t>(j)] += q_hc.at(i, j);
    Tensor out({n, cols});
    for (std::int64_t i = 0; i < n; ++i) {
        double denom = 0.0;
        for (std::int64_t j = 0; j < cols; ++j) {
            if (z[static_cast<std::size_t>(j)] == 0.0) throw std::domain_error("sharpen: zero column frequency");
            denom += q_hc.at(i, j) * q_hc.at(i, j) / z[static_cast<std::size_t>(j)];
        }
        for (std::int64_t j = 0; j < cols; ++j)
            out.at(i, j) = (q_hc.at(i, j) * q_hc.at(i, j) / z[static_cast<std::size_t>(j)]) / denom;
    }
    return out;
}

// KL(Q_hc || Q~_hc) with the sharpened target held constant. The raw float
// sum can dip below zero by ~1e-16 near fixed points of the sharpening; the
// final relu pins the theorem KL >= 0 exactly and only acts where the true
// gradient vanishes anyway.
inline ad::Var self_training_loss(const ad::Var& q_tilde_hc, const Tensor& q_hc) {
    using namespace ad;
    require_same_shape(q_tilde_hc.shape(), q_hc.shape, "self_training_loss");
    double target_entropy_term = 0.0;
    for (std::size_t i = 0; i < q_hc.values.size(); ++i) {
        const double qv = q_hc.values[i];
        if (qv > 0.0) {
            if (q_tilde_hc.value().values[i] <= 0.0)
                throw std::domain_error("self_training_loss: target mass where assignment is zero");
            target_entropy_term += qv * std::log(qv);
        }
    }
    Var cross = sum(mul(constant(*q_tilde_hc.tape, q_hc), log_(q_tilde_hc)));
    return relu(add_scalar(neg(cross), target_entropy_term));
}

// ---- S^2 modulation ---------------------------------------------------------

namespace detail {

inline ad::Var mlp_1row(const ad::Var& in, const ad::TapedParams& p, const std::string& prefix) {
    using namespace ad;
    Var h = relu(add(matmul(in, p[prefix + ".W1"]), p[prefix + ".b1"]));
    return add(matmul(h, p[prefix + ".W2"]), p[prefix + ".b2"]);
}

} // namespace detail

// Theta_i = (1 + g_lambda(t)) * Theta + g_mu(t), elementwise over the
// flattened parameters, then unflattened back to named shapes
inline ad::TapedParams s2_modulate(const ad::Var& z_support, const ad::TapedParams& theta,
                                   const ad::TapedParams& psi) {
    using namespace ad;
    const std::int64_t k = z_support.shape()[0];
    Var t = mul_scalar(col_sum(z_support), 1.0 / static_cast<double>(k)); // 1 x d'
    Var lam_raw = metagps::detail::mlp_1row(t, psi, "lam");
    Var mu_raw = metagps::detail::mlp_1row(t, psi, "mu");

    std::vector<Var> pieces;
    std::vector<std::pair<std::string, Shape>> layout;
    for (const auto& [name, var] : theta) {
        layout.emplace_back(name, var.shape());
        pieces.push_back(reshape(var, {1, var.value().numel()}));
    }
    Var flat = concat_cols(std::span<const Var>(pieces));
    if (flat.shape()[1] != lam_raw.shape()[1])
        throw std::invalid_argument("s2_modulate: psi output width " + shape_str(lam_raw.shape()) +
                                    " does not match theta length " + shape_str(flat.shape()));
    Var modulated = add(mul(add_scalar(lam_raw, 1.0), flat), mu_raw);

    TapedParams out;
    std::int64_t off = 0;
    for (const auto& [name, shape] : layout) {
        const std::int64_t len = shape_numel(shape);
        out.add(name, reshape(slice_cols(modulated, off, off + len), shape));
        off += len;
    }
    return out;
}

} // namespace metagps
