#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metagps/metalearner.hpp"

namespace metagps {

struct EpisodeBreakdown {
    double total = 0.0;
    double query_ce = 0.0;
    double contrastive = 0.0;    // raw, enters total with weight xi
    double self_training = 0.0;  // raw, enters total with weight zeta
    double psi_reg = 0.0;        // raw, enters total with weight gamma
};

struct EpisodeEval {
    EpisodeBreakdown loss;
    std::vector<std::int64_t> query_pred;  // predicted class ids (graph labels)
    double query_accuracy = 0.0;
    double query_macro_f1 = 0.0;
    ParamSet grad_theta;
    ParamSet grad_psi;
};

// frozen self-training selection + target, used by gradient checks (the
// sharpened target is constant by contract, so probes must not re-derive it)
struct StFreeze {
    std::vector<std::int64_t> hc_rows;
    Tensor target;
};

struct EpisodeEvalOptions {
    bool want_grads = false;
    bool train_mode = true;  // false: support prototypes, no CL/ST terms
    const StFreeze* frozen_st = nullptr;
    StFreeze* capture_st = nullptr;
};

class Pipeline {
public:
    Pipeline(const Graph& g, const ModelConfig& cfg) : g_(&g), cfg_(cfg) {
        if (cfg.ablation.sgc_encoder)
            a_hat_ = std::make_shared<SparseMatrix>(sgc_normalized_adjacency(*g.adjacency()));
        else
            hop_ops_ = hop_operators(g, cfg.hops);
    }

    const Graph& graph() const { return *g_; }
    const ModelConfig& config() const { return cfg_; }

    ad::Var encode_nodes(ad::Tape& tape, const ad::Var& x, const ad::TapedParams& theta,
                         const std::vector<std::int64_t>* rows = nullptr) const {
        if (cfg_.ablation.sgc_encoder) return encode_sgc(x, a_hat_, cfg_.sgc_power, theta["enc.W"], rows);
        return encode(x, hop_ops_, theta["enc.W_f"], theta["enc.W_r"], rows);
    }

    // node embeddings under the prior parameters, off-tape
    Tensor embed_all(const MetaState& state) const {
        ad::Tape tape;
        ad::TapedParams theta(tape, state.theta);
        return encode_nodes(tape, ad::constant(tape, g_->features()), theta).value();
    }

    struct TapeEval {
        ad::Var total, query_ce, contrastive, self_training, psi_reg, query_logits;
    };

    // the full objective on a caller-provided tape; gradient checks build on
    // this directly
    TapeEval episode_terms(ad::Tape& tape, const Episode& ep, const ad::TapedParams& theta,
                           const ad::TapedParams* psi, const ModelConfig& mcfg, std::uint64_t ep_seed,
                           const EpisodeEvalOptions& opt = {}) const {
        using namespace ad;
        const HyperParams& hp = mcfg.hyper;
        const Ablation& ab = mcfg.ablation;
        const std::int64_t n_way = ep.n_way();
        if (!ab.no_s2 && psi == nullptr) throw std::logic_error("episode_terms: psi required unless no_s2");

        const char* phase = "encode";
        try {
            Var x = constant(tape, g_->features());
            Var z = encode_nodes(tape, x, theta);

            // prototypes: all labeled nodes of each class during meta-training,
            // support nodes only at meta-test/validation
            phase = "prototypes";
            std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(n_way));
            if (opt.train_mode) {
                for (std::size_t j = 0; j < members.size(); ++j) members[j] = g_->nodes_of_class(ep.classes[j]);
            } else {
                for (std::size_t j = 0; j < members.size(); ++j)
                    for (auto [v, label] : ep.support)
                        if (label == ep.classes[j]) members[j].push_back(v);
            }
            Var p_ep = prototypes(z, members);

            phase = "proto_init";
            Var phi0;
            if (ab.no_pi) {
                Rng rng(sub_seed(ep_seed, 0xF1));
                phi0 = constant(tape, xavier_uniform({n_way, mcfg.d_hidden}, rng));
            } else {
                phi0 = proto_init(p_ep, theta);
            }

            std::vector<std::int64_t> sup_ids, sup_idx, query_ids, query_idx;
            for (auto [v, label] : ep.support) {
                sup_ids.push_back(v);
                sup_idx.push_back(ep.class_index(label));
            }
            for (auto [v, label] : ep.query) {
                query_ids.push_back(v);
                query_idx.push_back(ep.class_index(label));
            }

            phase = "adapt_phi";
            Var z_sup = gather_rows(z, sup_ids);
            Var phi_adapted = adapt_phi(phi0, z_sup, sup_idx, theta["head.b"], hp.alpha, hp.phi_steps);

            phase = "contrastive";
            Var cl = scalar_const(tape, 0.0);
            if (opt.train_mode && !ab.no_cl) {
                std::vector<std::int64_t> task_ids = sup_ids, task_idx = sup_idx;
                task_ids.insert(task_ids.end(), query_ids.begin(), query_ids.end());
                task_idx.insert(task_idx.end(), query_idx.begin(), query_idx.end());
                cl = contrastive_loss(gather_rows(z, task_ids), task_idx, p_ep, hp.tau);
            }

            phase = "self_training";
            Var st = scalar_const(tape, 0.0);
            if (opt.train_mode && !ab.no_st && !ep.pool.empty()) {
                Var q_tilde = soft_assign(gather_rows(z, ep.pool), p_ep);
                std::vector<std::int64_t> hc_rows;
                Tensor target;
                if (opt.frozen_st) {
                    hc_rows = opt.frozen_st->hc_rows;
                    target = opt.frozen_st->target;
                } else {
                    hc_rows = select_high_confidence(q_tilde.value(), hp.topk);
                    target = sharpen(gather_rows(q_tilde, hc_rows).value());
                }
                Var q_tilde_hc = gather_rows(q_tilde, hc_rows);
                st = self_training_loss(q_tilde_hc, target);
                if (opt.capture_st) *opt.capture_st = StFreeze{hc_rows, target};
            }

            phase = "s2_modulate";
            TapedParams theta_task = ab.no_s2 ? theta : s2_modulate(z_sup, theta, *psi);

            phase = "inner_update";
            TapedParams theta_adapted =
                inner_update(tape, x, theta_task, phi_adapted, sup_ids, sup_idx, hp.alpha, hp.theta_steps);

            phase = "query";
            Var z_query = encode_nodes(tape, x, theta_adapted, &query_ids);
            Var logits_q = score_logits(z_query, phi_adapted, theta_adapted["head.b"]);
            Var ce_q = cross_entropy(logits_q, query_idx);

            phase = "objective";
            Var reg = scalar_const(tape, 0.0);
            if (!ab.no_s2)
                for (const auto& [_, v] : *psi) reg = add(reg, sum(square(v)));
            Var total = add(add(add(ce_q, mul_scalar(cl, hp.xi)), mul_scalar(st, hp.zeta)), mul_scalar(reg, hp.gamma));
            return TapeEval{total, ce_q, cl, st, reg, logits_q};
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("episode_objective[") + phase + "]: " + e.what());
        }
    }

    EpisodeEval episode_objective(const Episode& ep, const MetaState& state, std::uint64_t ep_seed,
                                  const EpisodeEvalOptions& opt = {}) const {
        using namespace ad;
        Tape tape(state.cfg.hyper.order);
        TapedParams theta(tape, state.theta);
        std::optional<TapedParams> psi;
        if (!state.cfg.ablation.no_s2) psi.emplace(tape, state.psi);

        TapeEval terms = episode_terms(tape, ep, theta, psi ? &*psi : nullptr, state.cfg, ep_seed, opt);

        EpisodeEval out;
        out.loss = {terms.total.value().values[0], terms.query_ce.value().values[0],
                    terms.contrastive.value().values[0], terms.self_training.value().values[0],
                    terms.psi_reg.value().values[0]};
        auto pred_idx = argmax_rows(terms.query_logits.value());
        out.query_pred.reserve(pred_idx.size());
        for (auto pi : pred_idx) out.query_pred.push_back(ep.classes[static_cast<std::size_t>(pi)]);
        std::vector<std::int64_t> query_labels;
        for (auto [_, label] : ep.query) query_labels.push_back(label);
        out.query_accuracy = accuracy(out.query_pred, query_labels);
        out.query_macro_f1 = macro_f1(out.query_pred, query_labels, ep.classes);

        if (opt.want_grads) {
            out.grad_theta = backward_params(terms.total, theta);
            out.grad_psi = state.cfg.ablation.no_s2 ? ParamSet{} : backward_params(terms.total, *psi);
        }
        return out;
    }

    // meta-test / validation path: support prototypes, no CL/ST
    EpisodeEval adapt_and_predict(const Episode& ep, const MetaState& state, std::uint64_t ep_seed) const {
        EpisodeEvalOptions opt;
        opt.train_mode = false;
        return episode_objective(ep, state, ep_seed, opt);
    }

private:
    ad::TapedParams inner_update(ad::Tape& tape, const ad::Var& x, const ad::TapedParams& theta_task,
                                 const ad::Var& phi, const std::vector<std::int64_t>& sup_ids,
                                 const std::vector<std::int64_t>& sup_idx, double alpha,
                                 std::int64_t steps) const {
        using namespace ad;
        // alias each entry so the inner gradient is the partial derivative of
        // the support loss in the parameters' explicit positions: phi and the
        // shared encoding depend on the same leaves, and those paths must not
        // leak into the update
        TapedParams cur;
        for (const auto& [name, var] : theta_task) cur.add(name, reshape(var, var.shape()));
        for (std::int64_t s = 0; s < steps; ++s) {
            Var z_sup = encode_nodes(tape, x, cur, &sup_ids);
            Var loss = cross_entropy(score_logits(z_sup, phi, cur["head.b"]), sup_idx);
            std::vector<Var> wrt = cur.vars();
            std::vector<Var> grads = backward(loss, wrt);
            TapedParams next;
            std::size_t i = 0;
            for (const auto& [name, var] : cur) {
                Var g = grads[i++];
                if (tape.mode() == Mode::FirstOrder) g = detach(g);
                next.add(name, sub(var, mul_scalar(g, alpha)));
            }
            cur = std::move(next);
        }
        return cur;
    }

    const Graph* g_;
    ModelConfig cfg_;
    std::vector<std::shared_ptr<const SparseMatrix>> hop_ops_;
    std::shared_ptr<const SparseMatrix> a_hat_;
};

// ---- meta-training -----------------------------------------------------------

struct TrainSchedule {
    std::int64_t max_epochs = 500;
    std::int64_t batch_size = 10;
    std::int64_t patience = 50;      // epochs of non-improving validation loss
    std::int64_t val_episodes = 20;  // 0 disables validation and early stopping
    EpisodeSpec episode;             // split is forced to "train"
    std::uint64_t seed = 0;
};

struct BatchRecord {
    std::int64_t epoch = 0;
    std::int64_t batch = 0;
    double total = 0, ce = 0, cl_term = 0, st_term = 0, reg_term = 0;
    double val_acc = -1.0, val_loss = -1.0;  // -1 when validation is disabled
};

struct TrainResult {
    MetaState state;  // best-validation snapshot (final state when no validation)
    std::vector<BatchRecord> log;
    std::int64_t best_epoch = -1;
    double best_val_acc = -1.0;
    std::int64_t epochs_run = 0;
};

inline TrainResult meta_train(const Graph& g, MetaState state, const TrainSchedule& sched) {
    Pipeline pipe(g, state.cfg);
    const HyperParams& hp = state.cfg.hyper;

    EpisodeSpec train_spec = sched.episode;
    train_spec.split = "train";
    EpisodeStream stream(g, train_spec, sched.batch_size, sub_seed(sched.seed, 0x7121));

    std::vector<Episode> val_eps;
    if (sched.val_episodes > 0) {
        EpisodeSpec val_spec = sched.episode;
        val_spec.split = "val";
        for (std::int64_t i = 0; i < sched.val_episodes; ++i)
            val_eps.push_back(sample_episode(g, val_spec, sub_seed(sched.seed, 0x7a1, static_cast<std::uint64_t>(i))));
    }

    TrainResult result;
    result.state = state;
    double best_val_loss = std::numeric_limits<double>::infinity();
    std::int64_t stale = 0;

    for (std::int64_t epoch = 0; epoch < sched.max_epochs; ++epoch) {
        std::vector<Episode> batch = stream.batch(epoch);
        ParamSet grad_theta = state.theta.zeros_like();
        ParamSet grad_psi = state.psi.zeros_like();
        BatchRecord rec;
        rec.epoch = rec.batch = epoch;

        for (std::size_t i = 0; i < batch.size(); ++i) {  // fixed reduction order
            EpisodeEvalOptions opt;
            opt.want_grads = true;
            EpisodeEval ev;
            try {
                ev = pipe.episode_objective(batch[i], state, sub_seed(sched.seed, static_cast<std::uint64_t>(epoch), i),
                                            opt);
            } catch (const std::exception& e) {
                throw std::runtime_error("meta_train: epoch " + std::to_string(epoch) + " episode " +
                                         std::to_string(i) + ": " + e.what());
            }
            if (!std::isfinite(ev.loss.total))
                throw std::runtime_error("meta_train: non-finite loss at epoch " + std::to_string(epoch) +
                                         " episode " + std::to_string(i));
            grad_theta.axpy(1.0, ev.grad_theta);
            if (!state.psi.empty()) grad_psi.axpy(1.0, ev.grad_psi);
            rec.total += ev.loss.total;
            rec.ce += ev.loss.query_ce;
            rec.cl_term += hp.xi * ev.loss.contrastive;
            rec.st_term += hp.zeta * ev.loss.self_training;
            rec.reg_term += hp.gamma * ev.loss.psi_reg;
        }

        state.theta.axpy(-hp.beta, grad_theta);
        if (!state.psi.empty()) state.psi.axpy(-hp.beta, grad_psi);
        result.epochs_run = epoch + 1;

        if (!val_eps.empty()) {
            double acc = 0.0, loss = 0.0;
            for (std::size_t i = 0; i < val_eps.size(); ++i) {
                EpisodeEval ev = pipe.adapt_and_predict(val_eps[i], state, sub_seed(sched.seed, 0x7a2, i));
                acc += ev.query_accuracy;
                loss += ev.loss.query_ce;
            }
            acc /= static_cast<double>(val_eps.size());
            loss /= static_cast<double>(val_eps.size());
            rec.val_acc = acc;
            rec.val_loss = loss;
            if (acc > result.best_val_acc) {
                result.best_val_acc = acc;
                result.best_epoch = epoch;
                result.state = state;
            }
            if (loss < best_val_loss) {
                best_val_loss = loss;
                stale = 0;
            } else {
                ++stale;
            }
            result.log.push_back(rec);
            if (stale >= sched.patience) break;
        } else {
            result.log.push_back(rec);
        }
    }

    if (val_eps.empty()) result.state = state;
    return result;
}

// ---- meta-testing --------------------------------------------------------------

struct TaskRecord {
    std::int64_t repeat = 0, task = 0;
    double accuracy = 0.0, macro_f1 = 0.0;
};

struct MetricsReport {
    std::vector<double> acc_per_repeat, f1_per_repeat;
    double acc_mean = 0, acc_std = 0, f1_mean = 0, f1_std = 0;
    std::optional<double> sc, db;
    double wall_clock_sec = 0;
    std::vector<TaskRecord> records;
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

} // namespace detail

inline MetricsReport meta_test(const Graph& g, const MetaState& state, std::int64_t n_tasks, std::int64_t repeats,
                               const EpisodeSpec& spec, std::uint64_t seed, double noise_ratio = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    Pipeline pipe(g, state.cfg);
    MetricsReport report;
    for (std::int64_t r = 0; r < repeats; ++r) {
        double acc = 0.0, f1 = 0.0;
        for (std::int64_t t = 0; t < n_tasks; ++t) {
            Episode ep = sample_episode(g, spec, sub_seed(seed, static_cast<std::uint64_t>(r),
                                                          static_cast<std::uint64_t>(t) + 1));
            if (noise_ratio > 0.0)
                ep = inject_noise(ep, g, spec.split, noise_ratio,
                                  sub_seed(seed ^ 0x90315eULL, static_cast<std::uint64_t>(r),
                                           static_cast<std::uint64_t>(t) + 1));
            EpisodeEval ev = pipe.adapt_and_predict(ep, state,
                                                    sub_seed(seed, 0xEE, static_cast<std::uint64_t>(r * n_tasks + t)));
            acc += ev.query_accuracy;
            f1 += ev.query_macro_f1;
            report.records.push_back({r, t, ev.query_accuracy, ev.query_macro_f1});
        }
        report.acc_per_repeat.push_back(acc / static_cast<double>(n_tasks));
        report.f1_per_repeat.push_back(f1 / static_cast<double>(n_tasks));
    }
    std::tie(report.acc_mean, report.acc_std) = detail::mean_std(report.acc_per_repeat);
    std::tie(report.f1_mean, report.f1_std) = detail::mean_std(report.f1_per_repeat);
    report.wall_clock_sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

} // namespace metagps
