#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "metagps/config.hpp"
#include "metagps/graph_io.hpp"
#include "metagps/selfcheck.hpp"

namespace fs = std::filesystem;
using namespace metagps;

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

Config resolve_config(const CommonOpts& opts) {
    std::ifstream f(opts.config_path);
    if (!f) throw std::invalid_argument("config: cannot open " + opts.config_path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: " + opts.config_path + ": " + e.what());
    }
    for (const auto& kv : opts.overrides) j = apply_override(std::move(j), kv);
    Config cfg = config_from_json(j);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.out) cfg.out = *opts.out;
    return cfg;
}

Graph obtain_graph(const Config& cfg) {
    if (!cfg.dataset.empty()) return load_graph(cfg.dataset);
    return generate_sbm(*cfg.generator, cfg.generator_seed);
}

nlohmann::json report_to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["acc_per_repeat"] = r.acc_per_repeat;
    j["f1_per_repeat"] = r.f1_per_repeat;
    j["acc_mean"] = r.acc_mean;
    j["acc_std"] = r.acc_std;
    j["f1_mean"] = r.f1_mean;
    j["f1_std"] = r.f1_std;
    if (r.sc) j["sc"] = *r.sc;
    if (r.db) j["db"] = *r.db;
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& t : r.records)
        recs.push_back({{"repeat", t.repeat}, {"task", t.task}, {"acc", t.accuracy}, {"f1", t.macro_f1}});
    j["records"] = std::move(recs);
    return j; // wall clock goes to stderr: reports must be byte-stable across runs
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
    f << text;
}

void write_train_outputs(const Config& cfg, const TrainResult& result, const fs::path& outdir) {
    fs::create_directories(outdir);
    std::ofstream log(outdir / "log.jsonl");
    log << nlohmann::json{{"config", config_to_json(cfg)}}.dump() << "\n";
    for (const auto& rec : result.log) {
        nlohmann::json j{{"epoch", rec.epoch},     {"batch", rec.batch},       {"total", rec.total},
                         {"ce", rec.ce},           {"cl_term", rec.cl_term},   {"st_term", rec.st_term},
                         {"reg_term", rec.reg_term}};
        if (rec.val_acc >= 0.0) {
            j["val_acc"] = rec.val_acc;
            j["val_loss"] = rec.val_loss;
        }
        log << j.dump() << "\n";
    }
    save_checkpoint(result.state, RngState{cfg.seed, result.epochs_run}, outdir / "checkpoint.json");
}

MetricsReport run_eval(const Graph& g, const MetaState& state, const Config& cfg, bool embedding_metrics) {
    EpisodeSpec spec = cfg.episode_spec("test");
    MetricsReport report =
        meta_test(g, state, cfg.test_tasks, cfg.test_repeats, spec, sub_seed(cfg.seed, 0x7e57), cfg.noise_ratio);
    if (embedding_metrics) {
        Pipeline pipe(g, state.cfg);
        Tensor z = pipe.embed_all(state);
        std::vector<std::int64_t> ids;
        for (auto c : g.split().test)
            for (auto v : g.nodes_of_class(c)) ids.push_back(v);
        std::sort(ids.begin(), ids.end());
        if (!ids.empty()) {
            Tensor sub({static_cast<std::int64_t>(ids.size()), z.shape[1]});
            std::vector<std::int64_t> labels;
            for (std::size_t i = 0; i < ids.size(); ++i) {
                for (std::int64_t jj = 0; jj < z.shape[1]; ++jj)
                    sub.at(static_cast<std::int64_t>(i), jj) = z.at(ids[i], jj);
                labels.push_back(g.labels()[static_cast<std::size_t>(ids[i])]);
            }
            std::set<std::int64_t> uniq(labels.begin(), labels.end());
            if (uniq.size() >= 2) {
                report.sc = silhouette(sub, labels);
                report.db = davies_bouldin(sub, labels);
            }
        }
    }
    return report;
}

int cmd_train(const CommonOpts& opts) {
    Config cfg = resolve_config(opts);
    Graph g = obtain_graph(cfg);
    MetaState st = init_meta_state(g.feature_dim(), cfg.model, cfg.seed);
    TrainResult result = meta_train(g, std::move(st), cfg.schedule());
    write_train_outputs(cfg, result, cfg.out);
    std::cerr << "trained " << result.epochs_run << " epochs";
    if (result.best_epoch >= 0)
        std::cerr << ", best val acc " << result.best_val_acc << " at epoch " << result.best_epoch;
    std::cerr << "\n";
    std::cout << "checkpoint: " << (fs::path(cfg.out) / "checkpoint.json").string() << "\n";
    return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint) {
    Config cfg = resolve_config(opts);
    Graph g = obtain_graph(cfg);
    auto [state, rng] = load_checkpoint(checkpoint);
    MetricsReport report = run_eval(g, state, cfg, true);
    nlohmann::json j = report_to_json(report);
    write_text(fs::path(cfg.out) / "report.json", j.dump(1) + "\n");
    std::cout << j.dump(1) << "\n";
    std::cerr << "wall clock: " << report.wall_clock_sec << " s\n";
    return 0;
}

int cmd_generate(const SbmSpec& spec, std::uint64_t seed, const std::string& out) {
    Graph g = generate_sbm(spec, seed);
    save_graph(g, out);
    std::cerr << "generated " << g.n() << " nodes, " << g.edges().size() << " edges, homophily "
              << node_homophily(g) << "\n";
    std::cout << out << "\n";
    return 0;
}

int cmd_ablate(const CommonOpts& opts) {
    Config base = resolve_config(opts);
    Graph g = obtain_graph(base);
    struct Variant {
        const char* name;
        void (*apply)(Ablation&);
    };
    const Variant variants[] = {
        {"full", [](Ablation&) {}},
        {"w/o ST", [](Ablation& a) { a.no_st = true; }},
        {"w/o S2", [](Ablation& a) { a.no_s2 = true; }},
        {"w/o SGC", [](Ablation& a) { a.sgc_encoder = true; }},
        {"w/o CL", [](Ablation& a) { a.no_cl = true; }},
        {"w/o PI", [](Ablation& a) { a.no_pi = true; }},
    };
    nlohmann::json rows = nlohmann::json::array();
    std::cout << "variant      acc_mean  acc_std   f1_mean   f1_std\n";
    for (const auto& v : variants) {
        Config cfg = base;
        v.apply(cfg.model.ablation);
        MetaState st = init_meta_state(g.feature_dim(), cfg.model, cfg.seed);
        TrainResult tr = meta_train(g, std::move(st), cfg.schedule());
        MetricsReport r = run_eval(g, tr.state, cfg, false);
        std::printf("%-12s %.4f    %.4f    %.4f    %.4f\n", v.name, r.acc_mean, r.acc_std, r.f1_mean, r.f1_std);
        std::fflush(stdout);
        rows.push_back({{"variant", v.name},
                        {"acc_mean", r.acc_mean},
                        {"acc_std", r.acc_std},
                        {"f1_mean", r.f1_mean},
                        {"f1_std", r.f1_std}});
    }
    write_text(fs::path(base.out) / "ablation.json", rows.dump(1) + "\n");
    return 0;
}

int cmd_noise_sweep(const CommonOpts& opts) {
    Config cfg = resolve_config(opts);
    Graph g = obtain_graph(cfg);
    MetaState st = init_meta_state(g.feature_dim(), cfg.model, cfg.seed);
    TrainResult tr = meta_train(g, std::move(st), cfg.schedule());
    nlohmann::json rows = nlohmann::json::array();
    std::cout << "ratio  acc_mean  acc_std   f1_mean\n";
    for (double ratio : {0.0, 0.1, 0.2, 0.3}) {
        Config c = cfg;
        c.noise_ratio = ratio;
        MetricsReport r = run_eval(g, tr.state, c, false);
        std::printf("%.1f    %.4f    %.4f    %.4f\n", ratio, r.acc_mean, r.acc_std, r.f1_mean);
        std::fflush(stdout);
        rows.push_back({{"ratio", ratio}, {"acc_mean", r.acc_mean}, {"acc_std", r.acc_std}, {"f1_mean", r.f1_mean}});
    }
    write_text(fs::path(cfg.out) / "noise_sweep.json", rows.dump(1) + "\n");
    return 0;
}

int cmd_dump_embeddings(const CommonOpts& opts, const std::string& checkpoint) {
    Config cfg = resolve_config(opts);
    Graph g = obtain_graph(cfg);
    auto [state, rng] = load_checkpoint(checkpoint);
    Pipeline pipe(g, state.cfg);
    Tensor z = pipe.embed_all(state);
    std::ostringstream os;
    os << "node_id,label";
    for (std::int64_t j = 0; j < z.shape[1]; ++j) os << ",z" << j;
    os << "\n";
    for (std::int64_t v = 0; v < z.shape[0]; ++v) {
        os << v << "," << g.labels()[static_cast<std::size_t>(v)];
        for (std::int64_t j = 0; j < z.shape[1]; ++j) os << "," << detail::format_double(z.at(v, j));
        os << "\n";
    }
    fs::path path = fs::path(cfg.out) / "embeddings.csv";
    write_text(path, os.str());
    std::cout << path.string() << "\n";
    return 0;
}

int cmd_check() {
    auto results = selfcheck::run_fast_checks();
    int fails = 0;
    for (const auto& r : results) {
        std::printf("[%s] %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
        fails += !r.pass;
    }
    return fails ? 1 : 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"few-shot node classification on graphs: heterophily-aware encoder, prototype-guided "
                 "meta-learning, contrastive and self-training regularizers, per-task parameter modulation"};
    app.require_subcommand(1);

    CommonOpts opts;
    std::string checkpoint;
    auto add_common = [&](CLI::App* sub, bool need_checkpoint = false) {
        sub->add_option("--config", opts.config_path, "experiment config (json)")->required();
        sub->add_option("--set", opts.overrides, "override config key: key=value (repeatable)");
        sub->add_option("--seed", opts.seed, "override config seed");
        sub->add_option("--out", opts.out, "override output directory");
        if (need_checkpoint) sub->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
    };

    auto* train = app.add_subcommand("train", "meta-train and write checkpoint + jsonl log");
    add_common(train);
    auto* eval = app.add_subcommand("eval", "meta-test a checkpoint and print a metrics report");
    add_common(eval, true);

    SbmSpec gen_spec;
    std::uint64_t gen_seed = 1;
    std::string gen_out = "dataset";
    auto* gen = app.add_subcommand("generate", "write a synthetic block-model dataset directory");
    gen->add_option("--classes", gen_spec.n_classes, "number of classes");
    gen->add_option("--per-class", gen_spec.nodes_per_class, "nodes per class");
    gen->add_option("--p-in", gen_spec.p_in, "intra-class edge probability");
    gen->add_option("--p-out", gen_spec.p_out, "inter-class edge probability");
    gen->add_option("--feature-dim", gen_spec.feature_dim, "feature dimension (>= classes)");
    gen->add_option("--noise", gen_spec.feature_noise, "feature noise stddev");
    gen->add_option("--train-classes", gen_spec.train_classes, "classes in the train split");
    gen->add_option("--val-classes", gen_spec.val_classes, "classes in the val split");
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--out", gen_out, "output directory");

    auto* ablate = app.add_subcommand("ablate", "train and evaluate the full model plus the five ablations");
    add_common(ablate);
    auto* sweep = app.add_subcommand("noise-sweep", "train clean, evaluate under support noise 0/0.1/0.2/0.3");
    add_common(sweep);
    auto* dump = app.add_subcommand("dump-embeddings", "write node embeddings under the prior parameters as csv");
    add_common(dump, true);
    app.add_subcommand("check", "run the gradient and invariant self-check suite");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(opts);
        if (eval->parsed()) return cmd_eval(opts, checkpoint);
        if (gen->parsed()) return cmd_generate(gen_spec, gen_seed, gen_out);
        if (ablate->parsed()) return cmd_ablate(opts);
        if (sweep->parsed()) return cmd_noise_sweep(opts);
        if (dump->parsed()) return cmd_dump_embeddings(opts, checkpoint);
        return cmd_check();
    } catch (const std::invalid_argument& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
