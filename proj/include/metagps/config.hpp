#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>

#include <json.hpp>

#include "metagps/checkpoint.hpp"
#include "metagps/pipeline.hpp"
#include "metagps/sbm.hpp"

namespace metagps {

// Experiment configuration: dataset source, task shape, model and schedule.
// Unknown keys are rejected; missing keys take the library defaults and the
// effective config is echoed into every log.
struct Config {
    std::string dataset;            // directory; empty when generating
    std::optional<SbmSpec> generator;
    std::uint64_t generator_seed = 1;

    std::int64_t n_way = 5;
    std::int64_t k_shot = 5;
    std::int64_t m_query = 10;
    std::int64_t pool_cap = 2048;

    ModelConfig model;

    double noise_ratio = 0.0;
    std::uint64_t seed = 0;
    std::int64_t max_epochs = 500;
    std::int64_t batch_size = 10;
    std::int64_t patience = 50;
    std::int64_t val_episodes = 20;
    std::int64_t test_tasks = 200;
    std::int64_t test_repeats = 10;
    std::string out = "out";

    EpisodeSpec episode_spec(const std::string& split) const {
        EpisodeSpec es;
        es.split = split;
        es.n_way = n_way;
        es.k_shot = k_shot;
        es.m_query = m_query;
        es.pool_cap = pool_cap;
        return es;
    }

    TrainSchedule schedule() const {
        TrainSchedule s;
        s.max_epochs = max_epochs;
        s.batch_size = batch_size;
        s.patience = patience;
        s.val_episodes = val_episodes;
        s.episode = episode_spec("train");
        s.seed = seed;
        return s;
    }
};

namespace detail {

inline SbmSpec sbm_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {"classes",     "per_class", "p_in",          "p_out",
                                               "feature_dim", "noise",     "train_classes", "val_classes"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw std::invalid_argument("config: unknown generator key '" + it.key() + "'");
    SbmSpec s;
    if (j.contains("classes")) s.n_classes = j["classes"].get<std::int64_t>();
    if (j.contains("per_class")) s.nodes_per_class = j["per_class"].get<std::int64_t>();
    if (j.contains("p_in")) s.p_in = j["p_in"].get<double>();
    if (j.contains("p_out")) s.p_out = j["p_out"].get<double>();
    if (j.contains("feature_dim")) s.feature_dim = j["feature_dim"].get<std::int64_t>();
    if (j.contains("noise")) s.feature_noise = j["noise"].get<double>();
    if (j.contains("train_classes")) s.train_classes = j["train_classes"].get<std::int64_t>();
    if (j.contains("val_classes")) s.val_classes = j["val_classes"].get<std::int64_t>();
    return s;
}

inline nlohmann::json sbm_to_json(const SbmSpec& s) {
    return {{"classes", s.n_classes},         {"per_class", s.nodes_per_class}, {"p_in", s.p_in},
            {"p_out", s.p_out},               {"feature_dim", s.feature_dim},   {"noise", s.feature_noise},
            {"train_classes", s.train_classes}, {"val_classes", s.val_classes}};
}

} // namespace detail

inline Config config_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known = {
        "dataset",   "generator",  "generator_seed", "n_way",       "k_shot",       "m_query",
        "pool_cap",  "alpha",      "beta",           "xi",          "zeta",         "gamma",
        "tau",       "topk",       "phi_steps",      "theta_steps", "order",        "d_hidden",
        "hops",      "sgc_power",  "proto_hidden",   "s2_hidden",   "no_st",        "no_s2",
        "sgc_encoder", "no_cl",    "no_pi",          "noise_ratio", "seed",         "max_epochs",
        "batch_size", "patience",  "val_episodes",   "test_tasks",  "test_repeats", "out"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");

    Config c;
    if (j.contains("dataset")) c.dataset = j["dataset"].get<std::string>();
    if (j.contains("generator")) c.generator = detail::sbm_from_json(j["generator"]);
    if (j.contains("generator_seed")) c.generator_seed = j["generator_seed"].get<std::uint64_t>();
    if (c.dataset.empty() && !c.generator) throw std::invalid_argument("config: need 'dataset' or 'generator'");
    if (!c.dataset.empty() && c.generator)
        throw std::invalid_argument("config: 'dataset' and 'generator' are mutually exclusive");

    auto geti = [&](const char* k, std::int64_t& dst) {
        if (j.contains(k)) dst = j[k].get<std::int64_t>();
    };
    auto getd = [&](const char* k, double& dst) {
        if (j.contains(k)) dst = j[k].get<double>();
    };
    auto getb = [&](const char* k, bool& dst) {
        if (j.contains(k)) dst = j[k].get<bool>();
    };
    geti("n_way", c.n_way);
    geti("k_shot", c.k_shot);
    geti("m_query", c.m_query);
    geti("pool_cap", c.pool_cap);
    getd("alpha", c.model.hyper.alpha);
    getd("beta", c.model.hyper.beta);
    getd("xi", c.model.hyper.xi);
    getd("zeta", c.model.hyper.zeta);
    getd("gamma", c.model.hyper.gamma);
    getd("tau", c.model.hyper.tau);
    geti("topk", c.model.hyper.topk);
    geti("phi_steps", c.model.hyper.phi_steps);
    geti("theta_steps", c.model.hyper.theta_steps);
    if (j.contains("order")) {
        const std::string order = j["order"].get<std::string>();
        if (order != "first" && order != "exact") throw std::invalid_argument("config: order must be first|exact");
        c.model.hyper.order = order == "exact" ? ad::Mode::ExactSecondOrder : ad::Mode::FirstOrder;
    }
    geti("d_hidden", c.model.d_hidden);
    geti("hops", c.model.hops);
    geti("sgc_power", c.model.sgc_power);
    geti("proto_hidden", c.model.proto_hidden);
    geti("s2_hidden", c.model.s2_hidden);
    getb("no_st", c.model.ablation.no_st);
    getb("no_s2", c.model.ablation.no_s2);
    getb("sgc_encoder", c.model.ablation.sgc_encoder);
    getb("no_cl", c.model.ablation.no_cl);
    getb("no_pi", c.model.ablation.no_pi);
    getd("noise_ratio", c.noise_ratio);
    if (c.noise_ratio < 0.0 || c.noise_ratio >= 1.0)
        throw std::invalid_argument("config: noise_ratio must lie in [0,1)");
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    geti("max_epochs", c.max_epochs);
    geti("batch_size", c.batch_size);
    geti("patience", c.patience);
    geti("val_episodes", c.val_episodes);
    geti("test_tasks", c.test_tasks);
    geti("test_repeats", c.test_repeats);
    if (j.contains("out")) c.out = j["out"].get<std::string>();
    c.model.n_way = c.n_way;
    return c;
}

// effective config (defaults filled in), echoed to logs
inline nlohmann::json config_to_json(const Config& c) {
    nlohmann::json j = model_config_to_json(c.model);
    j.erase("n_way"); // lives at the top level
    if (!c.dataset.empty()) j["dataset"] = c.dataset;
    if (c.generator) {
        j["generator"] = detail::sbm_to_json(*c.generator);
        j["generator_seed"] = c.generator_seed;
    }
    j["n_way"] = c.n_way;
    j["k_shot"] = c.k_shot;
    j["m_query"] = c.m_query;
    j["pool_cap"] = c.pool_cap;
    j["noise_ratio"] = c.noise_ratio;
    j["seed"] = c.seed;
    j["max_epochs"] = c.max_epochs;
    j["batch_size"] = c.batch_size;
    j["patience"] = c.patience;
    j["val_episodes"] = c.val_episodes;
    j["test_tasks"] = c.test_tasks;
    j["test_repeats"] = c.test_repeats;
    j["out"] = c.out;
    return j;
}

inline Config load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("config: cannot open " + path.string());
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument("config: " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

// `--set key=value` overrides applied to the raw json before parsing
inline nlohmann::json apply_override(nlohmann::json j, const std::string& kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string val = kv.substr(eq + 1);
    nlohmann::json parsed = nlohmann::json::parse(val, nullptr, false);
    if (parsed.is_discarded()) parsed = val; // plain string
    // dotted path descends into nested objects (generator.p_in)
    nlohmann::json* cursor = &j;
    std::size_t start = 0;
    while (true) {
        std::size_t dot = key.find('.', start);
        if (dot == std::string::npos) {
            (*cursor)[key.substr(start)] = parsed;
            break;
        }
        cursor = &(*cursor)[key.substr(start, dot - start)];
        start = dot + 1;
    }
    return j;
}

} // namespace metagps
