#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "metagps/metalearner.hpp"

namespace metagps {

inline nlohmann::json hyper_to_json(const HyperParams& hp) {
    return {{"alpha", hp.alpha},
            {"beta", hp.beta},
            {"xi", hp.xi},
            {"zeta", hp.zeta},
            {"gamma", hp.gamma},
            {"tau", hp.tau},
            {"topk", hp.topk},
            {"phi_steps", hp.phi_steps},
            {"theta_steps", hp.theta_steps},
            {"order", hp.order == ad::Mode::ExactSecondOrder ? "exact" : "first"}};
}

inline HyperParams hyper_from_json(const nlohmann::json& j) {
    HyperParams hp;
    hp.alpha = j.at("alpha").get<double>();
    hp.beta = j.at("beta").get<double>();
    hp.xi = j.at("xi").get<double>();
    hp.zeta = j.at("zeta").get<double>();
    hp.gamma = j.at("gamma").get<double>();
    hp.tau = j.at("tau").get<double>();
    hp.topk = j.at("topk").get<std::int64_t>();
    hp.phi_steps = j.at("phi_steps").get<std::int64_t>();
    hp.theta_steps = j.at("theta_steps").get<std::int64_t>();
    const std::string order = j.at("order").get<std::string>();
    if (order != "first" && order != "exact") throw std::invalid_argument("hyper: order must be first|exact");
    hp.order = order == "exact" ? ad::Mode::ExactSecondOrder : ad::Mode::FirstOrder;
    return hp;
}

inline nlohmann::json model_config_to_json(const ModelConfig& cfg) {
    nlohmann::json j = hyper_to_json(cfg.hyper);
    j["d_hidden"] = cfg.d_hidden;
    j["hops"] = cfg.hops;
    j["sgc_power"] = cfg.sgc_power;
    j["proto_hidden"] = cfg.proto_hidden;
    j["s2_hidden"] = cfg.s2_hidden;
    j["n_way"] = cfg.n_way;
    j["no_st"] = cfg.ablation.no_st;
    j["no_s2"] = cfg.ablation.no_s2;
    j["sgc_encoder"] = cfg.ablation.sgc_encoder;
    j["no_cl"] = cfg.ablation.no_cl;
    j["no_pi"] = cfg.ablation.no_pi;
    return j;
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig cfg;
    cfg.hyper = hyper_from_json(j);
    cfg.d_hidden = j.at("d_hidden").get<std::int64_t>();
    cfg.hops = j.at("hops").get<std::int64_t>();
    cfg.sgc_power = j.at("sgc_power").get<std::int64_t>();
    cfg.proto_hidden = j.at("proto_hidden").get<std::int64_t>();
    cfg.s2_hidden = j.at("s2_hidden").get<std::int64_t>();
    cfg.n_way = j.at("n_way").get<std::int64_t>();
    cfg.ablation.no_st = j.at("no_st").get<bool>();
    cfg.ablation.no_s2 = j.at("no_s2").get<bool>();
    cfg.ablation.sgc_encoder = j.at("sgc_encoder").get<bool>();
    cfg.ablation.no_cl = j.at("no_cl").get<bool>();
    cfg.ablation.no_pi = j.at("no_pi").get<bool>();
    return cfg;
}

inline nlohmann::json paramset_to_json(const ParamSet& ps) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [name, t] : ps) arr.push_back({{"name", name}, {"shape", t.shape}, {"values", t.values}});
    return arr;
}

inline ParamSet paramset_from_json(const nlohmann::json& arr) {
    ParamSet ps;
    for (const auto& e : arr)
        ps.add(e.at("name").get<std::string>(),
               Tensor(e.at("shape").get<Shape>(), e.at("values").get<std::vector<double>>()));
    return ps;
}

struct RngState {
    std::uint64_t root_seed = 0;
    std::int64_t next_epoch = 0;
};

inline void save_checkpoint(const MetaState& state, const RngState& rng, const std::filesystem::path& path) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["config"] = model_config_to_json(state.cfg);
    j["theta"] = paramset_to_json(state.theta);
    j["psi"] = paramset_to_json(state.psi);
    j["rng"] = {{"root_seed", rng.root_seed}, {"next_epoch", rng.next_epoch}};
    std::ofstream f(path);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
    f << j.dump(1) << "\n";
}

inline std::pair<MetaState, RngState> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path.string());
    nlohmann::json j;
    f >> j;
    if (j.at("format_version").get<int>() != 1) throw std::runtime_error("load_checkpoint: unsupported version");
    MetaState state;
    state.cfg = model_config_from_json(j.at("config"));
    state.theta = paramset_from_json(j.at("theta"));
    state.psi = paramset_from_json(j.at("psi"));
    RngState rng;
    rng.root_seed = j.at("rng").at("root_seed").get<std::uint64_t>();
    rng.next_epoch = j.at("rng").at("next_epoch").get<std::int64_t>();
    return {std::move(state), rng};
}

} // namespace metagps
