#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "metagps/checkpoint.hpp"
#include "metagps/config.hpp"
#include "metagps/selfcheck.hpp"

using namespace metagps;

TEST_CASE("episode objective identities") {
    selfcheck::ToyCase toy = selfcheck::make_valid_toy(0x9E, ad::Mode::FirstOrder);
    Pipeline pipe(toy.g, toy.cfg);

    SECTION("zero weights reduce the total to the query cross-entropy") {
        MetaState st = toy.st;
        st.cfg.hyper.xi = 0.0;
        st.cfg.hyper.zeta = 0.0;
        st.cfg.hyper.gamma = 0.0;
        EpisodeEval ev = pipe.episode_objective(toy.ep, st, toy.ep_seed);
        CHECK(ev.loss.total == ev.loss.query_ce);
    }
    SECTION("empty pool contributes exactly zero self-training loss") {
        Episode ep = toy.ep;
        ep.pool.clear();
        EpisodeEval ev = pipe.episode_objective(ep, toy.st, toy.ep_seed);
        CHECK(ev.loss.self_training == 0.0);
    }
    SECTION("breakdown reassembles the total") {
        EpisodeEval ev = pipe.episode_objective(toy.ep, toy.st, toy.ep_seed);
        const HyperParams& hp = toy.st.cfg.hyper;
        double rebuilt = ev.loss.query_ce + hp.xi * ev.loss.contrastive + hp.zeta * ev.loss.self_training +
                         hp.gamma * ev.loss.psi_reg;
        CHECK(std::abs(rebuilt - ev.loss.total) <= 1e-12);
    }
    SECTION("alpha = 0 and steps = 0 leave the head and priors unadapted") {
        MetaState frozen = toy.st;
        frozen.cfg.hyper.alpha = 0.0;
        MetaState skipped = toy.st;
        skipped.cfg.hyper.phi_steps = 0;
        skipped.cfg.hyper.theta_steps = 0;
        EpisodeEval a = pipe.episode_objective(toy.ep, frozen, toy.ep_seed);
        EpisodeEval b = pipe.episode_objective(toy.ep, skipped, toy.ep_seed);
        CHECK(a.loss.query_ce == b.loss.query_ce);
        CHECK(a.query_pred == b.query_pred);
    }
}

TEST_CASE("meta_train") {
    selfcheck::ToyCase toy = selfcheck::make_valid_toy(0x3A1, ad::Mode::FirstOrder);
    TrainSchedule sched;
    sched.max_epochs = 3;
    sched.batch_size = 2;
    sched.val_episodes = 0;
    sched.episode.n_way = 2;
    sched.episode.k_shot = 2;
    sched.episode.m_query = 1;
    sched.episode.pool_cap = 4;
    sched.seed = 0x51ED;

    SECTION("zero meta-rate leaves parameters untouched") {
        MetaState st = toy.st;
        st.cfg.hyper.beta = 0.0;
        TrainResult tr = meta_train(toy.g, st, sched);
        CHECK(tr.state.theta.flatten() == st.theta.flatten());
        CHECK(tr.state.psi.flatten() == st.psi.flatten());
        CHECK(tr.log.size() == 3);
    }
    SECTION("log component terms sum to the logged total") {
        TrainResult tr = meta_train(toy.g, toy.st, sched);
        for (const auto& rec : tr.log) {
            double rebuilt = rec.ce + rec.cl_term + rec.st_term + rec.reg_term;
            CHECK(std::abs(rebuilt - rec.total) <= 1e-9);
        }
    }
}

TEST_CASE("meta_test determinism and chance level") {
    selfcheck::ToyCase toy = selfcheck::make_valid_toy(0x77, ad::Mode::FirstOrder);
    EpisodeSpec es;
    es.n_way = 2;
    es.k_shot = 2;
    es.m_query = 1;
    es.pool_cap = 0;
    es.split = "test";
    MetricsReport a = meta_test(toy.g, toy.st, 6, 2, es, 0xBEEF);
    MetricsReport b = meta_test(toy.g, toy.st, 6, 2, es, 0xBEEF);
    CHECK(a.acc_per_repeat == b.acc_per_repeat);
    CHECK(a.f1_per_repeat == b.f1_per_repeat);
    CHECK(a.records.size() == 12);
    CHECK(a.acc_mean >= 0.0);
    CHECK(a.acc_mean <= 1.0);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    namespace fs = std::filesystem;
    selfcheck::ToyCase toy = selfcheck::make_valid_toy(0xC4, ad::Mode::FirstOrder);
    fs::path dir = fs::temp_directory_path() / "metagps_ckpt_test";
    fs::create_directories(dir);
    fs::path p1 = dir / "a.json", p2 = dir / "b.json";

    save_checkpoint(toy.st, RngState{123, 7}, p1);
    auto [loaded, rng] = load_checkpoint(p1);
    CHECK(rng.root_seed == 123);
    CHECK(rng.next_epoch == 7);
    CHECK(loaded.theta.flatten() == toy.st.theta.flatten());
    CHECK(loaded.psi.flatten() == toy.st.psi.flatten());
    CHECK(loaded.cfg.d_hidden == toy.st.cfg.d_hidden);
    CHECK(loaded.cfg.hyper.alpha == toy.st.cfg.hyper.alpha);

    save_checkpoint(loaded, rng, p2);
    std::ifstream f1(p1), f2(p2);
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    fs::remove_all(dir);
}

TEST_CASE("config parsing") {
    SECTION("unknown keys are rejected") {
        nlohmann::json j = {{"generator", {{"classes", 3}}}, {"n_wey", 2}};
        CHECK_THROWS_WITH(config_from_json(j), Catch::Matchers::ContainsSubstring("n_wey"));
    }
    SECTION("defaults are filled and echoed") {
        nlohmann::json j = {{"generator", {{"classes", 4}, {"per_class", 10}}}};
        Config c = config_from_json(j);
        CHECK(c.model.hyper.alpha == 0.5);
        CHECK(c.model.hyper.beta == 0.001);
        CHECK(c.model.hyper.xi == 0.1);
        CHECK(c.model.hyper.zeta == 0.1);
        CHECK(c.model.hyper.gamma == 0.001);
        CHECK(c.model.hyper.tau == 0.5);
        CHECK(c.model.hyper.topk == 30);
        CHECK(c.model.hyper.theta_steps == 5);
        CHECK(c.batch_size == 10);
        CHECK(c.patience == 50);
        nlohmann::json echoed = config_to_json(c);
        CHECK(echoed["alpha"] == 0.5);
        CHECK(echoed["topk"] == 30);
    }
    SECTION("dataset and generator are mutually exclusive") {
        nlohmann::json j = {{"dataset", "x"}, {"generator", {{"classes", 3}}}};
        CHECK_THROWS_AS(config_from_json(j), std::invalid_argument);
    }
    SECTION("overrides descend dotted paths") {
        nlohmann::json j = {{"generator", {{"classes", 4}}}};
        j = apply_override(j, "generator.p_in=0.25");
        j = apply_override(j, "seed=42");
        Config c = config_from_json(j);
        CHECK(c.generator->p_in == 0.25);
        CHECK(c.seed == 42);
    }
}
