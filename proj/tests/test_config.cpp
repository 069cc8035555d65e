#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "react/config.hpp"

using namespace react;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream out(path);
    out << content;
    return path;
}

} // namespace

TEST_CASE("defaults carry the published hyperparameter table") {
    const RunConfig cfg;
    CHECK(cfg.epochs_pretrain == 3);
    CHECK(cfg.epochs_adv == 3);
    CHECK(cfg.eta_tar == 2e-5);
    CHECK(cfg.eta_sur == 2e-5);
    CHECK(cfg.beta == 0.03);
    CHECK(cfg.batch_size == 2);
    CHECK(cfg.max_seq_len == 512);
    CHECK(cfg.alpha == 0.5);
    CHECK(cfg.lambda_pbc == 1.2);
    CHECK(cfg.delta_same == 0.1);
    CHECK(cfg.delta_diff == 0.3);
    CHECK(cfg.max_new_tokens == 512);
    CHECK(cfg.gen_input_max_len == 4096);
    CHECK(cfg.temperature == 0.7);
    CHECK(cfg.nucleus_p == 0.9);
    CHECK(cfg.tpr_fpr == 0.01);
    CHECK(cfg.decision_threshold == 0.5);
    CHECK(cfg.seed == 66);
}

TEST_CASE("config files parse key = value lines with comments") {
    const auto path = write_temp("cfg_ok.conf",
                                 "# a comment\n"
                                 "alpha = 0.25\n"
                                 "shots=64\n"
                                 "strategy = direct_prompt\n"
                                 "pbc = false\n"
                                 "\n"
                                 "seed = 2025\n");
    const auto cfg = RunConfig::from_file(path);
    CHECK(cfg.alpha == 0.25);
    CHECK(cfg.shots == 64);
    CHECK(cfg.strategy == "direct_prompt");
    CHECK(cfg.pbc == false);
    CHECK(cfg.seed == 2025);
    CHECK(cfg.lambda_pbc == 1.2); // untouched default
}

TEST_CASE("unknown keys are rejected with the line number") {
    const auto path = write_temp("cfg_unknown.conf", "alpha = 0.5\nnot_a_key = 3\n");
    CHECK_THROWS_WITH_AS(RunConfig::from_file(path), doctest::Contains(":2"), Error);
    CHECK_THROWS_WITH_AS(RunConfig::from_file(path), doctest::Contains("not_a_key"), Error);
}

TEST_CASE("malformed values carry the key name") {
    RunConfig cfg;
    CHECK_THROWS_WITH_AS(cfg.set("alpha", "abc"), doctest::Contains("alpha"), Error);
    CHECK_THROWS_WITH_AS(cfg.set("shots", "1.5"), doctest::Contains("shots"), Error);
    CHECK_THROWS_WITH_AS(cfg.set("pbc", "maybe"), doctest::Contains("pbc"), Error);
}

TEST_CASE("to_train_config maps every knob through") {
    RunConfig cfg;
    cfg.shots = 8;
    cfg.alpha = 0.7;
    cfg.eta_tar = 1e-3;
    cfg.eta_sur = 2e-3;
    cfg.beta = 0.01;
    cfg.strategy = "fewshot_prompt";
    cfg.fewshot_k = 2;
    cfg.pbc = false;
    cfg.n_buckets = 256;
    cfg.hidden_dim = 8;
    const auto tc = cfg.to_train_config();
    CHECK(tc.shots == 8);
    CHECK(tc.objective.alpha == 0.7);
    CHECK(tc.objective.pbc_enabled == false);
    CHECK(tc.target_desk.eta == 1e-3);
    CHECK(tc.surrogate_desk.eta == 2e-3);
    CHECK(tc.target_desk.weight_decay == 0.01);
    CHECK(tc.strategy.kind == StrategyKind::fewshot_prompt);
    REQUIRE(tc.strategy.k.has_value());
    CHECK(*tc.strategy.k == 2);
    CHECK(tc.target_desk.n_buckets == 256);
}

TEST_CASE("invalid combinations surface through validation") {
    RunConfig cfg;
    cfg.shots = 7; // odd
    CHECK_THROWS_AS(cfg.to_train_config(), Error);
    cfg = RunConfig{};
    cfg.strategy = "unknown_strategy";
    CHECK_THROWS_AS(cfg.to_train_config(), Error);
    cfg = RunConfig{};
    cfg.temperature = 0.0;
    CHECK_THROWS_AS(cfg.to_train_config(), Error);
}

TEST_CASE("attack_list parses comma-separated names") {
    RunConfig cfg;
    cfg.attacks = "mock, identity";
    const auto list = cfg.attack_list();
    REQUIRE(list.size() == 2);
    CHECK(list[0] == AttackKind::mock);
    CHECK(list[1] == AttackKind::identity);
    cfg.attacks = "";
    CHECK(cfg.attack_list().empty());
    cfg.attacks = "bogus";
    CHECK_THROWS_AS(cfg.attack_list(), Error);
}

TEST_CASE("config snapshot serializes every key") {
    const RunConfig cfg;
    const auto j = cfg.to_json();
    for (const char* key :
         {"alpha", "lambda_pbc", "delta_same", "delta_diff", "eta_tar", "eta_sur", "beta",
          "batch_size", "max_seq_len", "max_new_tokens", "gen_input_max_len", "temperature",
          "nucleus_p", "epochs_pretrain", "epochs_adv", "seed", "strategy", "generator"})
        CHECK(j.contains(key));
}
