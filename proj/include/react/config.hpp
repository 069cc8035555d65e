#pragma once

#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "react/evaluation.hpp"
#include "react/generator.hpp"
#include "react/text.hpp"
#include "react/training.hpp"
#include "react/types.hpp"

namespace react {

// Flat key = value run configuration. Keys mirror the hyperparameter names,
// every key has a default, and unknown keys are rejected. Secrets never
// appear here; the HTTP backend reads its token from the environment.
struct RunConfig {
    std::string dataset;
    std::string out_dir = "runs/run";

    int shots = 32;
    int n_test_per_class = 1000;
    std::uint64_t seed = 66; // sampling seed
    std::uint64_t init_seed = 1;
    std::uint64_t gen_seed = 7;

    int epochs_pretrain = 3;
    int epochs_adv = 3;
    double eta_tar = 2e-5;
    double eta_sur = 2e-5;
    double beta = 0.03; // decoupled weight decay
    int batch_size = 2;
    int max_seq_len = 512;

    double alpha = 0.5;
    double lambda_pbc = 1.2;
    double delta_same = 0.1;
    double delta_diff = 0.3;
    bool pbc = true;

    int max_new_tokens = 512;
    int gen_input_max_len = 4096;
    double temperature = 0.7;
    double nucleus_p = 0.9;

    std::string strategy = "rag";
    int fewshot_k = 3;
    bool shuffle_pairs = false;

    std::string generator = "mock"; // mock | http
    std::string endpoint_url;
    int http_timeout_ms = 30000;
    int retry_attempts = 3;
    int retry_backoff_ms = 200;
    std::string template_file;

    std::string attacks; // comma-separated attack names for eval
    double tpr_fpr = 0.01;
    double decision_threshold = 0.5;

    int n_buckets = 1 << 15;
    int hidden_dim = 64;
    double feature_scale = 16.0;

    std::string mock_marker = std::string(kDefaultMarkerToken);
    double mock_strip_fraction = 1.0;

    // ---- parsing ----

    static RunConfig from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open config file: " + path);
        RunConfig cfg;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string stripped = trim(line);
            if (stripped.empty() || stripped[0] == '#') continue;
            const auto eq = stripped.find('=');
            if (eq == std::string::npos)
                throw Error(path + ":" + std::to_string(lineno) + ": expected key = value");
            const std::string key = trim(stripped.substr(0, eq));
            const std::string value = trim(stripped.substr(eq + 1));
            try {
                cfg.set(key, value);
            } catch (const Error& e) {
                throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) {
        if (key == "dataset") dataset = value;
        else if (key == "out_dir") out_dir = value;
        else if (key == "shots") shots = parse_int(key, value);
        else if (key == "n_test_per_class") n_test_per_class = parse_int(key, value);
        else if (key == "seed") seed = parse_u64(key, value);
        else if (key == "init_seed") init_seed = parse_u64(key, value);
        else if (key == "gen_seed") gen_seed = parse_u64(key, value);
        else if (key == "epochs_pretrain") epochs_pretrain = parse_int(key, value);
        else if (key == "epochs_adv") epochs_adv = parse_int(key, value);
        else if (key == "eta_tar") eta_tar = parse_double(key, value);
        else if (key == "eta_sur") eta_sur = parse_double(key, value);
        else if (key == "beta") beta = parse_double(key, value);
        else if (key == "batch_size") batch_size = parse_int(key, value);
        else if (key == "max_seq_len") max_seq_len = parse_int(key, value);
        else if (key == "alpha") alpha = parse_double(key, value);
        else if (key == "lambda_pbc") lambda_pbc = parse_double(key, value);
        else if (key == "delta_same") delta_same = parse_double(key, value);
        else if (key == "delta_diff") delta_diff = parse_double(key, value);
        else if (key == "pbc") pbc = parse_bool(key, value);
        else if (key == "max_new_tokens") max_new_tokens = parse_int(key, value);
        else if (key == "gen_input_max_len") gen_input_max_len = parse_int(key, value);
        else if (key == "temperature") temperature = parse_double(key, value);
        else if (key == "nucleus_p") nucleus_p = parse_double(key, value);
        else if (key == "strategy") strategy = value;
        else if (key == "fewshot_k") fewshot_k = parse_int(key, value);
        else if (key == "shuffle_pairs") shuffle_pairs = parse_bool(key, value);
        else if (key == "generator") generator = value;
        else if (key == "endpoint_url") endpoint_url = value;
        else if (key == "http_timeout_ms") http_timeout_ms = parse_int(key, value);
        else if (key == "retry_attempts") retry_attempts = parse_int(key, value);
        else if (key == "retry_backoff_ms") retry_backoff_ms = parse_int(key, value);
        else if (key == "template_file") template_file = value;
        else if (key == "attacks") attacks = value;
        else if (key == "tpr_fpr") tpr_fpr = parse_double(key, value);
        else if (key == "decision_threshold") decision_threshold = parse_double(key, value);
        else if (key == "n_buckets") n_buckets = parse_int(key, value);
        else if (key == "hidden_dim") hidden_dim = parse_int(key, value);
        else if (key == "feature_scale") feature_scale = parse_double(key, value);
        else if (key == "mock_marker") mock_marker = value;
        else if (key == "mock_strip_fraction") mock_strip_fraction = parse_double(key, value);
        else throw Error("unknown config key \"" + key + "\"");
    }

    TrainConfig to_train_config() const {
        TrainConfig cfg;
        cfg.shots = shots;
        cfg.epochs_pretrain = epochs_pretrain;
        cfg.epochs_adversarial = epochs_adv;
        cfg.batch_size = batch_size;
        cfg.shuffle_pairs = shuffle_pairs;
        cfg.objective.alpha = alpha;
        cfg.objective.lambda_pbc = lambda_pbc;
        cfg.objective.delta_same = delta_same;
        cfg.objective.delta_diff = delta_diff;
        cfg.objective.pbc_enabled = pbc;
        cfg.generation.max_new_tokens = max_new_tokens;
        cfg.generation.input_max_length = gen_input_max_len;
        cfg.generation.temperature = temperature;
        cfg.generation.nucleus_p = nucleus_p;
        cfg.strategy.kind = strategy_kind_from_string(strategy);
        cfg.strategy.k = cfg.strategy.kind == StrategyKind::fewshot_prompt
                             ? std::optional<int>(fewshot_k)
                             : std::nullopt;
        cfg.seeds = SeedBundle{seed, init_seed, gen_seed};
        cfg.target_desk = DeskConfig{n_buckets, hidden_dim, max_seq_len, eta_tar, beta, feature_scale};
        cfg.surrogate_desk = DeskConfig{n_buckets, hidden_dim, max_seq_len, eta_sur, beta, feature_scale};
        cfg.retry = RetryPolicy{retry_attempts, std::chrono::milliseconds(retry_backoff_ms), true};
        cfg.validate();
        return cfg;
    }

    std::vector<AttackKind> attack_list() const {
        std::vector<AttackKind> out;
        std::string rest = attacks;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const std::string tok = trim(rest.substr(0, comma));
            if (!tok.empty()) out.push_back(attack_kind_from_string(tok));
            if (comma == std::string::npos) break;
            rest = rest.substr(comma + 1);
        }
        return out;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{
            {"dataset", dataset},
            {"out_dir", out_dir},
            {"shots", shots},
            {"n_test_per_class", n_test_per_class},
            {"seed", seed},
            {"init_seed", init_seed},
            {"gen_seed", gen_seed},
            {"epochs_pretrain", epochs_pretrain},
            {"epochs_adv", epochs_adv},
            {"eta_tar", eta_tar},
            {"eta_sur", eta_sur},
            {"beta", beta},
            {"batch_size", batch_size},
            {"max_seq_len", max_seq_len},
            {"alpha", alpha},
            {"lambda_pbc", lambda_pbc},
            {"delta_same", delta_same},
            {"delta_diff", delta_diff},
            {"pbc", pbc},
            {"max_new_tokens", max_new_tokens},
            {"gen_input_max_len", gen_input_max_len},
            {"temperature", temperature},
            {"nucleus_p", nucleus_p},
            {"strategy", strategy},
            {"fewshot_k", fewshot_k},
            {"shuffle_pairs", shuffle_pairs},
            {"generator", generator},
            {"endpoint_url", endpoint_url},
            {"http_timeout_ms", http_timeout_ms},
            {"retry_attempts", retry_attempts},
            {"retry_backoff_ms", retry_backoff_ms},
            {"template_file", template_file},
            {"attacks", attacks},
            {"tpr_fpr", tpr_fpr},
            {"decision_threshold", decision_threshold},
            {"n_buckets", n_buckets},
            {"hidden_dim", hidden_dim},
            {"feature_scale", feature_scale},
            {"mock_marker", mock_marker},
            {"mock_strip_fraction", mock_strip_fraction},
        };
    }

private:
    static int parse_int(const std::string& key, const std::string& value) {
        try {
            std::size_t pos = 0;
            const int v = std::stoi(value, &pos);
            if (pos != value.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("config key \"" + key + "\": expected integer, got \"" + value + "\"");
        }
    }

    static std::uint64_t parse_u64(const std::string& key, const std::string& value) {
        try {
            std::size_t pos = 0;
            const unsigned long long v = std::stoull(value, &pos);
            if (pos != value.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("config key \"" + key + "\": expected unsigned integer, got \"" + value + "\"");
        }
    }

    static double parse_double(const std::string& key, const std::string& value) {
        try {
            std::size_t pos = 0;
            const double v = std::stod(value, &pos);
            if (pos != value.size()) throw Error("");
            return v;
        } catch (...) {
            throw Error("config key \"" + key + "\": expected number, got \"" + value + "\"");
        }
    }

    static bool parse_bool(const std::string& key, const std::string& value) {
        if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
        if (value == "false" || value == "0" || value == "no" || value == "off") return false;
        throw Error("config key \"" + key + "\": expected boolean, got \"" + value + "\"");
    }
};

} // namespace react
