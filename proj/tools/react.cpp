// Command-line front end: sampling, training, attacking, evaluating, and
// reporting, driven by a flat key=value config file plus flag overrides.
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "react/config.hpp"
#include "react/corpus.hpp"
#include "react/evaluation.hpp"
#include "react/generator.hpp"
#include "react/http_backend.hpp"
#include "react/synthetic.hpp"
#include "react/training.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct ValidationError : react::Error {
    using Error::Error;
};

std::unique_ptr<react::GeneratorBackend> make_backend(const react::RunConfig& cfg) {
    if (cfg.generator == "mock")
        return std::make_unique<react::MockHumanizer>(cfg.mock_marker, cfg.mock_strip_fraction);
    if (cfg.generator == "http") {
        if (cfg.endpoint_url.empty())
            throw ValidationError("generator = http requires endpoint_url");
        return std::make_unique<react::HttpBackend>(
            react::HttpBackend::Options::from_env(cfg.endpoint_url, cfg.http_timeout_ms));
    }
    throw ValidationError("unknown generator \"" + cfg.generator + "\" (accepted: mock, http)");
}

std::vector<react::LabeledExample> load_required_dataset(const react::RunConfig& cfg) {
    if (cfg.dataset.empty()) throw ValidationError("no dataset path configured");
    if (!fs::exists(cfg.dataset)) throw ValidationError("dataset file not found: " + cfg.dataset);
    return react::load_dataset(cfg.dataset);
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw react::Error("cannot write " + path);
    out << j.dump(2) << "\n";
}

json split_manifest(const react::FewShotSplit& split) {
    json ids = json::array();
    for (const auto& e : split.train) ids.push_back(e.id);
    return json{{"shots", split.shots}, {"seed", split.seed}, {"ids", ids}};
}

int cmd_sample(const react::RunConfig& cfg) {
    const auto dataset = load_required_dataset(cfg);
    const auto split = react::sample_fewshot(dataset, cfg.shots, cfg.seed);
    const auto test = react::build_test_split(dataset, cfg.n_test_per_class, cfg.seed, split.ids());

    fs::create_directories(cfg.out_dir);
    const std::string few_path = cfg.out_dir + "/fewshot_shots" + std::to_string(cfg.shots) +
                                 "_seed" + std::to_string(cfg.seed) + ".json";
    write_json(few_path, split_manifest(split));

    json test_ids = json::array();
    for (const auto& e : test.items) test_ids.push_back(e.id);
    const std::string test_path = cfg.out_dir + "/test_n" + std::to_string(cfg.n_test_per_class) +
                                  "_seed" + std::to_string(cfg.seed) + ".json";
    write_json(test_path, json{{"n_per_class", cfg.n_test_per_class},
                               {"seed", cfg.seed},
                               {"excluded", split.train.size()},
                               {"ids", test_ids}});
    std::cout << "wrote " << few_path << " (" << split.train.size() << " items)\n";
    std::cout << "wrote " << test_path << " (" << test.items.size() << " items)\n";
    return 0;
}

int cmd_train(const react::RunConfig& cfg) {
    const auto dataset = load_required_dataset(cfg);
    const auto train_cfg = cfg.to_train_config();
    auto backend = make_backend(cfg);
    std::optional<react::PromptTemplate> templ;
    if (!cfg.template_file.empty()) templ = react::PromptTemplate::from_file(cfg.template_file);

    fs::create_directories(cfg.out_dir);
    write_json(cfg.out_dir + "/run_config.json", cfg.to_json());
    react::TrainObserver observer;
    observer.log = [](std::string_view msg) { std::cerr << "[train] " << msg << "\n"; };

    const auto artifacts = react::run_training(dataset, train_cfg, *backend, cfg.out_dir,
                                               templ ? &*templ : nullptr, observer);
    std::cout << "training complete: " << artifacts.steps_total << " steps, "
              << artifacts.rewrites_generated << " rewrites, pool size " << artifacts.pool.size()
              << ", detector queries " << artifacts.ledger.total_queries << " (+"
              << artifacts.ledger.warmup_queries << " warm-up)\n";
    std::cout << "artifacts in " << cfg.out_dir << "\n";
    return 0;
}

int cmd_eval(const react::RunConfig& cfg, const std::string& checkpoint) {
    if (checkpoint.empty()) throw ValidationError("eval requires --checkpoint");
    if (!fs::exists(checkpoint)) throw ValidationError("checkpoint not found: " + checkpoint);
    const auto dataset = load_required_dataset(cfg);
    const auto target = react::DeskClassifier::load_checkpoint(checkpoint);

    const auto split = react::sample_fewshot(dataset, cfg.shots, cfg.seed);
    const auto test = react::build_test_split(dataset, cfg.n_test_per_class, cfg.seed, split.ids());

    std::unique_ptr<react::GeneratorBackend> backend;
    std::vector<react::AttackConfig> attacks;
    for (const auto kind : cfg.attack_list()) {
        react::AttackConfig attack;
        attack.kind = kind;
        attack.mock_marker = cfg.mock_marker;
        attack.mock_strip_fraction = cfg.mock_strip_fraction;
        attack.generation.max_new_tokens = cfg.max_new_tokens;
        attack.generation.input_max_length = cfg.gen_input_max_len;
        attack.generation.temperature = cfg.temperature;
        attack.generation.nucleus_p = cfg.nucleus_p;
        attack.retry = react::RetryPolicy{cfg.retry_attempts,
                                          std::chrono::milliseconds(cfg.retry_backoff_ms), true};
        attack.demo_source = &split;
        if (kind != react::AttackKind::identity && kind != react::AttackKind::mock) {
            if (!backend) backend = make_backend(cfg);
            attack.backend = backend.get();
        }
        attacks.push_back(std::move(attack));
    }

    const auto log = [](std::string_view msg) { std::cerr << "[eval] " << msg << "\n"; };
    const auto report = react::run_attack_suite(target, test, attacks, cfg.gen_seed,
                                                cfg.decision_threshold, cfg.tpr_fpr, log);

    fs::create_directories(cfg.out_dir);
    write_json(cfg.out_dir + "/eval_report.json", report.to_json());
    react::write_traces_jsonl(cfg.out_dir + "/eval_traces.jsonl", report.traces);
    std::cout << report.to_json().dump(2) << "\n";
    std::cout << "wrote " << cfg.out_dir << "/eval_report.json\n";
    return 0;
}

struct RunSummary {
    std::string dir;
    std::optional<json> eval;
    std::optional<json> run;
    std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> stage_loss_sums;
};

RunSummary read_run_dir(const std::string& dir, bool& missing_any) {
    RunSummary s;
    s.dir = dir;
    const auto try_read = [&](const std::string& name) -> std::optional<json> {
        const std::string path = dir + "/" + name;
        if (!fs::exists(path)) {
            std::cerr << "missing artifact: " << path << "\n";
            missing_any = true;
            return std::nullopt;
        }
        std::ifstream in(path);
        json j;
        in >> j;
        return j;
    };
    s.eval = try_read("eval_report.json");
    s.run = try_read("run.json");

    const std::string losses = dir + "/losses.csv";
    if (!fs::exists(losses)) {
        std::cerr << "missing artifact: " << losses << "\n";
        missing_any = true;
        return s;
    }
    std::ifstream in(losses);
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        std::size_t p1 = line.find(','), p2 = line.find(',', p1 + 1), p3 = line.find(',', p2 + 1);
        if (p3 == std::string::npos) continue;
        const std::string stage = line.substr(p1 + 1, p2 - p1 - 1);
        const std::string name = line.substr(p2 + 1, p3 - p2 - 1);
        const double value = std::strtod(line.c_str() + p3 + 1, nullptr);
        auto& [sum, count] = s.stage_loss_sums[stage][name];
        sum += value;
        ++count;
    }
    return s;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

struct Agg {
    std::vector<double> values;
    void add(double v) { values.push_back(v); }
    double mean() const {
        double s = 0;
        for (double v : values) s += v;
        return values.empty() ? 0 : s / static_cast<double>(values.size());
    }
    double stddev() const {
        if (values.size() < 2) return 0;
        const double m = mean();
        double s = 0;
        for (double v : values) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(values.size() - 1));
    }
};

int cmd_report(const std::vector<std::string>& run_dirs) {
    bool missing_any = false;
    std::vector<RunSummary> runs;
    for (const auto& dir : run_dirs) {
        if (!fs::exists(dir)) {
            std::cerr << "missing run directory: " << dir << "\n";
            missing_any = true;
            continue;
        }
        runs.push_back(read_run_dir(dir, missing_any));
    }
    if (runs.empty()) throw ValidationError("no readable run directories");

    std::map<std::string, Agg> metric_agg;
    std::printf("%-28s %8s %8s %10s %10s\n", "run", "acc", "f1", "tpr@fpr", "avg_asr");
    for (const auto& r : runs) {
        if (!r.eval) {
            std::printf("%-28s %8s %8s %10s %10s\n", r.dir.c_str(), "-", "-", "-", "-");
            continue;
        }
        const json& e = *r.eval;
        const double acc = e.value("accuracy", 0.0);
        const double f1 = e.value("f1", 0.0);
        const double tpr = e["tpr_at_fpr1"].is_null() ? 0.0 : e["tpr_at_fpr1"].get<double>();
        const double asr = e["avg_asr"].is_null() ? std::nan("") : e["avg_asr"].get<double>();
        metric_agg["acc"].add(acc);
        metric_agg["f1"].add(f1);
        metric_agg["tpr"].add(tpr);
        if (!std::isnan(asr)) metric_agg["avg_asr"].add(asr);
        std::printf("%-28s %8s %8s %10s %10s\n", r.dir.c_str(), fmt(acc).c_str(), fmt(f1).c_str(),
                    fmt(tpr).c_str(), std::isnan(asr) ? "-" : fmt(asr).c_str());
        if (e.contains("asr") && !e["asr"].empty()) {
            for (const auto& [name, v] : e["asr"].items()) {
                std::printf("    asr[%s] = %s\n", name.c_str(),
                            v.is_null() ? "undefined (no pre-attack-correct MGTs)" : fmt(v.get<double>()).c_str());
                if (!v.is_null()) metric_agg["asr:" + name].add(v.get<double>());
            }
        }
    }
    if (runs.size() > 1) {
        std::printf("\naggregate over %zu runs (mean +- std):\n", runs.size());
        for (const auto& [name, agg] : metric_agg)
            if (!agg.values.empty())
                std::printf("  %-12s %s +- %s  (n=%zu)\n", name.c_str(), fmt(agg.mean()).c_str(),
                            fmt(agg.stddev()).c_str(), agg.values.size());
    }

    std::printf("\nloss summary (stage means):\n");
    for (const auto& r : runs) {
        std::printf("  %s", r.dir.c_str());
        if (r.run && r.run->contains("stage_transition_step"))
            std::printf("  [stage transition at step %llu]",
                        static_cast<unsigned long long>((*r.run)["stage_transition_step"].get<std::uint64_t>()));
        std::printf("\n");
        for (const auto& [stage, names] : r.stage_loss_sums)
            for (const auto& [name, sc] : names)
                std::printf("    %-12s %-8s mean %s over %zu rows\n", stage.c_str(), name.c_str(),
                            fmt(sc.first / static_cast<double>(sc.second)).c_str(), sc.second);
    }
    return missing_any ? 1 : 0;
}

int cmd_synth(const std::string& out_path, int n_per_class, std::uint64_t seed,
              const std::string& marker) {
    react::SyntheticConfig cfg;
    cfg.n_per_class = n_per_class;
    cfg.seed = seed;
    cfg.marker = marker;
    const auto corpus = react::make_marker_corpus(cfg);
    if (const auto dir = fs::path(out_path).parent_path(); !dir.empty()) fs::create_directories(dir);
    react::write_dataset_jsonl(out_path, corpus);
    std::cout << "wrote " << corpus.size() << " examples to " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"REACT: adversarially trained few-shot machine-generated-text detection"};
    app.require_subcommand(1);

    std::string config_path;
    react::RunConfig cfg;

    // flag overrides applied after the config file is read
    std::map<std::string, std::string> overrides;
    const auto add_override = [&](CLI::App* cmd, const std::string& flag, const std::string& key,
                                  const std::string& help) {
        cmd->add_option_function<std::string>(
            flag, [&overrides, key](const std::string& v) { overrides[key] = v; }, help);
    };

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "flat key = value config file");
        add_override(cmd, "--dataset", "dataset", "dataset jsonl path");
        add_override(cmd, "--out-dir", "out_dir", "artifact output directory");
        add_override(cmd, "--seed", "seed", "sampling seed");
        add_override(cmd, "--shots", "shots", "few-shot training size");
        add_override(cmd, "--generator", "generator", "generator backend: mock | http");
        add_override(cmd, "--strategy", "strategy",
                     "rewrite strategy: rag | direct_prompt | fewshot_prompt | direct_generate");
        add_override(cmd, "--attacks", "attacks", "comma-separated attack list");
        add_override(cmd, "--tpr-fpr", "tpr_fpr", "FPR cap for the TPR sweep");
        add_override(cmd, "--alpha", "alpha", "rewrite term weight in the classification loss");
        add_override(cmd, "--lambda-pbc", "lambda_pbc", "contrastive term weight");
        add_override(cmd, "--delta-same", "delta_same", "same-label cosine margin");
        add_override(cmd, "--delta-diff", "delta_diff", "different-label cosine margin");
        add_override(cmd, "--eta-tar", "eta_tar", "target detector learning rate");
        add_override(cmd, "--eta-sur", "eta_sur", "surrogate detector learning rate");
        add_override(cmd, "--beta", "beta", "decoupled weight decay");
        add_override(cmd, "--batch-size", "batch_size", "clean-stage batch size");
        add_override(cmd, "--max-seq-len", "max_seq_len", "classifier input token cap");
        add_override(cmd, "--max-new-tokens", "max_new_tokens", "generator output budget");
        add_override(cmd, "--gen-input-max-len", "gen_input_max_len", "prompt token budget");
        add_override(cmd, "--temperature", "temperature", "generator sampling temperature");
        add_override(cmd, "--nucleus-p", "nucleus_p", "generator nucleus sampling p");
        add_override(cmd, "--epochs-pretrain", "epochs_pretrain", "clean pre-training epochs");
        add_override(cmd, "--epochs-adv", "epochs_adv", "adversarial epochs");
        add_override(cmd, "--n-test-per-class", "n_test_per_class", "test split size per class");
        add_override(cmd, "--endpoint-url", "endpoint_url", "http generator endpoint");
        add_override(cmd, "--template-file", "template_file", "rewriter prompt template override");
        add_override(cmd, "--fewshot-k", "fewshot_k", "in-context pair count for fewshot_prompt");
        cmd->add_flag_callback("--no-pbc", [&overrides] { overrides["pbc"] = "false"; },
                               "disable the contrastive term");
    };

    auto* sample = app.add_subcommand("sample", "write few-shot and test split manifests");
    add_common(sample);
    auto* train = app.add_subcommand("train", "run the two-stage training schedule");
    add_common(train);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (clean metrics + attacks)");
    add_common(eval);
    std::string checkpoint;
    eval->add_option("--checkpoint", checkpoint, "detector checkpoint to evaluate")->required();

    auto* report = app.add_subcommand("report", "summarize one or more run directories");
    std::vector<std::string> run_dirs;
    report->add_option("dirs", run_dirs, "run directories")->required();

    auto* synth = app.add_subcommand("synth", "write a seeded synthetic marker corpus (hermetic demo data)");
    std::string synth_out = "synthetic.jsonl";
    int synth_n = 200;
    std::uint64_t synth_seed = 1;
    std::string synth_marker{react::kDefaultMarkerToken};
    synth->add_option("--out", synth_out, "output jsonl path");
    synth->add_option("--n-per-class", synth_n, "examples per class");
    synth->add_option("--seed", synth_seed, "corpus seed");
    synth->add_option("--marker", synth_marker, "marker token carried by MGT texts");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1; // flag/usage problems are validation errors
    }

    try {
        try {
            if (!config_path.empty()) cfg = react::RunConfig::from_file(config_path);
            for (const auto& [key, value] : overrides) cfg.set(key, value);
        } catch (const react::Error& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return 1;
        }

        if (sample->parsed()) return cmd_sample(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (eval->parsed()) return cmd_eval(cfg, checkpoint);
        if (report->parsed()) return cmd_report(run_dirs);
        if (synth->parsed()) return cmd_synth(synth_out, synth_n, synth_seed, synth_marker);
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return 2;
    }
}
