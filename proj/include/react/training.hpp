#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "react/attacker.hpp"
#include "react/backbone.hpp"
#include "react/corpus.hpp"
#include "react/generator.hpp"
#include "react/objectives.hpp"
#include "react/retrieval.hpp"
#include "react/types.hpp"

namespace react {

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct SeedBundle {
    std::uint64_t sampling = 66;
    std::uint64_t init = 1;
    std::uint64_t generation = 7;
};

struct TrainConfig {
    int shots = 32;
    int epochs_pretrain = 3;
    int epochs_adversarial = 3;
    int batch_size = 2;         // loss-averaging window for the clean stage
    bool shuffle_pairs = false; // visit order is split order unless enabled
    ObjectiveConfig objective;
    GenerationConfig generation;
    RewriteStrategy strategy{StrategyKind::rag, std::nullopt};
    SeedBundle seeds;
    DeskConfig target_desk;    // eta here is eta_tar, weight_decay is beta
    DeskConfig surrogate_desk; // eta here is eta_sur
    RetryPolicy retry;

    void validate() const {
        if (shots <= 0 || shots % 2 != 0) throw Error("TrainConfig: shots must be a positive even integer");
        if (epochs_pretrain < 0 || epochs_adversarial < 0)
            throw Error("TrainConfig: epoch counts must be >= 0");
        if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
        objective.validate();
        generation.validate();
        strategy.validate();
        target_desk.validate();
        surrogate_desk.validate();
    }
};

struct LossRow {
    std::uint64_t step = 0;
    std::string stage;     // "pretrain" | "adversarial"
    std::string loss_name; // L_ce, L_att, L_ACL, L_PBC, L_det
    double value = 0;
};

inline void write_loss_csv(const std::string& path, const std::vector<LossRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write loss curves: " + path);
    out << "step,stage,loss_name,value\n";
    for (const auto& r : rows)
        out << r.step << "," << r.stage << "," << r.loss_name << "," << format_double(r.value) << "\n";
}

// Observation points for contract tests: invoked after each of the four
// training phases of every pair, with read access to the live state.
enum class PairPhase { A, B, C, D };

struct TrainObserver {
    std::function<void(int epoch, std::size_t pair_index, PairPhase, const DeskClassifier& target,
                       const DeskClassifier& surrogate, const RetrievalPool& pool,
                       const QueryLedger& ledger)>
        on_phase;
    std::function<void(std::string_view)> log;
};

struct TrainState {
    DeskClassifier target;
    DeskClassifier surrogate;
    RetrievalPool pool;
    QueryLedger ledger;
    std::vector<LossRow> loss_curves;
    std::uint64_t step = 0;
    std::uint64_t rewrites_generated = 0;
    std::uint64_t pool_inserts = 0;

    TrainState(DeskClassifier t, DeskClassifier s) : target(std::move(t)), surrogate(std::move(s)) {}
};

// Clean stage: the target fits plain cross-entropy on the split; the
// surrogate is warmed on the same texts against pseudo labels queried from
// the freshly updated target (warm-up queries are ledgered separately from
// the rewrite budget).
inline void pretrain(TrainState& state, const FewShotSplit& split, const TrainConfig& cfg) {
    cfg.validate();
    if (split.train.empty()) throw Error("pretrain: split is empty");
    const std::size_t n = split.train.size();
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs_pretrain; ++epoch) {
        for (std::size_t begin = 0; begin < n; begin += bs) {
            const std::size_t end = std::min(begin + bs, n);
            std::vector<std::string> texts;
            std::vector<Label> labels;
            std::vector<std::uint64_t> steps;
            for (std::size_t i = begin; i < end; ++i) {
                texts.push_back(split.train[i].text);
                labels.push_back(split.train[i].label);
                steps.push_back(++state.step);
            }
            // per-example detector losses recorded at the pre-update state
            std::vector<double> ce_values;
            for (std::size_t i = 0; i < texts.size(); ++i)
                ce_values.push_back(clamped_neg_log(state.target.predict_proba(texts[i]).p(labels[i])));
            {
                auto [loss, grads] = loss_and_grads(state.target, texts,
                                                    CrossEntropyBatchLoss{labels});
                (void)loss;
                state.target.apply_update(grads);
            }
            // surrogate warm-up: pseudo labels from the current target
            std::vector<Label> pseudos;
            std::vector<double> att_values;
            for (std::size_t i = 0; i < texts.size(); ++i) {
                pseudos.push_back(state.target.predict_proba(texts[i]).argmax_tie_mgt());
                state.ledger.charge_warmup();
                att_values.push_back(
                    clamped_neg_log(state.surrogate.predict_proba(texts[i]).p(pseudos[i])));
            }
            auto [loss, grads] = loss_and_grads(state.surrogate, texts,
                                                CrossEntropyBatchLoss{pseudos});
            (void)loss;
            state.surrogate.apply_update(grads);
            // rows stay grouped by step in emission order
            for (std::size_t i = 0; i < texts.size(); ++i) {
                state.loss_curves.push_back({steps[i], "pretrain", "L_ce", ce_values[i]});
                state.loss_curves.push_back({steps[i], "pretrain", "L_att", att_values[i]});
            }
        }
    }
}

// One adversarial epoch: per training pair, in order and with no overlap,
//   A: retrieve anchors, generate the rewrite, query the target once;
//   B: surrogate step on the pseudo-label likelihood (target untouched);
//   C: detector step on the pair objective with the rewrite labeled MGT
//      (surrogate untouched);
//   D: append the rewrite to the pool.
inline void adversarial_epoch(TrainState& state, const FewShotSplit& split, const TrainConfig& cfg,
                              GeneratorBackend& backend, int epoch,
                              const PromptTemplate* rag_template = nullptr,
                              const TrainObserver& observer = {}) {
    cfg.validate();
    if (state.pool.empty()) throw Error("adversarial_epoch: retrieval pool is not initialized");

    std::vector<std::size_t> order(split.train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (cfg.shuffle_pairs) {
        std::mt19937_64 gen(seed_combine(cfg.seeds.generation, 0x8f1eULL,
                                         static_cast<std::uint64_t>(epoch)));
        fisher_yates_shuffle(order, gen);
    }

    RewriteContext ctx;
    ctx.backend = &backend;
    ctx.pool = &state.pool;
    ctx.surrogate = &state.surrogate;
    ctx.demo_source = &split;
    ctx.rag_template = rag_template;
    ctx.retry = cfg.retry;
    ctx.log = observer.log;

    const auto notify = [&](std::size_t idx, PairPhase phase) {
        if (observer.on_phase)
            observer.on_phase(epoch, idx, phase, state.target, state.surrogate, state.pool,
                              state.ledger);
    };

    for (std::size_t visit = 0; visit < order.size(); ++visit) {
        const LabeledExample& x = split.train[order[visit]];
        const std::uint64_t s = ++state.step;

        // Step A
        const std::uint64_t gen_seed =
            seed_combine(cfg.seeds.generation, static_cast<std::uint64_t>(epoch), visit);
        const std::string rewrite_id =
            "e" + std::to_string(epoch) + ":p" + std::to_string(visit) + ":" + x.id;
        RewriteRecord record = rewrite(cfg.strategy, ctx, x, cfg.generation, gen_seed, rewrite_id);
        ++state.rewrites_generated;
        const Label pseudo = pseudo_label(state.target, record, state.ledger);
        notify(visit, PairPhase::A);

        // Step B
        const double att = surrogate_step(state.surrogate, record, pseudo);
        state.loss_curves.push_back({s, "adversarial", "L_att", att});
        notify(visit, PairPhase::B);

        // Step C
        const PairBatch pair{x, record};
        const DetectorLossParts parts = detector_step(state.target, pair, cfg.objective, observer.log);
        state.loss_curves.push_back({s, "adversarial", "L_ACL", parts.acl});
        if (cfg.objective.pbc_enabled)
            state.loss_curves.push_back({s, "adversarial", "L_PBC", parts.pbc});
        state.loss_curves.push_back({s, "adversarial", "L_det", parts.total});
        notify(visit, PairPhase::C);

        // Step D
        insert(state.pool, record);
        ++state.pool_inserts;
        notify(visit, PairPhase::D);
    }
}

struct RunArtifacts {
    std::optional<DeskClassifier> target;
    std::optional<DeskClassifier> surrogate;
    RetrievalPool pool;
    QueryLedger ledger;
    std::vector<LossRow> loss_curves;
    std::uint64_t stage_transition_step = 0; // first adversarial step index
    std::uint64_t steps_total = 0;
    std::uint64_t rewrites_generated = 0;
    std::uint64_t pool_inserts = 0;
    FewShotSplit train_split;
};

nlohmann::json train_config_to_json(const TrainConfig& cfg);

inline nlohmann::json train_config_to_json(const TrainConfig& cfg) {
    return nlohmann::json{
        {"shots", cfg.shots},
        {"epochs_pretrain", cfg.epochs_pretrain},
        {"epochs_adversarial", cfg.epochs_adversarial},
        {"batch_size", cfg.batch_size},
        {"shuffle_pairs", cfg.shuffle_pairs},
        {"alpha", cfg.objective.alpha},
        {"lambda_pbc", cfg.objective.lambda_pbc},
        {"delta_same", cfg.objective.delta_same},
        {"delta_diff", cfg.objective.delta_diff},
        {"pbc_enabled", cfg.objective.pbc_enabled},
        {"max_new_tokens", cfg.generation.max_new_tokens},
        {"gen_input_max_len", cfg.generation.input_max_length},
        {"temperature", cfg.generation.temperature},
        {"nucleus_p", cfg.generation.nucleus_p},
        {"strategy", to_string(cfg.strategy.kind)},
        {"fewshot_k", cfg.strategy.k ? nlohmann::json(*cfg.strategy.k) : nlohmann::json()},
        {"seed", cfg.seeds.sampling},
        {"init_seed", cfg.seeds.init},
        {"gen_seed", cfg.seeds.generation},
        {"eta_tar", cfg.target_desk.eta},
        {"eta_sur", cfg.surrogate_desk.eta},
        {"beta", cfg.target_desk.weight_decay},
        {"max_seq_len", cfg.target_desk.max_tokens},
        {"n_buckets", cfg.target_desk.n_buckets},
        {"hidden_dim", cfg.target_desk.hidden_dim},
    };
}

namespace detail {

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << "\n";
}

inline void write_partial_artifacts(const TrainState& state, const TrainConfig& cfg,
                                    const std::string& out_dir, std::uint64_t stage_transition,
                                    const FewShotSplit& split) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    write_loss_csv(out_dir + "/losses.csv", state.loss_curves);
    if (!state.pool.empty()) state.pool.dump_jsonl(out_dir + "/pool.jsonl");
    write_json_file(out_dir + "/ledger.json",
                    nlohmann::json{{"total_queries", state.ledger.total_queries},
                                   {"warmup_queries", state.ledger.warmup_queries},
                                   {"rewrites_labeled", state.ledger.per_rewrite.size()}});
    write_json_file(out_dir + "/config.json", train_config_to_json(cfg));
    nlohmann::json ids = nlohmann::json::array();
    for (const auto& e : split.train) ids.push_back(e.id);
    write_json_file(out_dir + "/split_train.json",
                    nlohmann::json{{"shots", split.shots}, {"seed", split.seed}, {"ids", ids}});
    write_json_file(out_dir + "/run.json",
                    nlohmann::json{{"stage_transition_step", stage_transition},
                                   {"steps_total", state.step},
                                   {"rewrites_generated", state.rewrites_generated},
                                   {"pool_inserts", state.pool_inserts},
                                   {"pool_size", state.pool.size()}});
}

} // namespace detail

// Full schedule: deterministic sampling, clean pre-training, then the
// adversarial epochs. With out_dir set, artifacts land on disk (including
// everything accumulated so far if a stage aborts).
inline RunArtifacts run_training(const std::vector<LabeledExample>& dataset, const TrainConfig& cfg,
                                 GeneratorBackend& backend, const std::string& out_dir = "",
                                 const PromptTemplate* rag_template = nullptr,
                                 const TrainObserver& observer = {}) {
    cfg.validate();
    const FewShotSplit split = sample_fewshot(dataset, cfg.shots, cfg.seeds.sampling);

    TrainState state(DeskClassifier::seeded_init(cfg.target_desk, seed_combine(cfg.seeds.init, 1)),
                     DeskClassifier::seeded_init(cfg.surrogate_desk, seed_combine(cfg.seeds.init, 2)));
    std::uint64_t stage_transition = 0;

    const auto checkpoint = [&](const std::string& tag) {
        if (out_dir.empty()) return;
        std::filesystem::create_directories(out_dir);
        state.target.save_checkpoint(out_dir + "/target_" + tag + ".ckpt");
        state.surrogate.save_checkpoint(out_dir + "/surrogate_" + tag + ".ckpt");
    };

    try {
        pretrain(state, split, cfg);
        checkpoint("pretrain");
        stage_transition = state.step + 1;
        state.pool = init_pool(split);
        for (int epoch = 0; epoch < cfg.epochs_adversarial; ++epoch) {
            adversarial_epoch(state, split, cfg, backend, epoch, rag_template, observer);
            checkpoint("adv_epoch" + std::to_string(epoch + 1));
        }
    } catch (...) {
        if (!out_dir.empty())
            detail::write_partial_artifacts(state, cfg, out_dir, stage_transition, split);
        throw;
    }

    checkpoint("final");
    if (!out_dir.empty()) detail::write_partial_artifacts(state, cfg, out_dir, stage_transition, split);

    RunArtifacts artifacts;
    artifacts.pool = state.pool;
    artifacts.ledger = state.ledger;
    artifacts.loss_curves = std::move(state.loss_curves);
    artifacts.stage_transition_step = stage_transition;
    artifacts.steps_total = state.step;
    artifacts.rewrites_generated = state.rewrites_generated;
    artifacts.pool_inserts = state.pool_inserts;
    artifacts.train_split = split;
    artifacts.target = std::move(state.target);
    artifacts.surrogate = std::move(state.surrogate);
    return artifacts;
}

} // namespace react
