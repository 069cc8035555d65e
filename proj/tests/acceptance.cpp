// Acceptance suite: one line per criterion, every tolerance pinned in code.
// Exit code 0 only if every criterion passes inside its runtime budget.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "react/evaluation.hpp"
#include "react/synthetic.hpp"
#include "react/training.hpp"

using namespace react;

namespace {

struct CheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

#define ACHECK(cond, msg)                                                          \
    do {                                                                           \
        if (!(cond)) throw CheckFailure(std::string(msg) + " [" #cond "]");        \
    } while (0)

double rand_unit(std::mt19937_64& gen) { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

// ---------- criterion 1: loss oracles -----------------------------------------

void loss_oracle_suite() {
    std::mt19937_64 gen(20250101);
    for (int i = 0; i < 1000; ++i) {
        const double p = rand_unit(gen);
        const double q = rand_unit(gen);
        const double alpha = 2.0 * rand_unit(gen);

        // attacker loss oracle: plain -log with an explicit floor
        const double att_oracle = -std::log(p > 1e-12 ? p : 1e-12);
        ACHECK(std::abs(clamped_neg_log(p) - att_oracle) <= 1e-9, "attacker loss mismatch");

        // classification-pair loss oracle
        const double acl_oracle = -std::log(p > 1e-12 ? p : 1e-12) -
                                  alpha * std::log(q > 1e-12 ? q : 1e-12);
        ACHECK(std::abs(acl_loss(p, q, alpha) - acl_oracle) <= 1e-9, "acl mismatch");

        // contrastive hinge oracle
        ObjectiveConfig cfg;
        cfg.delta_same = rand_unit(gen);
        cfg.delta_diff = rand_unit(gen);
        cfg.lambda_pbc = 3.0 * rand_unit(gen);
        const double c = 2.0 * rand_unit(gen) - 1.0;
        const bool same = (gen() & 1) != 0;
        const double hinge_same = (1.0 - cfg.delta_same) - c;
        const double hinge_diff = c - cfg.delta_diff;
        const double pbc_oracle = same ? (hinge_same > 0 ? hinge_same : 0.0)
                                       : (hinge_diff > 0 ? hinge_diff : 0.0);
        const Label l = same ? Label::MGT : Label::HWT;
        ACHECK(std::abs(pbc_loss(c, l, Label::MGT, cfg) - pbc_oracle) <= 1e-9, "pbc mismatch");

        // total objective oracle, including the disabled-contrastive path
        const double total_oracle = acl_oracle + cfg.lambda_pbc * pbc_oracle;
        ACHECK(std::abs(total_detector_loss(acl_oracle, pbc_oracle, cfg) - total_oracle) <= 1e-9,
               "total mismatch");
        cfg.pbc_enabled = false;
        ACHECK(total_detector_loss(acl_oracle, pbc_oracle, cfg) == acl_oracle,
               "disabled contrastive path must return the classification term");
    }
    // clamp endpoints
    ACHECK(std::abs(clamped_neg_log(0.0) + std::log(1e-12)) <= 1e-9, "clamp floor");
    ACHECK(clamped_neg_log(1.0) == 0.0, "log 1");
}

// ---------- criterion 2: gradient suite ----------------------------------------

template <typename F>
void check_fd(DeskClassifier& clf, const std::vector<std::string>& texts, const F& functional,
              const char* what) {
    const auto [loss, analytic] = loss_and_grads(clf, texts, functional);
    ACHECK(std::isfinite(loss), "loss must be finite");
    const auto eval = [&]() {
        std::vector<BackboneOutput> outs;
        for (const auto& t : texts) {
            const auto tr = clf.forward_trace(t);
            outs.push_back({tr.prob, tr.hidden});
        }
        return functional.value(std::span<const BackboneOutput>(outs));
    };
    auto& params = clf.mutable_params();
    double worst = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double orig = params[i];
        params[i] = orig + 1e-5;
        const double fp = eval();
        params[i] = orig - 1e-5;
        const double fm = eval();
        params[i] = orig;
        const double fd = (fp - fm) / 2e-5;
        const double diff = std::abs(fd - analytic[i]);
        if (diff <= 1e-8) continue; // roundoff floor on near-zero coordinates
        worst = std::max(worst, diff / std::max(std::abs(fd), std::abs(analytic[i])));
    }
    if (worst >= 1e-4)
        throw CheckFailure(std::string(what) + ": max relative gradient error " +
                           std::to_string(worst));
}

void gradient_suite() {
    const DeskConfig mini{16, 16, 512, 1e-3, 0.0}; // 16-dimensional miniature
    const std::vector<std::string> one = {"stone letter window quiet winter road"};
    const std::vector<std::string> pair = {"the original passage words here",
                                           "the rewritten passage words there"};
    {
        auto clf = DeskClassifier::seeded_init(mini, 101);
        check_fd(clf, one, CrossEntropyBatchLoss{{Label::MGT}}, "cross-entropy");
    }
    {
        auto clf = DeskClassifier::seeded_init(mini, 102);
        check_fd(clf, one, AttackerNllLoss{Label::HWT}, "attacker nll");
    }
    for (const Label l : {Label::HWT, Label::MGT}) {
        auto clf = DeskClassifier::seeded_init(mini, 103);
        ObjectiveConfig cfg;
        cfg.delta_same = 0.0; // hinge active almost surely
        cfg.delta_diff = 0.0;
        check_fd(clf, pair, DetectorPairLoss{l, cfg}, "detector pair objective");
    }
    {
        auto clf = DeskClassifier::seeded_init(mini, 104);
        ObjectiveConfig cfg;
        cfg.pbc_enabled = false; // classification terms alone
        check_fd(clf, pair, DetectorPairLoss{Label::MGT, cfg}, "classification-only objective");
    }
}

// ---------- criterion 3: retrieval suite ----------------------------------------

void retrieval_suite() {
    std::mt19937_64 gen(424242);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = 1 + uniform_below(gen, 1000);
        RetrievalPool pool;
        for (std::size_t i = 0; i < n; ++i)
            pool.append(PoolEntry{"e" + std::to_string(i), "text " + std::to_string(i),
                                  PoolOrigin::seed_train});
        std::vector<double> scores(n);
        // coarse grid on half the trials so ties are common
        const bool coarse = (trial % 2) == 0;
        for (auto& s : scores)
            s = coarse ? static_cast<double>(uniform_below(gen, 8)) / 8.0 : rand_unit(gen);

        const auto anchors = select_anchors(pool, scores);
        std::size_t best_min = 0, best_max = 0;
        for (std::size_t i = 1; i < n; ++i) {
            if (scores[i] < scores[best_min]) best_min = i;
            if (scores[i] > scores[best_max]) best_max = i;
        }
        ACHECK(anchors.h_index == best_min, "argmin anchor mismatch");
        ACHECK(anchors.m_index == best_max, "argmax anchor mismatch");
    }
}

// ---------- criterion 4: alternating-update contract suite ----------------------

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    ACHECK(static_cast<bool>(in), "missing artifact " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void alternating_update_contract_suite() {
    namespace fs = std::filesystem;
    const auto corpus = make_marker_corpus({.n_per_class = 30, .seed = 5});
    TrainConfig cfg;
    cfg.shots = 8;
    cfg.epochs_pretrain = 3;
    cfg.epochs_adversarial = 3;
    const DeskConfig desk{8192, 32, 512, 1e-3, 0.0};
    cfg.target_desk = desk;
    cfg.surrogate_desk = desk;
    cfg.retry = RetryPolicy{3, std::chrono::milliseconds(0), false};
    MockHumanizer backend;

    // (c) per-pair freeze digests, plus (a) per-epoch pool growth
    std::string target_prev, surrogate_prev, surrogate_after_b;
    std::size_t pool_prev = 0;
    std::size_t pairs_seen = 0;
    bool digests_ok = true;
    std::vector<std::size_t> pool_size_at_epoch_end;

    TrainObserver observer;
    observer.on_phase = [&](int epoch, std::size_t pair_index, PairPhase phase,
                            const DeskClassifier& target, const DeskClassifier& surrogate,
                            const RetrievalPool& pool, const QueryLedger&) {
        switch (phase) {
            case PairPhase::A:
                if (pairs_seen == 0 || target_prev.empty()) {
                    target_prev = target.digest();
                    surrogate_prev = surrogate.digest();
                    pool_prev = pool.size();
                }
                digests_ok &= target.digest() == target_prev;
                digests_ok &= surrogate.digest() == surrogate_prev;
                break;
            case PairPhase::B:
                digests_ok &= target.digest() == target_prev; // target frozen in B
                surrogate_after_b = surrogate.digest();
                digests_ok &= surrogate_after_b != surrogate_prev;
                break;
            case PairPhase::C:
                digests_ok &= target.digest() != target_prev;        // target written in C
                digests_ok &= surrogate.digest() == surrogate_after_b; // surrogate frozen in C
                break;
            case PairPhase::D:
                digests_ok &= pool.size() == pool_prev + 1;
                target_prev = target.digest();
                surrogate_prev = surrogate.digest();
                pool_prev = pool.size();
                ++pairs_seen;
                if (pair_index == 7) pool_size_at_epoch_end.push_back(pool.size());
                (void)epoch;
                break;
        }
    };

    const auto dir_a = (fs::temp_directory_path() / "react_acc_a").string();
    const auto dir_b = (fs::temp_directory_path() / "react_acc_b").string();
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);

    const auto arts = run_training(corpus, cfg, backend, dir_a, nullptr, observer);

    ACHECK(digests_ok, "freeze contract digests failed");
    ACHECK(pairs_seen == 24, "expected 3 epochs x 8 pairs");
    ACHECK(pool_size_at_epoch_end == (std::vector<std::size_t>{16, 24, 32}),
           "pool must grow by |D_train| per adversarial epoch");

    // (b) conservation: queries == rewrites == inserts
    ACHECK(arts.ledger.total_queries == arts.rewrites_generated, "queries != rewrites");
    ACHECK(arts.rewrites_generated == arts.pool_inserts, "rewrites != inserts");
    ACHECK(arts.pool.size() == 8 + arts.pool_inserts, "pool size mismatch");
    ACHECK(arts.ledger.per_rewrite.size() == arts.rewrites_generated, "per-rewrite charges");
    for (const auto& [id, n] : arts.ledger.per_rewrite) ACHECK(n == 1, "charge " + id + " != 1");

    // (d) byte-identical rerun
    MockHumanizer backend2;
    run_training(corpus, cfg, backend2, dir_b);
    for (const char* name : {"losses.csv", "pool.jsonl", "ledger.json", "run.json",
                             "target_final.ckpt", "surrogate_final.ckpt"})
        ACHECK(slurp(dir_a + "/" + name) == slurp(dir_b + "/" + name),
               std::string("rerun artifact differs: ") + name);
}

// ---------- criterion 5: metric suite -------------------------------------------

void metric_suite() {
    // accuracy / F1 on all 16 two-item label/prediction patterns
    for (int pattern = 0; pattern < 16; ++pattern) {
        const Label l0 = (pattern & 1) ? Label::MGT : Label::HWT;
        const Label l1 = (pattern & 2) ? Label::MGT : Label::HWT;
        const Label p0 = (pattern & 4) ? Label::MGT : Label::HWT;
        const Label p1 = (pattern & 8) ? Label::MGT : Label::HWT;
        const std::vector<ScoredItem> traces = {
            {"a", l0, p0 == Label::MGT ? 0.9 : 0.1, p0},
            {"b", l1, p1 == Label::MGT ? 0.9 : 0.1, p1},
        };
        int tp = 0, fp = 0, fn = 0, tn = 0;
        for (const auto& t : traces) {
            if (t.true_label == Label::MGT)
                (t.predicted == Label::MGT ? tp : fn)++;
            else
                (t.predicted == Label::MGT ? fp : tn)++;
        }
        const double acc_oracle = (tp + tn) / 2.0;
        const double prec = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
        const double rec = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
        const double f1_oracle = (prec + rec) > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
        const auto c = confusion(traces);
        ACHECK(std::abs(accuracy_of(c) - acc_oracle) < 1e-12, "accuracy pattern mismatch");
        ACHECK(std::abs(f1_of(c) - f1_oracle) < 1e-12, "f1 pattern mismatch");
    }

    // ASR arithmetic on constructed cases
    {
        // marker-only detector: denominator = all marked items, numerator = all stripped flips
        const auto train = make_marker_corpus({.n_per_class = 60, .seed = 13});
        DeskConfig dc{2048, 16, 512, 5e-3, 0.0};
        auto target = DeskClassifier::seeded_init(dc, 5);
        for (int epoch = 0; epoch < 6; ++epoch)
            for (std::size_t i = 0; i + 2 <= train.size(); i += 2) {
                const std::vector<std::string> texts = {train[i].text, train[i + 1].text};
                auto [l, g] = loss_and_grads(
                    target, texts, CrossEntropyBatchLoss{{train[i].label, train[i + 1].label}});
                (void)l;
                target.apply_update(g);
            }
        std::vector<LabeledExample> mgt_items;
        for (const auto& e : make_marker_corpus({.n_per_class = 50, .seed = 777}))
            if (e.label == Label::MGT) mgt_items.push_back(e);

        AttackConfig identity;
        identity.kind = AttackKind::identity;
        const auto id_res = attack_success_rate(target, mgt_items, identity, 3);
        ACHECK(id_res.asr.has_value() && *id_res.asr == 0.0, "identity attack must have ASR 0");

        AttackConfig mock;
        mock.kind = AttackKind::mock;
        const auto mres = attack_success_rate(target, mgt_items, mock, 3);
        ACHECK(mres.asr.has_value(), "mock ASR undefined");
        const double expect =
            static_cast<double>(mres.numerator) / static_cast<double>(mres.denominator);
        ACHECK(std::abs(*mres.asr - expect) < 1e-12, "ASR ratio arithmetic");
        ACHECK(*mres.asr >= 0.0 && *mres.asr <= 1.0, "ASR range");

        // denominator-zero: a threshold nothing clears
        const auto zres = attack_success_rate(DeskClassifier::zero_init(dc), mgt_items, identity,
                                              3, /*threshold=*/0.9);
        ACHECK(zres.denominator == 0 && !zres.asr.has_value(),
               "denominator-zero must be undefined");
    }

    // threshold sweep vs exhaustive oracle on 200 random score sets
    std::mt19937_64 gen(808);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<ScoredItem> traces;
        const bool coarse = (trial % 2) == 0;
        for (int i = 0; i < 60; ++i) {
            const double s = coarse ? static_cast<double>(uniform_below(gen, 12)) / 12.0
                                    : rand_unit(gen);
            traces.push_back({"n", Label::HWT, s, predict_at(s)});
        }
        for (int i = 0; i < 60; ++i) {
            const double s = coarse ? static_cast<double>(uniform_below(gen, 12)) / 12.0
                                    : rand_unit(gen);
            traces.push_back({"p", Label::MGT, s, predict_at(s)});
        }
        const double cap = (trial % 3) == 0 ? 0.01 : 0.05;

        // exhaustive enumeration over every candidate threshold
        std::vector<double> cands;
        for (const auto& t : traces) cands.push_back(t.score_mgt);
        cands.push_back(2.0);
        double oracle = 0.0;
        for (double thr : cands) {
            std::size_t tp = 0, fp = 0;
            for (const auto& t : traces)
                if (t.score_mgt >= thr) (t.true_label == Label::MGT ? tp : fp)++;
            if (static_cast<double>(fp) / 60.0 <= cap)
                oracle = std::max(oracle, static_cast<double>(tp) / 60.0);
        }
        ACHECK(std::abs(tpr_at_fpr(traces, cap) - oracle) < 1e-12, "threshold sweep mismatch");
    }

    // invariance under 20 random strictly increasing transforms
    std::vector<ScoredItem> traces;
    for (int i = 0; i < 70; ++i) {
        const double s = rand_unit(gen);
        traces.push_back({"n", Label::HWT, s, predict_at(s)});
    }
    for (int i = 0; i < 70; ++i) {
        const double s = 0.25 + 0.75 * rand_unit(gen);
        traces.push_back({"p", Label::MGT, s, predict_at(s)});
    }
    const double base = tpr_at_fpr(traces, 0.01);
    for (int k = 0; k < 20; ++k) {
        const double a = 0.1 + 3.0 * rand_unit(gen);
        const double b = 4.0 * rand_unit(gen) - 2.0;
        const int family = k % 4;
        auto mapped = traces;
        for (auto& t : mapped) {
            const double s = t.score_mgt;
            switch (family) {
                case 0: t.score_mgt = a * s + b; break;
                case 1: t.score_mgt = std::tanh(a * s) + b; break;
                case 2: t.score_mgt = s * s * s + a * s + b; break;
                default: t.score_mgt = std::exp(a * s); break;
            }
        }
        ACHECK(tpr_at_fpr(mapped, 0.01) == base, "monotone transform changed the sweep result");
    }
}

// ---------- criterion 6: contrastive hinge geometry -----------------------------

void pbc_geometry() {
    const ObjectiveConfig cfg;
    const auto optimize = [&](bool same_label) {
        std::vector<double> h{1.0, 0.2}, ht{-0.5, 1.0};
        for (int step = 0; step < 500; ++step) {
            const auto cg = pair_cosine_grad(h, ht);
            double dc = 0.0;
            if (same_label && cg.c < 1.0 - cfg.delta_same) dc = -1.0;
            if (!same_label && cg.c > cfg.delta_diff) dc = 1.0;
            if (dc == 0.0) break;
            for (std::size_t i = 0; i < h.size(); ++i) {
                h[i] -= 0.1 * dc * cg.dc_dh[i];
                ht[i] -= 0.1 * dc * cg.dc_dht[i];
            }
        }
        return pair_cosine(h, ht);
    };
    const double c_same = optimize(true);
    const double c_diff = optimize(false);
    ACHECK(c_same >= 1.0 - cfg.delta_same - 1e-3,
           "same-label pairs must reach c >= 1 - delta_same, got c = " + std::to_string(c_same));
    ACHECK(c_diff <= cfg.delta_diff + 1e-3,
           "different-label pairs must reach c <= delta_diff, got c = " + std::to_string(c_diff));
}

// ---------- criteria 7 and 8: synthetic co-evolution benchmark ------------------

struct ArmResult {
    double clean_accuracy = 0.0;
    double mock_asr = 0.0; // undefined collapses to 1.0 (nothing correct pre-attack)
};

ArmResult run_arm(const std::vector<LabeledExample>& corpus, std::uint64_t seed, int pre_epochs,
                  int adv_epochs, StrategyKind strategy, double train_strip_fraction) {
    TrainConfig cfg;
    cfg.shots = 128;
    cfg.epochs_pretrain = pre_epochs;
    cfg.epochs_adversarial = adv_epochs;
    cfg.strategy.kind = strategy;
    cfg.seeds = SeedBundle{seed, seed + 1, seed + 2};
    cfg.target_desk.eta = 1e-3; // desk-scale learning rate; all else at defaults
    cfg.surrogate_desk.eta = 1e-3;
    cfg.retry = RetryPolicy{3, std::chrono::milliseconds(0), false};
    MockHumanizer backend(std::string(kDefaultMarkerToken), train_strip_fraction);
    const auto arts = run_training(corpus, cfg, backend);

    const auto test = build_test_split(corpus, 100, seed, arts.train_split.ids());
    AttackConfig mock;
    mock.kind = AttackKind::mock;
    const auto report = run_attack_suite(*arts.target, test, {mock}, seed + 9);

    ArmResult r;
    r.clean_accuracy = report.accuracy;
    const auto asr = report.asr_per_attack.at("mock");
    r.mock_asr = asr ? *asr : 1.0;
    return r;
}

std::vector<LabeledExample> benchmark_corpus() {
    // short passages concentrate the marker and rewrite-trace signals enough
    // for the pinned desk-scale learning rate to separate them in 3+3 epochs
    return make_marker_corpus({.n_per_class = 300,
                               .seed = 20240901,
                               .marker = std::string(kDefaultMarkerToken),
                               .min_tokens = 6,
                               .max_tokens = 10,
                               .marker_period = 3});
}

void synthetic_coevolution_benchmark() {
    const auto corpus = benchmark_corpus();
    for (const std::uint64_t seed : {66ULL, 2025ULL, 9999ULL}) {
        const auto clean = run_arm(corpus, seed, 6, 0, StrategyKind::rag, 1.0);
        const auto react = run_arm(corpus, seed, 3, 3, StrategyKind::rag, 1.0);
        std::printf("    seed %llu: clean-trained asr %.3f | trained acc %.3f asr %.3f\n",
                    static_cast<unsigned long long>(seed), clean.mock_asr, react.clean_accuracy,
                    react.mock_asr);
        ACHECK(clean.mock_asr >= 0.8, "clean-trained detector must be evadable (ASR >= 0.8), seed " +
                                          std::to_string(seed));
        ACHECK(react.clean_accuracy >= 0.9,
               "adversarially trained detector clean accuracy >= 0.9, seed " + std::to_string(seed));
        ACHECK(react.mock_asr <= 0.3,
               "adversarially trained detector ASR <= 0.3, seed " + std::to_string(seed));
        ACHECK(clean.mock_asr - react.mock_asr >= 0.5,
               "ASR reduction >= 50 points, seed " + std::to_string(seed));
    }
}

void ablation_direction_check() {
    const auto corpus = benchmark_corpus();
    const std::uint64_t seed = 66;
    const auto full = run_arm(corpus, seed, 3, 3, StrategyKind::rag, 1.0);
    // the weaker arm trains with direct prompting and a half-strength rewriter
    const auto worag = run_arm(corpus, seed, 3, 3, StrategyKind::direct_prompt, 0.5);
    std::printf("    full-rag asr %.3f | w/o-rag asr %.3f\n", full.mock_asr, worag.mock_asr);
    ACHECK(worag.mock_asr >= full.mock_asr - 1e-9,
           "w/o-RAG arm must not beat the full arm under the standard attack");
}

// ---------- harness --------------------------------------------------------------

struct Criterion {
    const char* name;
    double budget_seconds;
    std::function<void()> body;
};

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"loss-oracle suite (1e-9, 1000 random inputs per loss)", 5.0, loss_oracle_suite},
        {"gradient suite (central differences, 16-dim miniature, rel 1e-4)", 30.0, gradient_suite},
        {"retrieval suite (500 random pools vs exhaustive scan)", 10.0, retrieval_suite},
        {"alternating-update contract suite (hermetic 8-shot run)", 120.0, alternating_update_contract_suite},
        {"metric suite (confusion patterns, ASR cases, threshold sweep)", 30.0, metric_suite},
        {"contrastive hinge geometry (500 steps, tol 1e-3)", 30.0, pbc_geometry},
        {"synthetic co-evolution benchmark (3 seeds)", 300.0, synthetic_coevolution_benchmark},
        {"ablation direction check (w/o-RAG vs full)", 300.0, ablation_direction_check},
    };

    int failures = 0;
    for (const auto& criterion : criteria) {
        const auto start = std::chrono::steady_clock::now();
        std::string error;
        try {
            criterion.body();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (error.empty() && elapsed > criterion.budget_seconds)
            error = "runtime " + std::to_string(elapsed) + "s exceeds budget " +
                    std::to_string(criterion.budget_seconds) + "s";
        if (error.empty()) {
            std::printf("[PASS] %s (%.2fs)\n", criterion.name, elapsed);
        } else {
            std::printf("[FAIL] %s (%.2fs): %s\n", criterion.name, elapsed, error.c_str());
            ++failures;
        }
        std::fflush(stdout);
    }
    if (failures) {
        std::printf("%d criterion(s) failed\n", failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
