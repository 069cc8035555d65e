#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "react/backbone.hpp"
#include "react/corpus.hpp"
#include "react/generator.hpp"
#include "react/types.hpp"

namespace react {

inline constexpr double kDecisionThreshold = 0.5;

struct ScoredItem {
    std::string id;
    Label true_label = Label::HWT;
    double score_mgt = 0.0;
    Label predicted = Label::HWT; // MGT iff score_mgt >= decision threshold
};

inline Label predict_at(double score_mgt, double threshold = kDecisionThreshold) {
    return score_mgt >= threshold ? Label::MGT : Label::HWT;
}

// ---- accuracy / F1 -----------------------------------------------------------

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0; // MGT is the positive class
};

inline ConfusionCounts confusion(const std::vector<ScoredItem>& traces) {
    ConfusionCounts c;
    for (const auto& t : traces) {
        const bool pos_true = t.true_label == Label::MGT;
        const bool pos_pred = t.predicted == Label::MGT;
        if (pos_true && pos_pred) ++c.tp;
        else if (!pos_true && pos_pred) ++c.fp;
        else if (pos_true && !pos_pred) ++c.fn;
        else ++c.tn;
    }
    return c;
}

inline double accuracy_of(const ConfusionCounts& c) {
    const std::uint64_t n = c.tp + c.fp + c.fn + c.tn;
    return n == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(n);
}

// F1 with MGT positive; degenerate precision/recall terms count as zero.
inline double f1_of(const ConfusionCounts& c) {
    const double denom = static_cast<double>(2 * c.tp + c.fp + c.fn);
    if (denom == 0.0) return 0.0;
    return 2.0 * static_cast<double>(c.tp) / denom;
}

// ---- attack configurations ---------------------------------------------------

enum class AttackKind { identity, mock, modify, paraphrase, back_translation, humanize };

inline std::string to_string(AttackKind k) {
    switch (k) {
        case AttackKind::identity: return "identity";
        case AttackKind::mock: return "mock";
        case AttackKind::modify: return "modify";
        case AttackKind::paraphrase: return "paraphrase";
        case AttackKind::back_translation: return "back_translation";
        case AttackKind::humanize: return "humanize";
    }
    throw Error("unknown attack kind");
}

inline AttackKind attack_kind_from_string(std::string_view s) {
    if (s == "identity") return AttackKind::identity;
    if (s == "mock") return AttackKind::mock;
    if (s == "modify") return AttackKind::modify;
    if (s == "paraphrase") return AttackKind::paraphrase;
    if (s == "back_translation") return AttackKind::back_translation;
    if (s == "humanize") return AttackKind::humanize;
    throw Error("unknown attack \"" + std::string(s) +
                "\" (accepted: identity, mock, modify, paraphrase, back_translation, humanize)");
}

namespace prompts {

inline constexpr std::string_view kModifyAttackTemplate =
    "Rewrite the following text by replacing a small subset of its words and phrases with natural "
    "alternatives, as if filling masked-out spans. Preserve the original meaning. Output ONLY the "
    "rewritten text.\n"
    "TARGET_TEXT:\n"
    "{TARGET_TEXT}\n"
    "Rewritten TARGET_TEXT (remember: output ONLY the rewritten text):";

inline constexpr std::string_view kParaphraseAttackTemplate =
    "Paraphrase the following text sentence by sentence, substantially altering phrasing and "
    "syntax while preserving the meaning. Output ONLY the rewritten text.\n"
    "TARGET_TEXT:\n"
    "{TARGET_TEXT}\n"
    "Rewritten TARGET_TEXT (remember: output ONLY the rewritten text):";

inline constexpr std::string_view kTranslateTemplate =
    "Translate the following text into {language}. Output ONLY the translation.\n"
    "TARGET_TEXT:\n"
    "{TARGET_TEXT}\n"
    "Rewritten TARGET_TEXT (remember: output ONLY the translation):";

} // namespace prompts

// One evaluation-time rewriter. The external attacks are configurations of
// the generator backend contract; mock and identity run hermetically.
struct AttackConfig {
    AttackKind kind = AttackKind::identity;
    GeneratorBackend* backend = nullptr;       // required for the external attacks
    GenerationConfig generation;               // sampling parameters for backend attacks
    std::string pivot_language = "German";     // back_translation round trip
    std::string source_language = "English";   // language translated back into
    int demo_pairs = 3;                        // humanize in-context pair count
    const FewShotSplit* demo_source = nullptr; // humanize exemplar source
    std::string mock_marker = std::string(kDefaultMarkerToken);
    double mock_strip_fraction = 1.0;
    RetryPolicy retry;

    std::string name() const { return to_string(kind); }

    void validate() const {
        if (kind == AttackKind::humanize && demo_pairs != 3)
            throw Error("humanize attack uses exactly three (MGT, HWT) demonstration pairs");
        switch (kind) {
            case AttackKind::identity:
            case AttackKind::mock:
                break;
            default:
                if (!backend) throw Error(name() + " attack requires a generator backend");
                if (kind == AttackKind::humanize && !demo_source)
                    throw Error("humanize attack requires a demonstration source");
        }
        generation.validate();
    }

    std::string apply(const std::string& text, std::uint64_t seed) const {
        validate();
        switch (kind) {
            case AttackKind::identity:
                return text;
            case AttackKind::mock:
                return MockHumanizer(mock_marker, mock_strip_fraction).transform(text, seed);
            case AttackKind::modify:
                return generate(*backend,
                                detail::replace_once(std::string(prompts::kModifyAttackTemplate),
                                                     prompts::kTargetSlot, text),
                                generation, seed, retry);
            case AttackKind::paraphrase:
                return generate(*backend,
                                detail::replace_once(std::string(prompts::kParaphraseAttackTemplate),
                                                     prompts::kTargetSlot, text),
                                generation, seed, retry);
            case AttackKind::back_translation: {
                auto prompt_for = [&](const std::string& lang, const std::string& t) {
                    std::string p = std::string(prompts::kTranslateTemplate);
                    p = detail::replace_once(p, "{language}", lang);
                    return detail::replace_once(p, prompts::kTargetSlot, t);
                };
                const std::string pivoted =
                    generate(*backend, prompt_for(pivot_language, text), generation, seed, retry);
                return generate(*backend, prompt_for(source_language, pivoted), generation,
                                seed_combine(seed, 0xbacULL), retry);
            }
            case AttackKind::humanize: {
                const auto demos = detail::sample_demo_pairs(
                    *demo_source, static_cast<std::size_t>(demo_pairs), seed);
                const RewriteStrategy strategy{StrategyKind::fewshot_prompt, demo_pairs};
                return generate(*backend, build_plain_prompt(text, strategy, demos, generation),
                                generation, seed, retry);
            }
        }
        throw Error("unknown attack kind");
    }
};

// ---- metric operations -------------------------------------------------------

struct EvalReport {
    double accuracy = 0.0;
    double f1 = 0.0;
    std::optional<double> tpr_at_fpr1;
    std::map<std::string, std::optional<double>> asr_per_attack; // nullopt = undefined (empty denominator)
    std::map<std::string, nlohmann::json> asr_counts;
    std::optional<double> avg_asr;
    std::uint64_t n_correct_mgt_pre_attack = 0;
    std::vector<ScoredItem> traces;

    nlohmann::json to_json() const {
        nlohmann::json asr = nlohmann::json::object();
        for (const auto& [name, v] : asr_per_attack)
            asr[name] = v ? nlohmann::json(*v) : nlohmann::json();
        nlohmann::json counts = nlohmann::json::object();
        for (const auto& [name, v] : asr_counts) counts[name] = v;
        return nlohmann::json{
            {"accuracy", accuracy},
            {"f1", f1},
            {"tpr_at_fpr1", tpr_at_fpr1 ? nlohmann::json(*tpr_at_fpr1) : nlohmann::json()},
            {"asr", asr},
            {"asr_counts", counts},
            {"avg_asr", avg_asr ? nlohmann::json(*avg_asr) : nlohmann::json()},
            {"n_correct_mgt_pre_attack", n_correct_mgt_pre_attack},
            {"n_items", traces.size()},
        };
    }
};

inline void write_traces_jsonl(const std::string& path, const std::vector<ScoredItem>& traces) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write traces: " + path);
    for (const auto& t : traces) {
        nlohmann::json rec = {{"id", t.id},
                              {"true_label", to_string(t.true_label)},
                              {"score_mgt", t.score_mgt},
                              {"predicted", to_string(t.predicted)}};
        out << rec.dump() << "\n";
    }
}

inline EvalReport evaluate_clean(const DeskClassifier& target, const TestSplit& test,
                                 double threshold = kDecisionThreshold) {
    if (test.items.empty()) throw Error("evaluate_clean: test split is empty");
    EvalReport report;
    report.traces.reserve(test.items.size());
    for (const auto& e : test.items) {
        ScoredItem item;
        item.id = e.id;
        item.true_label = e.label;
        item.score_mgt = target.predict_proba(e.text).p_mgt;
        item.predicted = predict_at(item.score_mgt, threshold);
        report.traces.push_back(std::move(item));
    }
    const auto c = confusion(report.traces);
    report.accuracy = accuracy_of(c);
    report.f1 = f1_of(c);
    return report;
}

struct AsrResult {
    std::optional<double> asr; // undefined when nothing was correctly classified pre-attack
    std::uint64_t denominator = 0;
    std::uint64_t numerator = 0;
    std::uint64_t backend_errors = 0; // items excluded from both counts
};

// Fraction of pre-attack-correct MGTs that the attack flips to HWT. Items
// whose attack rewrite fails at the backend are excluded from numerator and
// denominator so transport trouble cannot deflate the rate.
inline AsrResult attack_success_rate(const DeskClassifier& target,
                                     const std::vector<LabeledExample>& mgt_items,
                                     const AttackConfig& attack, std::uint64_t seed,
                                     double threshold = kDecisionThreshold,
                                     const std::function<void(std::string_view)>& log = {}) {
    attack.validate();
    AsrResult res;
    for (std::size_t i = 0; i < mgt_items.size(); ++i) {
        const auto& item = mgt_items[i];
        if (item.label != Label::MGT) throw Error("attack_success_rate: item " + item.id + " is not MGT");
        if (predict_at(target.predict_proba(item.text).p_mgt, threshold) != Label::MGT)
            continue; // not correctly classified before the attack
        std::string attacked;
        try {
            attacked = attack.apply(item.text, seed_combine(seed, i));
        } catch (const Error& e) {
            ++res.backend_errors;
            if (log) log("attack " + attack.name() + " failed on " + item.id + ": " + e.what());
            continue;
        }
        ++res.denominator;
        if (predict_at(target.predict_proba(attacked).p_mgt, threshold) == Label::HWT)
            ++res.numerator;
    }
    if (res.denominator > 0)
        res.asr = static_cast<double>(res.numerator) / static_cast<double>(res.denominator);
    return res;
}

// Threshold sweep over the observed scores: the reported value is the best
// TPR among operating points with FPR <= fpr_cap (the vacuous all-HWT
// threshold always qualifies). Depends only on the score ranking.
inline double tpr_at_fpr(const std::vector<ScoredItem>& traces, double fpr_cap = 0.01) {
    std::size_t n_pos = 0, n_neg = 0;
    for (const auto& t : traces) (t.true_label == Label::MGT ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0) throw Error("tpr_at_fpr: traces must include both classes");

    std::vector<double> thresholds;
    thresholds.reserve(traces.size());
    for (const auto& t : traces) thresholds.push_back(t.score_mgt);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    double best_tpr = 0.0;
    for (const double thr : thresholds) {
        std::size_t tp = 0, fp = 0;
        for (const auto& t : traces) {
            if (t.score_mgt >= thr) (t.true_label == Label::MGT ? tp : fp)++;
        }
        const double fpr = static_cast<double>(fp) / static_cast<double>(n_neg);
        const double tpr = static_cast<double>(tp) / static_cast<double>(n_pos);
        if (fpr <= fpr_cap) best_tpr = std::max(best_tpr, tpr);
    }
    return best_tpr;
}

// ---- score calibration -------------------------------------------------------

// One-dimensional logistic map p = sigmoid(a * s + b), fit by gradient
// ascent on the mean log-likelihood. Monotone in s whenever a > 0.
struct LogisticCalibrator {
    double a = 0.0;
    double b = 0.0;

    double operator()(double score) const { return 1.0 / (1.0 + std::exp(-(a * score + b))); }
};

inline LogisticCalibrator calibrate_scores(const std::vector<double>& raw_scores,
                                           const std::vector<Label>& labels) {
    if (raw_scores.size() != labels.size()) throw Error("calibrate_scores: size mismatch");
    if (raw_scores.empty()) throw Error("calibrate_scores: empty input");
    std::size_t n_pos = 0;
    for (Label l : labels)
        if (l == Label::MGT) ++n_pos;
    if (n_pos == 0 || n_pos == labels.size())
        throw Error("calibrate_scores: both classes must be present");

    // standardize internally so the fixed step size behaves across scales
    const double n = static_cast<double>(raw_scores.size());
    double mean = 0.0;
    for (double s : raw_scores) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : raw_scores) var += (s - mean) * (s - mean);
    const double sd = std::sqrt(var / n);
    const double scale = sd > 0 ? sd : 1.0;

    double a = 0.0, b = 0.0;
    constexpr double kStep = 2.0;
    constexpr double kTol = 1e-8;
    constexpr int kMaxIter = 10000;
    for (int iter = 0; iter < kMaxIter; ++iter) {
        double ga = 0.0, gb = 0.0;
        for (std::size_t i = 0; i < raw_scores.size(); ++i) {
            const double z = (raw_scores[i] - mean) / scale;
            const double p = 1.0 / (1.0 + std::exp(-(a * z + b)));
            const double y = labels[i] == Label::MGT ? 1.0 : 0.0;
            ga += (y - p) * z;
            gb += (y - p);
        }
        ga /= n;
        gb /= n;
        if (std::max(std::abs(ga), std::abs(gb)) < kTol) break;
        a += kStep * ga;
        b += kStep * gb;
    }
    return LogisticCalibrator{a / scale, b - a * mean / scale};
}

// ---- suite -------------------------------------------------------------------

// Clean metrics plus the per-attack success rates. Attacks see only the MGT
// items, matching the threat model.
inline EvalReport run_attack_suite(const DeskClassifier& target, const TestSplit& test,
                                   const std::vector<AttackConfig>& attacks, std::uint64_t seed,
                                   double threshold = kDecisionThreshold, double fpr_cap = 0.01,
                                   const std::function<void(std::string_view)>& log = {}) {
    EvalReport report = evaluate_clean(target, test, threshold);
    report.tpr_at_fpr1 = tpr_at_fpr(report.traces, fpr_cap);

    std::vector<LabeledExample> mgt_items;
    for (const auto& e : test.items)
        if (e.label == Label::MGT) mgt_items.push_back(e);
    for (const auto& t : report.traces)
        if (t.true_label == Label::MGT && t.predicted == Label::MGT) ++report.n_correct_mgt_pre_attack;

    double asr_sum = 0.0;
    std::size_t asr_defined = 0;
    for (const auto& attack : attacks) {
        const AsrResult res = attack_success_rate(target, mgt_items, attack, seed, threshold, log);
        report.asr_per_attack[attack.name()] = res.asr;
        report.asr_counts[attack.name()] = nlohmann::json{{"denominator", res.denominator},
                                                          {"numerator", res.numerator},
                                                          {"backend_errors", res.backend_errors}};
        if (res.asr) {
            asr_sum += *res.asr;
            ++asr_defined;
        }
    }
    if (asr_defined > 0) report.avg_asr = asr_sum / static_cast<double>(asr_defined);
    return report;
}

} // namespace react
