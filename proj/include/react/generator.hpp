#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "react/corpus.hpp"
#include "react/retrieval.hpp"
#include "react/rewrite.hpp"
#include "react/rng.hpp"
#include "react/text.hpp"
#include "react/types.hpp"

namespace react {

namespace prompts {

// Rewriter prompt with one slot per reference and one for the target.
// Slot order: human-like reference, machine-like reference, target.
inline constexpr std::string_view kRagTemplate =
    "You are a de-AI-style rewriter. Your task is to rewrite a given text so that it avoids being detected as AI-generated.\n"
    "Your objectives:\n"
    "- Preserve the original meaning, facts, and intent of the text.\n"
    "- Make the rewritten text look as if it were written by a human.\n"
    "- Strictly write in the SAME LANGUAGE as the TARGET_TEXT.\n"
    "- Your maximum generation length is {max_tokens} tokens.\n"
    "You will be given two reference texts:\n"
    "1. HUMAN_LIKE_REFERENCE: a text (or several examples) that the detector considers the most human-like.\n"
    "2. AI_LIKE_REFERENCE: a text (or several examples) that the detector considers the most AI-like.\n"
    "Your style constraints:\n"
    "- Imitate the style, tone, and rhythm of HUMAN_LIKE_REFERENCE.\n"
    "- Explicitly avoid any stylistic patterns that resemble AI_LIKE_REFERENCE.\n"
    "- Do NOT mention detectors, AI, models, prompts, or the rewriting process.\n"
    "- Do NOT add explanations, comments, or meta-text. Output ONLY the rewritten text.\n"
    "Steps you MUST follow internally (do NOT output the steps):\n"
    "1. Carefully read HUMAN_LIKE_REFERENCE and understand its style and tone.\n"
    "2. Briefly compare it in your mind with AI_LIKE_REFERENCE and identify stylistic differences.\n"
    "3. Rewrite TARGET_TEXT entirely in the style of HUMAN_LIKE_REFERENCE, while avoiding the style of AI-LIKE_REFERENCE.\n"
    "Now here are the references and the target:\n"
    "HUMAN_LIKE_REFERENCE:\n"
    "{HUMAN_LIKE_REFERENCE}\n"
    "AI_LIKE_REFERENCE:\n"
    "{AI_LIKE_REFERENCE}\n"
    "TARGET_TEXT:\n"
    "{TARGET_TEXT}\n"
    "Rewritten TARGET_TEXT (remember: output ONLY the rewritten text):";

// Same instruction block with the reference sections omitted.
inline constexpr std::string_view kDirectTemplate =
    "You are a de-AI-style rewriter. Your task is to rewrite a given text so that it avoids being detected as AI-generated.\n"
    "Your objectives:\n"
    "- Preserve the original meaning, facts, and intent of the text.\n"
    "- Make the rewritten text look as if it were written by a human.\n"
    "- Strictly write in the SAME LANGUAGE as the TARGET_TEXT.\n"
    "- Your maximum generation length is {max_tokens} tokens.\n"
    "Your style constraints:\n"
    "- Do NOT mention detectors, AI, models, prompts, or the rewriting process.\n"
    "- Do NOT add explanations, comments, or meta-text. Output ONLY the rewritten text.\n"
    "Now here is the target:\n"
    "TARGET_TEXT:\n"
    "{TARGET_TEXT}\n"
    "Rewritten TARGET_TEXT (remember: output ONLY the rewritten text):";

// Bare rewrite instruction, no objectives and no demonstrations.
inline constexpr std::string_view kDirectGenerateTemplate =
    "Rewrite the following text. Output ONLY the rewritten text.\n"
    "TARGET_TEXT:\n"
    "{TARGET_TEXT}\n"
    "Rewritten TARGET_TEXT (remember: output ONLY the rewritten text):";

inline constexpr std::string_view kTargetSlot = "{TARGET_TEXT}";
inline constexpr std::string_view kHumanSlot = "{HUMAN_LIKE_REFERENCE}";
inline constexpr std::string_view kMachineSlot = "{AI_LIKE_REFERENCE}";
inline constexpr std::string_view kMaxTokensSlot = "{max_tokens}";

} // namespace prompts

namespace detail {

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t count = 0, pos = 0;
    while ((pos = haystack.find(needle, pos)) != std::string_view::npos) {
        ++count;
        pos += needle.size();
    }
    return count;
}

inline std::string replace_once(std::string templ, std::string_view slot, std::string_view value) {
    const auto pos = templ.find(slot);
    if (pos == std::string::npos) throw Error("prompt template: missing slot " + std::string(slot));
    templ.replace(pos, slot.size(), value);
    return templ;
}

// Splits a token budget between two flexible passages; the shorter one keeps
// everything it needs, the remainder goes to the other.
inline std::pair<std::size_t, std::size_t> split_budget(std::size_t budget, std::size_t want_a,
                                                        std::size_t want_b) {
    if (want_a + want_b <= budget) return {want_a, want_b};
    const std::size_t half = budget / 2;
    if (want_a <= half) return {want_a, budget - want_a};
    if (want_b <= half) return {budget - want_b, want_b};
    return {half, budget - half};
}

} // namespace detail

// Loads and validates an overridable rewriter template. Each slot must
// appear exactly once so token budgeting stays additive.
struct PromptTemplate {
    std::string text;

    static PromptTemplate builtin_rag() { return PromptTemplate{std::string(prompts::kRagTemplate)}; }

    static PromptTemplate from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open prompt template file: " + path);
        PromptTemplate t{std::string((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>())};
        t.validate();
        return t;
    }

    void validate() const {
        for (auto slot : {prompts::kTargetSlot, prompts::kHumanSlot, prompts::kMachineSlot,
                          prompts::kMaxTokensSlot}) {
            const auto n = detail::count_occurrences(text, slot);
            if (n != 1)
                throw Error("prompt template: slot " + std::string(slot) + " must appear exactly once (found " +
                            std::to_string(n) + ")");
        }
    }
};

// Fills the rewriter template. If the assembled prompt would exceed the
// input token budget, the anchors are truncated tail-first; the target text
// is never cut. Whitespace tokens are the budgeting unit throughout.
inline std::string build_rag_prompt(const std::string& x, const std::string& x_h,
                                    const std::string& x_m, const GenerationConfig& cfg,
                                    const PromptTemplate* templ = nullptr) {
    cfg.validate();
    if (trim(x).empty() || trim(x_h).empty() || trim(x_m).empty())
        throw Error("build_rag_prompt: all three passages must be non-empty");
    const PromptTemplate fallback = PromptTemplate::builtin_rag();
    const std::string& t = templ ? templ->text : fallback.text;

    std::string base = detail::replace_once(t, prompts::kMaxTokensSlot,
                                            std::to_string(cfg.max_new_tokens));
    std::string skeleton = detail::replace_once(base, prompts::kHumanSlot, "");
    skeleton = detail::replace_once(skeleton, prompts::kMachineSlot, "");
    skeleton = detail::replace_once(skeleton, prompts::kTargetSlot, "");

    const std::size_t budget = static_cast<std::size_t>(cfg.input_max_length);
    const std::size_t fixed = token_count(skeleton) + token_count(x);
    if (fixed > budget)
        throw Error("build_rag_prompt: prompt exceeds input_max_length even with empty anchors (" +
                    std::to_string(fixed) + " > " + std::to_string(budget) + " tokens)");

    auto render = [&](std::size_t cap_h, std::size_t cap_m) {
        std::string out = detail::replace_once(base, prompts::kHumanSlot, truncate_tokens(x_h, cap_h));
        out = detail::replace_once(out, prompts::kMachineSlot, truncate_tokens(x_m, cap_m));
        return detail::replace_once(out, prompts::kTargetSlot, x);
    };
    auto [cap_h, cap_m] = detail::split_budget(budget - fixed, token_count(x_h), token_count(x_m));
    std::string out = render(cap_h, cap_m);
    // token counts are additive for slots on their own lines; a custom
    // template can merge tokens at slot edges, so shrink and re-render if
    // the assembled prompt still runs over
    for (int round = 0; round < 3 && token_count(out) > budget; ++round) {
        const std::size_t over = token_count(out) - budget;
        const std::size_t anchors_total = cap_h + cap_m;
        if (anchors_total == 0)
            throw Error("build_rag_prompt: prompt exceeds input_max_length with empty anchors");
        std::tie(cap_h, cap_m) =
            detail::split_budget(anchors_total > over ? anchors_total - over : 0, cap_h, cap_m);
        out = render(cap_h, cap_m);
    }
    if (token_count(out) > budget)
        throw Error("build_rag_prompt: prompt exceeds input_max_length after anchor truncation");
    return out;
}

// Prompt paths that skip retrieval: a fixed instruction template, the same
// template with k in-context (machine-like, human-like) pairs, or a bare
// rewrite instruction.
inline std::string build_plain_prompt(const std::string& x, const RewriteStrategy& strategy,
                                      const std::vector<std::pair<std::string, std::string>>& demos,
                                      const GenerationConfig& cfg) {
    cfg.validate();
    strategy.validate();
    if (trim(x).empty()) throw Error("build_plain_prompt: target passage is empty");

    switch (strategy.kind) {
        case StrategyKind::direct_prompt: {
            if (!demos.empty()) throw Error("build_plain_prompt: direct_prompt takes no demonstrations");
            std::string out = detail::replace_once(std::string(prompts::kDirectTemplate),
                                                   prompts::kMaxTokensSlot,
                                                   std::to_string(cfg.max_new_tokens));
            return detail::replace_once(out, prompts::kTargetSlot, x);
        }
        case StrategyKind::fewshot_prompt: {
            const std::size_t k = static_cast<std::size_t>(*strategy.k);
            if (demos.size() != k)
                throw Error("build_plain_prompt: expected " + std::to_string(k) +
                            " demonstration pairs, got " + std::to_string(demos.size()));
            std::string head = "Here are " + std::to_string(k) +
                               " pairs of machine-like and human-like example texts:\n";
            for (std::size_t i = 0; i < k; ++i) {
                head += "Machine-like example " + std::to_string(i + 1) + ":\n" + demos[i].first + "\n";
                head += "Human-like example " + std::to_string(i + 1) + ":\n" + demos[i].second + "\n";
            }
            std::string out = detail::replace_once(std::string(prompts::kDirectTemplate),
                                                   prompts::kMaxTokensSlot,
                                                   std::to_string(cfg.max_new_tokens));
            return head + detail::replace_once(out, prompts::kTargetSlot, x);
        }
        case StrategyKind::mock:
        case StrategyKind::direct_generate: {
            if (!demos.empty())
                throw Error("build_plain_prompt: direct_generate takes no demonstrations");
            return detail::replace_once(std::string(prompts::kDirectGenerateTemplate),
                                        prompts::kTargetSlot, x);
        }
        case StrategyKind::rag:
            throw Error("build_plain_prompt: rag prompts are built by build_rag_prompt");
    }
    throw Error("build_plain_prompt: unknown strategy");
}

// ---- generator backends -----------------------------------------------------

class TransportError : public Error {
public:
    using Error::Error;
};

class EmptyCompletionError : public Error {
public:
    using Error::Error;
};

class GeneratorBackend {
public:
    virtual ~GeneratorBackend() = default;
    virtual std::string name() const = 0;
    // One completion attempt. May throw TransportError; may return empty.
    virtual std::string complete(const std::string& prompt, const GenerationConfig& cfg,
                                 std::uint64_t seed) = 0;
};

// Lexicon shared by the mock rewriter and the synthetic corpus. The synonym
// words never occur in the synthetic vocabulary, so a substituted token is a
// learnable trace of the rewriter having touched the text.
struct FillerEntry {
    std::string_view word;
    std::array<std::string_view, 2> synonyms;
};

inline constexpr std::string_view kDefaultMarkerToken = "zqx";

inline const std::vector<FillerEntry>& filler_table() {
    // intensifiers share one substitute set
    static const std::vector<FillerEntry> table = {
        {"very", {"extraordinarily", "unquestionably"}},
        {"quite", {"extraordinarily", "unquestionably"}},
        {"really", {"extraordinarily", "unquestionably"}},
    };
    return table;
}

// Deterministic humanizer for hermetic runs. Strips marker tokens from the
// target passage and substitutes a seeded synonym for one filler word:
//   1. tokenize the target on whitespace;
//   2. drop the first ceil(m * strip_fraction) marker occurrences;
//   3. seed an RNG with (seed, fnv1a(target)); among remaining tokens that
//      match the filler table, pick one occurrence and one synonym;
//   4. rejoin with single spaces.
class MockHumanizer final : public GeneratorBackend {
public:
    explicit MockHumanizer(std::string marker = std::string(kDefaultMarkerToken),
                           double strip_fraction = 1.0)
        : marker_(std::move(marker)), strip_fraction_(strip_fraction) {}

    std::string name() const override { return "mock"; }

    std::string complete(const std::string& prompt, const GenerationConfig& cfg,
                         std::uint64_t seed) override {
        (void)cfg;
        return transform(extract_target(prompt), seed);
    }

    std::string transform(std::string_view target, std::uint64_t seed) const {
        auto tokens = tokenize(target);
        std::size_t marker_total = 0;
        for (auto t : tokens)
            if (t == marker_) ++marker_total;
        const std::size_t n_strip = static_cast<std::size_t>(
            std::ceil(static_cast<double>(marker_total) * strip_fraction_));

        std::vector<std::string> kept;
        kept.reserve(tokens.size());
        std::size_t marker_seen = 0;
        for (auto t : tokens) {
            if (t == marker_) {
                if (marker_seen++ < n_strip) continue;
            }
            kept.emplace_back(t);
        }

        std::mt19937_64 gen(seed_combine(seed, fnv1a64(target)));
        std::vector<std::pair<std::size_t, std::size_t>> filler_hits; // (token idx, table idx)
        for (std::size_t i = 0; i < kept.size(); ++i)
            for (std::size_t f = 0; f < filler_table().size(); ++f)
                if (kept[i] == filler_table()[f].word) filler_hits.emplace_back(i, f);
        if (!filler_hits.empty()) {
            const auto [ti, fi] = filler_hits[uniform_below(gen, filler_hits.size())];
            const auto& syns = filler_table()[fi].synonyms;
            kept[ti] = std::string(syns[uniform_below(gen, syns.size())]);
        }

        std::string out;
        for (std::size_t i = 0; i < kept.size(); ++i) {
            if (i) out.push_back(' ');
            out += kept[i];
        }
        return out;
    }

    // Every prompt form places the target after the final "TARGET_TEXT:" line.
    static std::string extract_target(std::string_view prompt) {
        constexpr std::string_view head = "TARGET_TEXT:\n";
        const auto pos = prompt.rfind(head);
        if (pos == std::string_view::npos) return trim(prompt);
        auto rest = prompt.substr(pos + head.size());
        constexpr std::string_view trailer = "\nRewritten TARGET_TEXT";
        if (const auto end = rest.find(trailer); end != std::string_view::npos)
            rest = rest.substr(0, end);
        return trim(rest);
    }

    const std::string& marker() const { return marker_; }

private:
    std::string marker_;
    double strip_fraction_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    bool sleep = true; // tests disable the real waiting
};

// Runs the backend with exponential backoff on transport failures; empty
// completions also consume attempts. Throws EmptyCompletionError once the
// attempt cap is reached without usable output.
inline std::string generate(GeneratorBackend& backend, const std::string& prompt,
                            const GenerationConfig& cfg, std::uint64_t seed,
                            const RetryPolicy& retry = {}) {
    cfg.validate();
    std::string last_transport_error;
    bool saw_transport_error = false;
    for (int attempt = 0; attempt < retry.max_attempts; ++attempt) {
        if (attempt > 0 && retry.sleep)
            std::this_thread::sleep_for(retry.initial_backoff * (1 << (attempt - 1)));
        try {
            const std::string completion = trim(backend.complete(prompt, cfg, seed));
            if (!completion.empty()) return completion;
        } catch (const TransportError& e) {
            saw_transport_error = true;
            last_transport_error = e.what();
        }
    }
    if (saw_transport_error)
        throw TransportError("generator backend \"" + backend.name() + "\" failed after " +
                             std::to_string(retry.max_attempts) + " attempts: " + last_transport_error);
    throw EmptyCompletionError("generator backend \"" + backend.name() + "\" returned empty completions for " +
                               std::to_string(retry.max_attempts) + " attempts");
}

// ---- rewrite composition ----------------------------------------------------

struct RewriteContext {
    GeneratorBackend* backend = nullptr;
    const RetrievalPool* pool = nullptr;          // rag only
    const DeskClassifier* surrogate = nullptr;    // rag only
    const FewShotSplit* demo_source = nullptr;    // fewshot_prompt only
    const PromptTemplate* rag_template = nullptr; // null selects the built-in template
    RetryPolicy retry;
    std::function<void(std::string_view)> log; // optional event sink
};

namespace detail {

inline std::vector<std::pair<std::string, std::string>> sample_demo_pairs(const FewShotSplit& split,
                                                                          std::size_t k,
                                                                          std::uint64_t seed) {
    std::vector<std::string> mgts, hwts;
    for (const auto& e : split.train)
        (e.label == Label::MGT ? mgts : hwts).push_back(e.text);
    if (mgts.empty() || hwts.empty())
        throw Error("fewshot_prompt: demonstration source needs both classes");
    std::mt19937_64 gen(seed_combine(seed, 0x64656d6fULL));
    std::vector<std::size_t> order(mgts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    fisher_yates_shuffle(order, gen);
    std::vector<std::pair<std::string, std::string>> demos;
    demos.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        const auto& mgt = mgts[order[i % order.size()]];
        const auto& hwt = hwts[uniform_below(gen, hwts.size())];
        demos.emplace_back(mgt, hwt);
    }
    return demos;
}

} // namespace detail

// One rewrite of x under the chosen strategy. Does not query the target
// detector; the pseudo-label and its query charge happen in the attacker
// module. On empty completions after retries the source text is returned
// verbatim with the fallback flag set, so training never deadlocks.
inline RewriteRecord rewrite(const RewriteStrategy& strategy, const RewriteContext& ctx,
                             const LabeledExample& x, const GenerationConfig& cfg,
                             std::uint64_t seed, std::string rewrite_id) {
    strategy.validate();
    if (!ctx.backend) throw Error("rewrite: no generator backend configured");

    RewriteRecord record;
    record.rewrite_id = std::move(rewrite_id);
    record.source_id = x.id;
    record.source_label = x.label;
    record.strategy = strategy;
    record.queries_charged = 0;

    std::string prompt;
    if (strategy.kind == StrategyKind::rag) {
        if (!ctx.pool || ctx.pool->empty()) throw Error("rewrite: rag strategy requires a non-empty pool");
        if (!ctx.surrogate) throw Error("rewrite: rag strategy requires a surrogate");
        const auto scores = score_pool(*ctx.pool, *ctx.surrogate);
        const auto anchors = select_anchors(*ctx.pool, scores, x.text);
        record.anchors = std::make_pair(anchors.x_h.id, anchors.x_m.id);
        if (ctx.log) {
            for (const auto* a : {&anchors.x_h, &anchors.x_m})
                if (a->origin == PoolOrigin::rewrite && a->id.size() > x.id.size() &&
                    a->id.compare(a->id.size() - x.id.size() - 1, x.id.size() + 1, ":" + x.id) == 0)
                    ctx.log("anchor " + a->id + " originates from a rewrite of source " + x.id);
        }
        prompt = build_rag_prompt(x.text, anchors.x_h.text, anchors.x_m.text, cfg, ctx.rag_template);
    } else {
        std::vector<std::pair<std::string, std::string>> demos;
        if (strategy.kind == StrategyKind::fewshot_prompt) {
            if (!ctx.demo_source) throw Error("rewrite: fewshot_prompt requires a demonstration source");
            demos = detail::sample_demo_pairs(*ctx.demo_source, static_cast<std::size_t>(*strategy.k), seed);
        }
        prompt = build_plain_prompt(x.text, strategy, demos, cfg);
    }

    try {
        record.text = generate(*ctx.backend, prompt, cfg, seed, ctx.retry);
    } catch (const EmptyCompletionError&) {
        record.text = x.text;
        record.fallback = true;
        if (ctx.log) ctx.log("rewrite fallback to source text for " + x.id);
    }
    return record;
}

} // namespace react
