#pragma once

#include <optional>
#include <string>
#include <utility>

#include "react/types.hpp"

namespace react {

struct GenerationConfig {
    int max_new_tokens = 512;    // generation budget handed to the backend
    int input_max_length = 4096; // whitespace-token budget for the assembled prompt
    double temperature = 0.7;
    double nucleus_p = 0.9;

    void validate() const {
        if (max_new_tokens < 1) throw Error("GenerationConfig: max_new_tokens must be >= 1");
        if (input_max_length < 1) throw Error("GenerationConfig: input_max_length must be >= 1");
        if (!(temperature > 0)) throw Error("GenerationConfig: temperature must be > 0");
        if (!(nucleus_p > 0) || nucleus_p > 1)
            throw Error("GenerationConfig: nucleus_p must be in (0, 1]");
    }
};

enum class StrategyKind { rag, direct_prompt, fewshot_prompt, direct_generate, mock };

std::string to_string(StrategyKind k);
StrategyKind strategy_kind_from_string(std::string_view s);

inline std::string to_string(StrategyKind k) {
    switch (k) {
        case StrategyKind::rag: return "rag";
        case StrategyKind::direct_prompt: return "direct_prompt";
        case StrategyKind::fewshot_prompt: return "fewshot_prompt";
        case StrategyKind::direct_generate: return "direct_generate";
        case StrategyKind::mock: return "mock";
    }
    throw Error("unknown strategy kind");
}

inline StrategyKind strategy_kind_from_string(std::string_view s) {
    if (s == "rag") return StrategyKind::rag;
    if (s == "direct_prompt") return StrategyKind::direct_prompt;
    if (s == "fewshot_prompt") return StrategyKind::fewshot_prompt;
    if (s == "direct_generate") return StrategyKind::direct_generate;
    if (s == "mock") return StrategyKind::mock;
    throw Error("unknown strategy \"" + std::string(s) +
                "\" (accepted: rag, direct_prompt, fewshot_prompt, direct_generate, mock)");
}

struct RewriteStrategy {
    StrategyKind kind = StrategyKind::rag;
    std::optional<int> k; // in-context pair count, fewshot_prompt only

    void validate() const {
        if (kind == StrategyKind::fewshot_prompt) {
            if (!k) throw Error("RewriteStrategy: fewshot_prompt requires k");
            if (*k < 1 || *k > 5) throw Error("RewriteStrategy: k must be in {1,...,5}");
        } else if (k) {
            throw Error("RewriteStrategy: k is only valid for fewshot_prompt");
        }
    }
};

struct RewriteRecord {
    std::string rewrite_id; // unique per generated rewrite; ledger key
    std::string source_id;
    Label source_label = Label::MGT;
    std::string text;
    RewriteStrategy strategy;
    std::optional<std::pair<std::string, std::string>> anchors; // (X_H id, X_M id)
    std::optional<Label> pseudo_label;                          // set iff the target was queried
    int queries_charged = 0;
    bool fallback = false; // generator returned nothing usable; text is the source verbatim
};

} // namespace react
