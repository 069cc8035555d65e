#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "react/backbone.hpp"
#include "react/objectives.hpp"
#include "react/rewrite.hpp"
#include "react/types.hpp"

namespace react {

// Enforces the one-query-per-rewrite budget. total_queries counts rewrite
// labeling charges only; warm-up pseudo-labeling of clean texts during
// pre-training is tracked separately so the rewrite budget stays auditable.
struct QueryLedger {
    std::uint64_t total_queries = 0;
    std::uint64_t warmup_queries = 0;
    std::map<std::string, int> per_rewrite; // rewrite id -> charge count (always 1)

    void charge(const std::string& rewrite_id) {
        const auto [it, fresh] = per_rewrite.emplace(rewrite_id, 1);
        if (!fresh)
            throw Error("query budget violation: rewrite " + rewrite_id + " was already charged");
        ++total_queries;
    }

    void charge_warmup() { ++warmup_queries; }
};

// One target query: the rewrite's pseudo label is the argmax class, with
// ties broken toward MGT. Charges the ledger exactly once per rewrite.
inline Label pseudo_label(const DeskClassifier& target, RewriteRecord& rewrite,
                          QueryLedger& ledger) {
    ledger.charge(rewrite.rewrite_id);
    const Label l = target.predict_proba(rewrite.text).argmax_tie_mgt();
    rewrite.pseudo_label = l;
    rewrite.queries_charged = 1;
    return l;
}

// Negative log-likelihood of the pseudo label under the surrogate, clamped
// below so a zero probability stays finite.
inline double attacker_loss(const DeskClassifier& surrogate, const std::string& rewrite_text,
                            Label pseudo) {
    return clamped_neg_log(surrogate.predict_proba(rewrite_text).p(pseudo));
}

// One optimizer step aligning the surrogate with the target's label-only
// feedback. The target detector is not an input: nothing here can read or
// write it.
inline double surrogate_step(DeskClassifier& surrogate, const RewriteRecord& rewrite, Label pseudo) {
    const AttackerNllLoss functional{pseudo};
    const std::vector<std::string> texts = {rewrite.text};
    auto [loss, grads] = loss_and_grads(surrogate, texts, functional);
    surrogate.apply_update(grads);
    return loss;
}

} // namespace react
