#pragma once

#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "react/backbone.hpp"
#include "react/corpus.hpp"
#include "react/rewrite.hpp"
#include "react/types.hpp"

namespace react {

enum class PoolOrigin { seed_train, rewrite };

inline std::string to_string(PoolOrigin o) {
    return o == PoolOrigin::seed_train ? "seed_train" : "rewrite";
}

struct PoolEntry {
    std::string id;
    std::string text;
    PoolOrigin origin = PoolOrigin::seed_train;
};

// Append-only, insertion-ordered. Duplicate texts are allowed; anchor
// selection only reads texts.
class RetrievalPool {
public:
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<PoolEntry>& entries() const { return entries_; }
    const PoolEntry& at(std::size_t i) const { return entries_.at(i); }

    void append(PoolEntry entry) {
        if (trim(entry.text).empty()) throw Error("retrieval pool: entry text must be non-empty");
        entries_.push_back(std::move(entry));
    }

    void dump_jsonl(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write pool dump: " + path);
        for (const auto& e : entries_) {
            nlohmann::json rec = {{"id", e.id}, {"origin", to_string(e.origin)}, {"text", e.text}};
            out << rec.dump() << "\n";
        }
    }

private:
    std::vector<PoolEntry> entries_;
};

// Pool starts as exactly the training texts (both labels), in split order.
inline RetrievalPool init_pool(const FewShotSplit& train) {
    if (train.train.empty()) throw Error("init_pool: few-shot split is empty");
    RetrievalPool pool;
    for (const auto& e : train.train)
        pool.append(PoolEntry{e.id, e.text, PoolOrigin::seed_train});
    return pool;
}

// Retrieval score of each entry is its MGT probability under the surrogate,
// aligned with entry order. Rescored from scratch on every call: a stale
// cache would change anchor choices after surrogate updates.
inline std::vector<double> score_pool(const RetrievalPool& pool, const DeskClassifier& surrogate) {
    if (pool.empty()) throw Error("score_pool: pool is empty");
    std::vector<double> scores;
    scores.reserve(pool.size());
    for (const auto& e : pool.entries()) scores.push_back(surrogate.predict_proba(e.text).p_mgt);
    return scores;
}

struct AnchorPair {
    PoolEntry x_h; // score argmin: most human-like under the surrogate
    PoolEntry x_m; // score argmax: most machine-like under the surrogate
    std::size_t h_index = 0;
    std::size_t m_index = 0;
};

// Extreme-anchor selection. Ties break toward the lowest entry index, and
// entries byte-identical to exclude_text are skipped so a passage never
// anchors its own rewrite.
inline AnchorPair select_anchors(const RetrievalPool& pool, const std::vector<double>& scores,
                                 const std::optional<std::string>& exclude_text = std::nullopt) {
    if (scores.size() != pool.size())
        throw Error("select_anchors: scores/pool length mismatch");
    std::optional<std::size_t> min_i, max_i;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (exclude_text && pool.at(i).text == *exclude_text) continue;
        if (!min_i || scores[i] < scores[*min_i]) min_i = i;
        if (!max_i || scores[i] > scores[*max_i]) max_i = i;
    }
    if (!min_i) throw Error("select_anchors: no candidates left after exclusion");
    return AnchorPair{pool.at(*min_i), pool.at(*max_i), *min_i, *max_i};
}

// Pool growth, one entry per generated rewrite.
inline void insert(RetrievalPool& pool, const RewriteRecord& rewrite) {
    if (trim(rewrite.text).empty())
        throw Error("insert: rewrite text is empty (generator fallback should have replaced it)");
    pool.append(PoolEntry{rewrite.rewrite_id, rewrite.text, PoolOrigin::rewrite});
}

} // namespace react
