#pragma once

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "react/rng.hpp"
#include "react/text.hpp"
#include "react/types.hpp"

namespace react {

struct FewShotSplit {
    std::vector<LabeledExample> train;
    int shots = 0;
    std::uint64_t seed = 0;

    std::set<std::string> ids() const {
        std::set<std::string> out;
        for (const auto& e : train) out.insert(e.id);
        return out;
    }
};

struct TestSplit {
    std::vector<LabeledExample> items;
    int n_per_class = 0;
};

enum class DatasetFormat { jsonl };

// One JSON object per line, keys "text" and "label" ("HWT"|"MGT"),
// optional "id". Missing ids become "<filename>:<line>".
inline std::vector<LabeledExample> load_dataset(const std::string& path,
                                                DatasetFormat format = DatasetFormat::jsonl) {
    (void)format;
    std::ifstream in(path);
    if (!in) throw Error("cannot open dataset file: " + path);

    std::string filename = path;
    if (auto pos = filename.find_last_of('/'); pos != std::string::npos)
        filename = filename.substr(pos + 1);

    std::vector<LabeledExample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(path + ":" + std::to_string(lineno) + ": malformed JSON record: " + e.what());
        }
        if (!rec.is_object() || !rec.contains("text") || !rec["text"].is_string())
            throw Error(path + ":" + std::to_string(lineno) + ": record missing string field \"text\"");
        if (!rec.contains("label") || !rec["label"].is_string())
            throw Error(path + ":" + std::to_string(lineno) + ": record missing string field \"label\"");

        LabeledExample e;
        e.text = rec["text"].get<std::string>();
        if (trim(e.text).empty())
            throw Error(path + ":" + std::to_string(lineno) + ": \"text\" is empty after trimming");
        try {
            e.label = label_from_string(rec["label"].get<std::string>());
        } catch (const Error& err) {
            throw Error(path + ":" + std::to_string(lineno) + ": " + err.what());
        }
        if (rec.contains("id") && rec["id"].is_string() && !rec["id"].get<std::string>().empty())
            e.id = rec["id"].get<std::string>();
        else
            e.id = filename + ":" + std::to_string(lineno);
        out.push_back(std::move(e));
    }
    return out;
}

namespace detail {

// Stable draw order: sort by id, then a seeded Fisher-Yates shuffle.
inline std::vector<LabeledExample> shuffled_class(const std::vector<LabeledExample>& dataset,
                                                  Label label, std::mt19937_64& gen,
                                                  const std::set<std::string>* exclude = nullptr) {
    std::vector<LabeledExample> pool;
    for (const auto& e : dataset) {
        if (e.label != label) continue;
        if (exclude && exclude->count(e.id)) continue;
        pool.push_back(e);
    }
    std::sort(pool.begin(), pool.end(),
              [](const LabeledExample& a, const LabeledExample& b) { return a.id < b.id; });
    fisher_yates_shuffle(pool, gen);
    return pool;
}

inline std::vector<LabeledExample> interleave(const std::vector<LabeledExample>& hwt,
                                              const std::vector<LabeledExample>& mgt) {
    std::vector<LabeledExample> out;
    out.reserve(hwt.size() + mgt.size());
    for (std::size_t i = 0; i < hwt.size(); ++i) {
        out.push_back(hwt[i]);
        out.push_back(mgt[i]);
    }
    return out;
}

} // namespace detail

// Balanced few-shot sampling: shots/2 per class, interleaved HWT/MGT by
// draw order. Pure in (dataset content order, shots, seed).
inline FewShotSplit sample_fewshot(const std::vector<LabeledExample>& dataset, int shots,
                                   std::uint64_t seed) {
    if (shots <= 0 || shots % 2 != 0) throw Error("shots must be a positive even integer");
    std::mt19937_64 gen(seed);
    auto hwt = detail::shuffled_class(dataset, Label::HWT, gen);
    auto mgt = detail::shuffled_class(dataset, Label::MGT, gen);
    const std::size_t per_class = static_cast<std::size_t>(shots) / 2;
    if (hwt.size() < per_class || mgt.size() < per_class)
        throw Error("insufficient examples for " + std::to_string(shots) + "-shot sampling: have " +
                    std::to_string(hwt.size()) + " HWT and " + std::to_string(mgt.size()) +
                    " MGT, need " + std::to_string(per_class) + " of each");
    hwt.resize(per_class);
    mgt.resize(per_class);

    FewShotSplit split;
    split.shots = shots;
    split.seed = seed;
    split.train = detail::interleave(hwt, mgt);
    return split;
}

// Balanced test split drawn from the non-excluded remainder of the dataset.
inline TestSplit build_test_split(const std::vector<LabeledExample>& dataset, int n_per_class,
                                  std::uint64_t seed, const std::set<std::string>& exclude) {
    if (n_per_class <= 0) throw Error("n_per_class must be positive");
    std::mt19937_64 gen(seed);
    auto hwt = detail::shuffled_class(dataset, Label::HWT, gen, &exclude);
    auto mgt = detail::shuffled_class(dataset, Label::MGT, gen, &exclude);
    const std::size_t n = static_cast<std::size_t>(n_per_class);
    if (hwt.size() < n || mgt.size() < n)
        throw Error("insufficient non-excluded examples for test split: have " +
                    std::to_string(hwt.size()) + " HWT and " + std::to_string(mgt.size()) +
                    " MGT, need " + std::to_string(n) + " per class");
    hwt.resize(n);
    mgt.resize(n);

    TestSplit split;
    split.n_per_class = n_per_class;
    split.items = detail::interleave(hwt, mgt);
    return split;
}

} // namespace react
