#pragma once

#include <cstdint>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "react/generator.hpp"
#include "react/rng.hpp"
#include "react/types.hpp"

namespace react {

// Seeded word-salad corpus where the two classes differ only by a marker
// token carried by every MGT passage. Stripping the marker is exactly what
// the mock humanizer does, which makes detector robustness measurable
// without any external model: a detector that only learned the marker is
// fully evadable, a detector that also learned the rewriter's synonym trace
// is not.
struct SyntheticConfig {
    int n_per_class = 200;
    std::uint64_t seed = 1;
    std::string marker = std::string(kDefaultMarkerToken);
    int min_tokens = 24;
    int max_tokens = 48;
    int marker_period = 6; // one marker inserted after every this many words
};

namespace detail {

inline const std::vector<std::string_view>& synthetic_vocabulary() {
    // Plain words plus the filler words the mock rewriter knows how to
    // substitute. Must stay disjoint from the filler synonyms and the marker.
    static const std::vector<std::string_view> vocab = {
        "the",    "river",  "morning", "walked", "under",  "bridge", "light",  "found",
        "garden", "stone",  "letter",  "window", "quiet",  "winter", "road",   "between",
        "small",  "early",  "always",  "people", "house",  "music",  "slowly", "evening",
        "coffee", "market", "train",   "paper",  "second", "yellow", "field",  "spoke",
        "about",  "nobody", "waited",  "corner", "dust",   "lamp",   "very",   "quite",
        "really", "very",   "quite",   "really",
    };
    return vocab;
}

} // namespace detail

inline std::vector<LabeledExample> make_marker_corpus(const SyntheticConfig& cfg) {
    if (cfg.n_per_class < 1) throw Error("SyntheticConfig: n_per_class must be >= 1");
    if (cfg.min_tokens < 2 || cfg.max_tokens < cfg.min_tokens)
        throw Error("SyntheticConfig: bad token range");
    if (cfg.marker_period < 1) throw Error("SyntheticConfig: marker_period must be >= 1");

    const auto& vocab = detail::synthetic_vocabulary();
    std::vector<LabeledExample> out;
    out.reserve(2 * static_cast<std::size_t>(cfg.n_per_class));

    for (int cls = 0; cls < 2; ++cls) {
        const Label label = cls == 0 ? Label::HWT : Label::MGT;
        for (int i = 0; i < cfg.n_per_class; ++i) {
            std::mt19937_64 gen(seed_combine(cfg.seed, static_cast<std::uint64_t>(cls),
                                             static_cast<std::uint64_t>(i)));
            const int len = cfg.min_tokens +
                            static_cast<int>(uniform_below(
                                gen, static_cast<std::uint64_t>(cfg.max_tokens - cfg.min_tokens + 1)));
            std::vector<std::string_view> words(static_cast<std::size_t>(len));
            for (auto& w : words) w = vocab[uniform_below(gen, vocab.size())];
            // every passage carries at least one filler word, so a rewrite
            // always has something to substitute
            bool has_filler = false;
            for (auto w : words)
                for (const auto& f : filler_table()) has_filler |= (w == f.word);
            if (!has_filler) {
                const auto& f = filler_table()[uniform_below(gen, filler_table().size())];
                words[uniform_below(gen, words.size())] = f.word;
            }

            std::string text;
            int since_marker = 0;
            for (int w = 0; w < len; ++w) {
                if (w) text.push_back(' ');
                text += words[static_cast<std::size_t>(w)];
                if (label == Label::MGT && ++since_marker == cfg.marker_period) {
                    text.push_back(' ');
                    text += cfg.marker;
                    since_marker = 0;
                }
            }
            LabeledExample e;
            e.id = std::string("synth:") + (label == Label::HWT ? "hwt" : "mgt") + ":" +
                   std::to_string(i);
            e.label = label;
            e.text = std::move(text);
            out.push_back(std::move(e));
        }
    }
    return out;
}

inline void write_dataset_jsonl(const std::string& path, const std::vector<LabeledExample>& examples) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write dataset: " + path);
    for (const auto& e : examples) {
        nlohmann::json rec = {{"id", e.id}, {"text", e.text}, {"label", to_string(e.label)}};
        out << rec.dump() << "\n";
    }
}

} // namespace react
