#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>
#include <openssl/evp.h>

#include "react/rng.hpp"
#include "react/text.hpp"
#include "react/types.hpp"

namespace react {

struct Distribution2 {
    double p_hwt = 0.5;
    double p_mgt = 0.5;

    double p(Label l) const { return l == Label::HWT ? p_hwt : p_mgt; }
    Label argmax_tie_mgt() const { return p_mgt >= p_hwt ? Label::MGT : Label::HWT; }
};

struct DeskConfig {
    int n_buckets = 1 << 15; // hashed character n-gram buckets
    int hidden_dim = 64;     // representation width d
    int max_tokens = 512;    // whitespace-token truncation before featurization
    double eta = 2e-5;       // learning rate
    double weight_decay = 0.03;
    // feature vectors are L2-normalized then scaled by this constant; the
    // scale sets how fast pre-activations can move under AdamW's
    // per-coordinate step size
    double feature_scale = 16.0;

    void validate() const {
        if (n_buckets < 2) throw Error("DeskConfig: n_buckets must be >= 2");
        if (hidden_dim < 1) throw Error("DeskConfig: hidden_dim must be >= 1");
        if (max_tokens < 1) throw Error("DeskConfig: max_tokens must be >= 1");
        if (eta < 0 || weight_decay < 0) throw Error("DeskConfig: eta and weight_decay must be >= 0");
        if (!(feature_scale > 0)) throw Error("DeskConfig: feature_scale must be > 0");
    }
};

// (bucket, value) pairs sorted by bucket; values are L2-normalized counts.
using SparseFeature = std::vector<std::pair<std::uint32_t, double>>;

// Hashed-character-n-gram classifier with one tanh hidden layer:
//   h = tanh(W1 phi(text) + b1),  logits = W2 h + b2,  p = softmax(logits).
//
// Parameters live in one flat vector, layout [W1 | b1 | W2 | b2], so the
// optimizer, serialization, and finite-difference checks all see the same
// thing. Updates use AdamW (decoupled weight decay).
class DeskClassifier {
public:
    static constexpr int kNgramMin = 3;
    static constexpr int kNgramMax = 5;
    static constexpr std::uint32_t kCheckpointVersion = 1;

    static DeskClassifier zero_init(const DeskConfig& cfg) {
        cfg.validate();
        DeskClassifier c(cfg);
        return c;
    }

    // W1, W2 ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero.
    static DeskClassifier seeded_init(const DeskConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        DeskClassifier c(cfg);
        std::mt19937_64 gen(seed);
        const double a1 = 1.0 / std::sqrt(static_cast<double>(cfg.n_buckets));
        const double a2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
        const std::size_t w1n = c.w1_size();
        for (std::size_t i = 0; i < w1n; ++i)
            c.params_[c.w1_off() + i] = (2.0 * uniform_unit(gen) - 1.0) * a1;
        for (std::size_t i = 0; i < c.w2_size(); ++i)
            c.params_[c.w2_off() + i] = (2.0 * uniform_unit(gen) - 1.0) * a2;
        return c;
    }

    const DeskConfig& config() const { return cfg_; }
    int dim() const { return cfg_.hidden_dim; }
    std::uint64_t step() const { return step_; }
    std::size_t param_count() const { return params_.size(); }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& mutable_params() { return params_; }
    double& eta() { return cfg_.eta; }
    double& weight_decay() { return cfg_.weight_decay; }

    SparseFeature featurize(std::string_view text) const {
        const std::string s = truncate_tokens(text, static_cast<std::size_t>(cfg_.max_tokens));
        std::map<std::uint32_t, double> counts;
        const std::size_t len = s.size();
        for (int n = kNgramMin; n <= kNgramMax; ++n) {
            if (len < static_cast<std::size_t>(n)) break;
            for (std::size_t i = 0; i + n <= len; ++i) {
                const std::uint64_t h = fnv1a64(std::string_view(s).substr(i, n));
                counts[static_cast<std::uint32_t>(h % static_cast<std::uint64_t>(cfg_.n_buckets))] += 1.0;
            }
        }
        SparseFeature feats(counts.begin(), counts.end());
        double norm2 = 0.0;
        for (const auto& [b, v] : feats) norm2 += v * v;
        if (norm2 > 0.0) {
            const double scale = cfg_.feature_scale / std::sqrt(norm2);
            for (auto& [b, v] : feats) v *= scale;
        }
        return feats;
    }

    struct Trace {
        SparseFeature feats;
        std::vector<double> hidden;
        std::array<double, 2> logits{0.0, 0.0};
        Distribution2 prob;
    };

    Trace forward_trace(std::string_view text) const { return forward(featurize(text)); }

    Trace forward(SparseFeature feats) const {
        Trace t;
        t.feats = std::move(feats);
        const int d = cfg_.hidden_dim;
        t.hidden.assign(static_cast<std::size_t>(d), 0.0);
        const double* W1 = params_.data() + w1_off();
        const double* b1 = params_.data() + b1_off();
        const double* W2 = params_.data() + w2_off();
        const double* b2 = params_.data() + b2_off();
        for (int j = 0; j < d; ++j) {
            double pre = b1[j];
            const double* row = W1 + static_cast<std::size_t>(j) * static_cast<std::size_t>(cfg_.n_buckets);
            for (const auto& [bucket, val] : t.feats) pre += row[bucket] * val;
            t.hidden[static_cast<std::size_t>(j)] = std::tanh(pre);
        }
        for (int c = 0; c < 2; ++c) {
            double z = b2[c];
            const double* row = W2 + static_cast<std::size_t>(c) * static_cast<std::size_t>(d);
            for (int j = 0; j < d; ++j) z += row[j] * t.hidden[static_cast<std::size_t>(j)];
            t.logits[static_cast<std::size_t>(c)] = z;
        }
        const double m = std::max(t.logits[0], t.logits[1]);
        const double e0 = std::exp(t.logits[0] - m);
        const double e1 = std::exp(t.logits[1] - m);
        t.prob.p_hwt = e0 / (e0 + e1);
        t.prob.p_mgt = e1 / (e0 + e1);
        return t;
    }

    // Deterministic in (state, text); empty text maps to the zero feature
    // vector, which still yields a valid distribution.
    Distribution2 predict_proba(std::string_view text) const { return forward_trace(text).prob; }

    std::vector<double> encode(std::string_view text) const { return forward_trace(text).hidden; }

    // Upstream gradients for one example: d(loss)/d(logits) and, optionally,
    // d(loss)/d(representation) (empty means zero).
    struct OutputGrad {
        std::array<double, 2> dlogits{0.0, 0.0};
        std::vector<double> drepr;
    };

    void accumulate_grads(const Trace& t, const OutputGrad& og, std::vector<double>& grads) const {
        if (grads.empty()) grads.assign(params_.size(), 0.0);
        if (grads.size() != params_.size())
            throw Error("accumulate_grads: gradient buffer shape mismatch");
        const int d = cfg_.hidden_dim;
        if (!og.drepr.empty() && og.drepr.size() != static_cast<std::size_t>(d))
            throw Error("OutputGrad.drepr has wrong dimension");
        const double* W2 = params_.data() + w2_off();
        double* gW1 = grads.data() + w1_off();
        double* gb1 = grads.data() + b1_off();
        double* gW2 = grads.data() + w2_off();
        double* gb2 = grads.data() + b2_off();
        for (int c = 0; c < 2; ++c) {
            const double dl = og.dlogits[static_cast<std::size_t>(c)];
            gb2[c] += dl;
            double* row = gW2 + static_cast<std::size_t>(c) * static_cast<std::size_t>(d);
            for (int j = 0; j < d; ++j) row[j] += dl * t.hidden[static_cast<std::size_t>(j)];
        }
        for (int j = 0; j < d; ++j) {
            double dh = 0.0;
            for (int c = 0; c < 2; ++c)
                dh += W2[static_cast<std::size_t>(c) * static_cast<std::size_t>(d) + j] *
                      og.dlogits[static_cast<std::size_t>(c)];
            if (!og.drepr.empty()) dh += og.drepr[static_cast<std::size_t>(j)];
            const double hj = t.hidden[static_cast<std::size_t>(j)];
            const double dpre = dh * (1.0 - hj * hj);
            gb1[j] += dpre;
            double* row = gW1 + static_cast<std::size_t>(j) * static_cast<std::size_t>(cfg_.n_buckets);
            for (const auto& [bucket, val] : t.feats) row[bucket] += dpre * val;
        }
    }

    // ---- serialization ----------------------------------------------------

    std::vector<std::uint8_t> serialize() const {
        nlohmann::json header = {
            {"version", kCheckpointVersion},
            {"kind", "desk"},
            {"n_buckets", cfg_.n_buckets},
            {"hidden_dim", cfg_.hidden_dim},
            {"max_tokens", cfg_.max_tokens},
            {"ngram_min", kNgramMin},
            {"ngram_max", kNgramMax},
            {"feature_scale", cfg_.feature_scale},
            {"eta", cfg_.eta},
            {"weight_decay", cfg_.weight_decay},
            {"step", step_},
            {"param_count", params_.size()},
        };
        const std::string hs = header.dump();
        std::vector<std::uint8_t> out;
        out.reserve(16 + hs.size() + 3 * params_.size() * sizeof(double));
        const char magic[8] = {'R', 'C', 'T', 'D', 'E', 'S', 'K', '1'};
        out.insert(out.end(), magic, magic + 8);
        const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
        append_raw(out, &hlen, sizeof(hlen));
        out.insert(out.end(), hs.begin(), hs.end());
        append_raw(out, params_.data(), params_.size() * sizeof(double));
        append_raw(out, adam_m_.data(), adam_m_.size() * sizeof(double));
        append_raw(out, adam_v_.data(), adam_v_.size() * sizeof(double));
        return out;
    }

    static DeskClassifier deserialize(std::span<const std::uint8_t> bytes) {
        if (bytes.size() < 12 || std::memcmp(bytes.data(), "RCTDESK1", 8) != 0)
            throw Error("checkpoint: bad magic");
        std::uint32_t hlen = 0;
        std::memcpy(&hlen, bytes.data() + 8, sizeof(hlen));
        if (bytes.size() < 12 + hlen) throw Error("checkpoint: truncated header");
        nlohmann::json header;
        try {
            header = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + hlen);
        } catch (const nlohmann::json::exception& e) {
            throw Error(std::string("checkpoint: malformed header: ") + e.what());
        }
        if (header.value("version", 0u) != kCheckpointVersion)
            throw Error("checkpoint: unsupported version");
        if (header.at("ngram_min").get<int>() != kNgramMin ||
            header.at("ngram_max").get<int>() != kNgramMax)
            throw Error("checkpoint: unsupported n-gram range");
        DeskConfig cfg;
        cfg.n_buckets = header.at("n_buckets").get<int>();
        cfg.hidden_dim = header.at("hidden_dim").get<int>();
        cfg.max_tokens = header.at("max_tokens").get<int>();
        cfg.feature_scale = header.at("feature_scale").get<double>();
        cfg.eta = header.at("eta").get<double>();
        cfg.weight_decay = header.at("weight_decay").get<double>();
        DeskClassifier c(cfg);
        c.step_ = header.at("step").get<std::uint64_t>();
        const std::size_t n = header.at("param_count").get<std::size_t>();
        if (n != c.params_.size()) throw Error("checkpoint: parameter count mismatch");
        const std::size_t payload = 3 * n * sizeof(double);
        if (bytes.size() != 12 + hlen + payload) throw Error("checkpoint: payload size mismatch");
        const std::uint8_t* p = bytes.data() + 12 + hlen;
        std::memcpy(c.params_.data(), p, n * sizeof(double));
        std::memcpy(c.adam_m_.data(), p + n * sizeof(double), n * sizeof(double));
        std::memcpy(c.adam_v_.data(), p + 2 * n * sizeof(double), n * sizeof(double));
        return c;
    }

    void save_checkpoint(const std::string& path) const {
        const auto bytes = serialize();
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("cannot write checkpoint: " + path);
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw Error("short write on checkpoint: " + path);
    }

    static DeskClassifier load_checkpoint(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open checkpoint: " + path);
        std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
        return deserialize(bytes);
    }

    // SHA-256 of the serialized state; used by the freeze-contract checks.
    std::string digest() const {
        const auto bytes = serialize();
        unsigned char md[EVP_MAX_MD_SIZE];
        unsigned int mdlen = 0;
        if (EVP_Digest(bytes.data(), bytes.size(), md, &mdlen, EVP_sha256(), nullptr) != 1)
            throw Error("sha256 digest failed");
        static const char* hex = "0123456789abcdef";
        std::string out;
        out.reserve(2 * mdlen);
        for (unsigned int i = 0; i < mdlen; ++i) {
            out.push_back(hex[md[i] >> 4]);
            out.push_back(hex[md[i] & 0xf]);
        }
        return out;
    }

    // One AdamW step: decoupled weight decay, bias-corrected moments.
    void apply_update(const std::vector<double>& grads) {
        if (grads.size() != params_.size())
            throw Error("apply_update: gradient shape mismatch (" + std::to_string(grads.size()) +
                        " vs " + std::to_string(params_.size()) + " parameters)");
        constexpr double kBeta1 = 0.9;
        constexpr double kBeta2 = 0.999;
        constexpr double kEps = 1e-8;
        step_ += 1;
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step_));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const double g = grads[i];
            adam_m_[i] = kBeta1 * adam_m_[i] + (1.0 - kBeta1) * g;
            adam_v_[i] = kBeta2 * adam_v_[i] + (1.0 - kBeta2) * g * g;
            const double mhat = adam_m_[i] / bc1;
            const double vhat = adam_v_[i] / bc2;
            params_[i] -= cfg_.eta * (mhat / (std::sqrt(vhat) + kEps) + cfg_.weight_decay * params_[i]);
        }
    }

private:
    explicit DeskClassifier(const DeskConfig& cfg) : cfg_(cfg) {
        const std::size_t n = total_params(cfg);
        params_.assign(n, 0.0);
        adam_m_.assign(n, 0.0);
        adam_v_.assign(n, 0.0);
    }

    static std::size_t total_params(const DeskConfig& cfg) {
        const std::size_t d = static_cast<std::size_t>(cfg.hidden_dim);
        const std::size_t b = static_cast<std::size_t>(cfg.n_buckets);
        return d * b + d + 2 * d + 2;
    }

    std::size_t w1_off() const { return 0; }
    std::size_t w1_size() const {
        return static_cast<std::size_t>(cfg_.hidden_dim) * static_cast<std::size_t>(cfg_.n_buckets);
    }
    std::size_t b1_off() const { return w1_size(); }
    std::size_t w2_off() const { return w1_size() + static_cast<std::size_t>(cfg_.hidden_dim); }
    std::size_t w2_size() const { return 2 * static_cast<std::size_t>(cfg_.hidden_dim); }
    std::size_t b2_off() const { return w2_off() + w2_size(); }

    static void append_raw(std::vector<std::uint8_t>& out, const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        out.insert(out.end(), p, p + n);
    }

    DeskConfig cfg_;
    std::vector<double> params_;
    std::vector<double> adam_m_;
    std::vector<double> adam_v_;
    std::uint64_t step_ = 0;
};

struct BackboneOutput {
    Distribution2 prob;
    std::vector<double> repr;
};

// A loss functional supplies the scalar value and its gradients with respect
// to the backbone outputs; loss_and_grads backpropagates those into
// parameter-shaped gradients. Functionals must be pure so finite-difference
// checks can re-evaluate them under perturbed parameters.
template <typename F>
concept LossFunctional = requires(const F f, std::span<const BackboneOutput> outs) {
    { f.name() } -> std::convertible_to<std::string>;
    { f.value(outs) } -> std::convertible_to<double>;
    { f.output_grads(outs) } -> std::convertible_to<std::vector<DeskClassifier::OutputGrad>>;
};

template <LossFunctional F>
std::pair<double, std::vector<double>> loss_and_grads(const DeskClassifier& clf,
                                                      std::span<const std::string> texts,
                                                      const F& functional) {
    std::vector<DeskClassifier::Trace> traces;
    traces.reserve(texts.size());
    std::vector<BackboneOutput> outputs;
    outputs.reserve(texts.size());
    for (const auto& t : texts) {
        traces.push_back(clf.forward_trace(t));
        outputs.push_back({traces.back().prob, traces.back().hidden});
    }
    const double loss = functional.value(outputs);
    if (!std::isfinite(loss))
        throw Error("non-finite loss in " + functional.name());
    const auto ogs = functional.output_grads(outputs);
    if (ogs.size() != traces.size())
        throw Error(functional.name() + ": output_grads count mismatch");
    std::vector<double> grads(clf.param_count(), 0.0);
    for (std::size_t i = 0; i < traces.size(); ++i)
        clf.accumulate_grads(traces[i], ogs[i], grads);
    return {loss, std::move(grads)};
}

inline void apply_update(DeskClassifier& clf, const std::vector<double>& grads) {
    clf.apply_update(grads);
}

} // namespace react
