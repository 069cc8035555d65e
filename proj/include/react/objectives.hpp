#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "react/backbone.hpp"
#include "react/rewrite.hpp"
#include "react/types.hpp"

namespace react {

// Probabilities are clamped at this floor before any log.
inline constexpr double kProbFloor = 1e-12;

inline double clamped_neg_log(double p) { return -std::log(std::max(p, kProbFloor)); }

struct ObjectiveConfig {
    double alpha = 0.5;      // weight of the rewrite term in the classification loss
    double lambda_pbc = 1.2; // weight of the contrastive term in the total loss
    double delta_same = 0.1; // cosine margin for same-label pairs
    double delta_diff = 0.3; // cosine margin for different-label pairs
    bool pbc_enabled = true;

    void validate() const {
        if (alpha < 0) throw Error("ObjectiveConfig: alpha must be >= 0");
        if (lambda_pbc < 0) throw Error("ObjectiveConfig: lambda_pbc must be >= 0");
        if (delta_same < 0 || delta_same > 1) throw Error("ObjectiveConfig: delta_same must be in [0,1]");
        if (delta_diff < 0 || delta_diff > 1) throw Error("ObjectiveConfig: delta_diff must be in [0,1]");
    }
};

// An original example paired with its rewrite. The rewrite's training label
// is fixed to MGT regardless of where the source came from.
struct PairBatch {
    LabeledExample x;
    RewriteRecord x_tilde;
    static constexpr Label kRewriteLabel = Label::MGT;
};

// Classification loss over the pair: cross-entropy on the clean example plus
// an alpha-weighted term pushing the rewrite toward MGT.
inline double acl_loss(double p_true_x, double p_mgt_xtilde, double alpha) {
    return clamped_neg_log(p_true_x) + alpha * clamped_neg_log(p_mgt_xtilde);
}

// Cosine of the l2-normalized vectors. A zero vector makes the pair
// orthogonal by convention (c = 0) so the loss stays finite.
inline double pair_cosine(std::span<const double> h, std::span<const double> h_tilde) {
    if (h.size() != h_tilde.size()) throw Error("pair_cosine: dimension mismatch");
    double na = 0, nb = 0, dot = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        na += h[i] * h[i];
        nb += h_tilde[i] * h_tilde[i];
        dot += h[i] * h_tilde[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

struct CosineGrad {
    double c = 0.0;
    std::vector<double> dc_dh;
    std::vector<double> dc_dht;
    bool degenerate = false; // a zero vector triggered the c = 0 convention
};

inline CosineGrad pair_cosine_grad(std::span<const double> h, std::span<const double> h_tilde) {
    if (h.size() != h_tilde.size()) throw Error("pair_cosine_grad: dimension mismatch");
    CosineGrad out;
    double na = 0, nb = 0, dot = 0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        na += h[i] * h[i];
        nb += h_tilde[i] * h_tilde[i];
        dot += h[i] * h_tilde[i];
    }
    if (na == 0.0 || nb == 0.0) {
        out.degenerate = true;
        return out;
    }
    const double norm_a = std::sqrt(na), norm_b = std::sqrt(nb);
    out.c = dot / (norm_a * norm_b);
    out.dc_dh.resize(h.size());
    out.dc_dht.resize(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double u = h[i] / norm_a;
        const double v = h_tilde[i] / norm_b;
        out.dc_dh[i] = (v - out.c * u) / norm_a;
        out.dc_dht[i] = (u - out.c * v) / norm_b;
    }
    return out;
}

// Margin hinge on the pair cosine: same-label pairs are pulled toward
// c >= 1 - delta_same, different-label pairs pushed toward c <= delta_diff.
inline double pbc_loss(double c, Label l, Label l_tilde, const ObjectiveConfig& cfg) {
    if (l == l_tilde) return std::max(0.0, (1.0 - cfg.delta_same) - c);
    return std::max(0.0, c - cfg.delta_diff);
}

inline double total_detector_loss(double acl, double pbc, const ObjectiveConfig& cfg) {
    if (!cfg.pbc_enabled) return acl;
    return acl + cfg.lambda_pbc * pbc;
}

// ---- loss functionals (analytic gradients for loss_and_grads) ---------------

namespace detail {

// d(-log max(p[l], floor))/dlogits under a 2-way softmax.
inline std::array<double, 2> ce_dlogits(const Distribution2& p, Label l, double weight) {
    std::array<double, 2> d{0.0, 0.0};
    if (p.p(l) <= kProbFloor) return d; // clamped region is flat
    d[0] = weight * (p.p_hwt - (l == Label::HWT ? 1.0 : 0.0));
    d[1] = weight * (p.p_mgt - (l == Label::MGT ? 1.0 : 0.0));
    return d;
}

} // namespace detail

// Mean cross-entropy over a batch of labeled texts.
struct CrossEntropyBatchLoss {
    std::vector<Label> labels;

    std::string name() const { return "cross_entropy"; }

    double value(std::span<const BackboneOutput> outs) const {
        if (outs.size() != labels.size()) throw Error("cross_entropy: batch size mismatch");
        double sum = 0;
        for (std::size_t i = 0; i < outs.size(); ++i)
            sum += clamped_neg_log(outs[i].prob.p(labels[i]));
        return sum / static_cast<double>(outs.size());
    }

    std::vector<DeskClassifier::OutputGrad> output_grads(std::span<const BackboneOutput> outs) const {
        std::vector<DeskClassifier::OutputGrad> ogs(outs.size());
        const double w = 1.0 / static_cast<double>(outs.size());
        for (std::size_t i = 0; i < outs.size(); ++i)
            ogs[i].dlogits = detail::ce_dlogits(outs[i].prob, labels[i], w);
        return ogs;
    }
};

// Negative log-likelihood of the target-assigned pseudo label (single text).
struct AttackerNllLoss {
    Label pseudo = Label::MGT;

    std::string name() const { return "attacker_nll"; }

    double value(std::span<const BackboneOutput> outs) const {
        if (outs.size() != 1) throw Error("attacker_nll: expects exactly one text");
        return clamped_neg_log(outs[0].prob.p(pseudo));
    }

    std::vector<DeskClassifier::OutputGrad> output_grads(std::span<const BackboneOutput> outs) const {
        std::vector<DeskClassifier::OutputGrad> ogs(1);
        ogs[0].dlogits = detail::ce_dlogits(outs[0].prob, pseudo, 1.0);
        return ogs;
    }
};

struct DetectorLossParts {
    double acl = 0;
    double pbc = 0;
    double total = 0;
    double cosine = 0;
    bool degenerate_cosine = false;
};

// The full detector objective over [X, X~]: classification terms through the
// probability heads, the contrastive hinge through both representations.
struct DetectorPairLoss {
    Label x_label = Label::HWT;
    ObjectiveConfig cfg;

    std::string name() const { return "detector_total"; }

    DetectorLossParts parts(std::span<const BackboneOutput> outs) const {
        if (outs.size() != 2) throw Error("detector_total: expects [original, rewrite]");
        DetectorLossParts p;
        p.acl = acl_loss(outs[0].prob.p(x_label), outs[1].prob.p_mgt, cfg.alpha);
        if (!std::isfinite(p.acl)) throw Error("non-finite loss in detector_total component acl");
        if (cfg.pbc_enabled) {
            const double c = pair_cosine(outs[0].repr, outs[1].repr);
            p.degenerate_cosine = (c == 0.0) && !outs[0].repr.empty() &&
                                  (l2_norm(outs[0].repr) == 0.0 || l2_norm(outs[1].repr) == 0.0);
            p.cosine = c;
            p.pbc = pbc_loss(c, x_label, PairBatch::kRewriteLabel, cfg);
            if (!std::isfinite(p.pbc)) throw Error("non-finite loss in detector_total component pbc");
        }
        p.total = total_detector_loss(p.acl, p.pbc, cfg);
        return p;
    }

    double value(std::span<const BackboneOutput> outs) const { return parts(outs).total; }

    std::vector<DeskClassifier::OutputGrad> output_grads(std::span<const BackboneOutput> outs) const {
        if (outs.size() != 2) throw Error("detector_total: expects [original, rewrite]");
        std::vector<DeskClassifier::OutputGrad> ogs(2);
        ogs[0].dlogits = detail::ce_dlogits(outs[0].prob, x_label, 1.0);
        ogs[1].dlogits = detail::ce_dlogits(outs[1].prob, Label::MGT, cfg.alpha);
        if (!cfg.pbc_enabled) return ogs;

        const auto cg = pair_cosine_grad(outs[0].repr, outs[1].repr);
        if (cg.degenerate) return ogs;
        const bool same = (x_label == PairBatch::kRewriteLabel);
        double dloss_dc = 0.0;
        if (same && cg.c < 1.0 - cfg.delta_same) dloss_dc = -cfg.lambda_pbc;
        if (!same && cg.c > cfg.delta_diff) dloss_dc = cfg.lambda_pbc;
        if (dloss_dc != 0.0) {
            ogs[0].drepr.resize(outs[0].repr.size());
            ogs[1].drepr.resize(outs[1].repr.size());
            for (std::size_t i = 0; i < outs[0].repr.size(); ++i) {
                ogs[0].drepr[i] = dloss_dc * cg.dc_dh[i];
                ogs[1].drepr[i] = dloss_dc * cg.dc_dht[i];
            }
        }
        return ogs;
    }

private:
    static double l2_norm(const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    }
};

// One optimizer step of the target detector on the pair objective. The
// surrogate is not an input here at all, which is what keeps it frozen.
inline DetectorLossParts detector_step(DeskClassifier& target, const PairBatch& pair,
                                       const ObjectiveConfig& cfg,
                                       const std::function<void(std::string_view)>& log = {}) {
    cfg.validate();
    const DetectorPairLoss functional{pair.x.label, cfg};
    const std::vector<std::string> texts = {pair.x.text, pair.x_tilde.text};
    std::vector<BackboneOutput> outs;
    std::vector<DeskClassifier::Trace> traces;
    for (const auto& t : texts) {
        traces.push_back(target.forward_trace(t));
        outs.push_back({traces.back().prob, traces.back().hidden});
    }
    const DetectorLossParts parts = functional.parts(outs);
    if (!std::isfinite(parts.total)) throw Error("non-finite loss in detector_total");
    if (parts.degenerate_cosine && log) log("pbc cosine degenerate (zero representation); using c = 0");
    const auto ogs = functional.output_grads(outs);
    std::vector<double> grads(target.param_count(), 0.0);
    for (std::size_t i = 0; i < traces.size(); ++i) target.accumulate_grads(traces[i], ogs[i], grads);
    target.apply_update(grads);
    return parts;
}

} // namespace react
