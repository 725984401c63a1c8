#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "colm/autodiff.hpp"
#include "colm/core.hpp"
#include "colm/net.hpp"

namespace colm::loss {

using ad::Matrix;

struct LossConfig {
    double tau_match = 1.0;  ///< metres; positives closer than this after alignment
    double gamma = 40.0;
    double delta_p = 0.1;
    double delta_n = 1.4;

    void validate() const;
};

struct Positive {
    std::size_t index;  ///< object in the other set
    double rho;         ///< 1 - d / tau_match, in (0, 1]
};

struct Anchor {
    std::size_t index;
    std::vector<Positive> positives;  ///< ascending index; all other objects are negatives
};

/// Positive structure for both directions of a pair.
struct MatchSupervision {
    std::size_t n_source = 0;
    std::size_t n_target = 0;
    std::vector<Anchor> source_anchors;  ///< anchors in the source set, positives in the target
    std::vector<Anchor> target_anchors;  ///< anchors in the target set, positives in the source

    bool empty() const { return source_anchors.empty() && target_anchors.empty(); }
};

/// Source objects are mapped through `t_gt`; (i, j) is positive when the
/// aligned distance is below tau_match and the classes agree.
MatchSupervision build_supervision(const ObjectSet& source, const ObjectSet& target, const RigidTransform& t_gt,
                                   const LossConfig& cfg);

struct LossValue {
    double value = 0.0;
    bool source_side_empty = false;
    bool target_side_empty = false;
};

/// Circle loss from a feature distance matrix h (n_s x n_m, squared L2).
/// Per anchor i: log(1 + sum_pos exp(lp) * sum_neg exp(ln)) with
///   lp = sqrt(rho) * gamma * max(0, h - delta_p) * (h - delta_p)
///   ln = gamma * max(0, delta_n - h) * (delta_n - h);
/// averaged over anchors per side, then over the two sides. A side without
/// anchors contributes 0. When `grad` is non-null it receives dL/dh.
LossValue circle_loss_from_distances(const Matrix& h, const MatchSupervision& sup, const LossConfig& cfg,
                                     Matrix* grad = nullptr);

/// Loss on hybrid features (rows unit-normalised first when `normalize`).
LossValue circle_loss(const Matrix& h_s, const Matrix& h_m, const MatchSupervision& sup, const LossConfig& cfg,
                      bool normalize = true);

/// Graph node for the loss; gradient flows into both feature sets.
ad::Var circle_loss(const ad::Var& h_s, const ad::Var& h_m, const MatchSupervision& sup, const LossConfig& cfg,
                    bool normalize);

struct TrainingPair {
    ObjectSet source;
    ObjectSet target;
    RigidTransform t_gt;
};

struct Gradients {
    double loss = 0.0;        ///< mean over items that had anchors
    std::size_t items = 0;    ///< items contributing
    std::map<std::string, Matrix> grads;  ///< same names and shapes as MatchParams
};

/// Mean loss over the batch and its exact gradient w.r.t. every parameter.
/// Items without anchors are skipped; throws InputError("loss.no_anchors")
/// if none remain. Items are evaluated on up to `jobs` threads and reduced
/// in item order.
Gradients grad_params(std::span<const TrainingPair> batch, const net::MatchParams& params, const net::NetConfig& ncfg,
                      const LossConfig& lcfg, std::size_t jobs = 1);

/// Mean loss only (no gradient); items without anchors skipped.
/// Returns 0 loss with 0 items when nothing contributes.
Gradients evaluate_loss(std::span<const TrainingPair> batch, const net::MatchParams& params,
                        const net::NetConfig& ncfg, const LossConfig& lcfg);

}  // namespace colm::loss
