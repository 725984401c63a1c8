#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "colm/loss.hpp"
#include "colm/net.hpp"
#include "colm/synth.hpp"

namespace colm::train {

using ad::Matrix;

struct TrainConfig {
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    double lr = 1e-3;
    std::size_t patience = 5;  ///< non-improving epochs before the lr is halved
    double lr_factor = 0.5;
    double max_yaw = 2.0 * M_PI;  ///< augmentation: yaw applied to the source, uniform in [0, max_yaw)
    double jitter = 0.05;         ///< augmentation: per-coordinate centroid noise, metres
    std::uint64_t seed = 0;
    std::size_t jobs = 1;

    void validate() const;
};

/// ADAM with bias correction (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
public:
    explicit Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(net::MatchParams& params, const std::map<std::string, Matrix>& grads, double lr);
    std::size_t steps() const noexcept { return t_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::map<std::string, Matrix> m_, v_;
};

/// Multiplies the learning rate by `factor` once `patience` consecutive
/// epochs fail to improve on the best loss (relative threshold 1e-4), then
/// restarts the count.
class PlateauScheduler {
public:
    PlateauScheduler(double lr, std::size_t patience, double factor = 0.5);

    /// Reports an epoch's loss; returns true when the rate was reduced.
    bool step(double loss);
    double lr() const noexcept { return lr_; }

private:
    double lr_;
    std::size_t patience_;
    double factor_;
    double best_;
    std::size_t bad_ = 0;
};

struct EpochRecord {
    std::size_t epoch = 0;  ///< 0 is the evaluation before any update
    double lr = 0.0;        ///< rate used during this epoch
    double train_loss = 0.0;
    double val_precision = 0.0;
    double wall_s = 0.0;
};

struct TrainResult {
    net::MatchParams params;
    std::vector<EpochRecord> curve;
};

/// Training pairs `index_offset .. index_offset + count - 1` of the synthetic generator.
std::vector<loss::TrainingPair> synthetic_pairs(const synth::SceneConfig& scene, const synth::PerturbConfig& perturb,
                                                std::size_t count, std::uint64_t index_offset = 0);

/// Fraction of source objects with a ground-truth partner whose highest
/// masked similarity falls on such a partner. Pairs without partners are
/// skipped; returns 0 when nothing is scored.
double match_precision(std::span<const loss::TrainingPair> pairs, const net::MatchParams& params,
                       const net::NetConfig& ncfg, const loss::LossConfig& lcfg);

/// Called after each epoch (including epoch 0).
using EpochCallback = std::function<void(const EpochRecord&)>;

/// Epoch 0 records the loss on the unaugmented training pairs before any
/// update. Each later epoch shuffles the pairs, augments every source with a
/// random yaw and every centroid with jitter, steps ADAM per batch and
/// reports the mean loss of the batches that had anchors. Throws
/// DivergenceError when a loss or parameter becomes non-finite.
TrainResult train_toy(std::span<const loss::TrainingPair> train, std::span<const loss::TrainingPair> validation,
                      net::MatchParams params, const net::NetConfig& ncfg, const TrainConfig& tcfg,
                      const loss::LossConfig& lcfg, const EpochCallback& on_epoch = {});

}  // namespace colm::train
