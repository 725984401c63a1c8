#include "colm/train.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "colm/error.hpp"
#include "colm/rng.hpp"

namespace colm::train {

void TrainConfig::validate() const {
    if (batch_size == 0 || epochs == 0 || patience == 0 || jobs == 0) {
        throw InputError("train.config", "batch size, epochs, patience and jobs must be positive");
    }
    if (!(lr > 0.0) || !(lr_factor > 0.0 && lr_factor < 1.0)) {
        throw InputError("train.config", "lr must be > 0 and lr_factor in (0, 1)");
    }
    if (!(max_yaw >= 0.0) || !(jitter >= 0.0)) throw InputError("train.config", "augmentation must be non-negative");
}

void Adam::step(net::MatchParams& params, const std::map<std::string, Matrix>& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, g] : grads) {
        Matrix& w = params.at(name);
        auto [mit, m_new] = m_.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
        auto [vit, v_new] = v_.try_emplace(name, Matrix::Zero(g.rows(), g.cols()));
        Matrix& m = mit->second;
        Matrix& v = vit->second;
        m = beta1_ * m + (1.0 - beta1_) * g;
        v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
        w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
    }
}

PlateauScheduler::PlateauScheduler(double lr, std::size_t patience, double factor)
    : lr_(lr), patience_(patience), factor_(factor), best_(std::numeric_limits<double>::infinity()) {}

bool PlateauScheduler::step(double loss) {
    if (std::isinf(best_) || loss < best_ - 1e-4 * std::abs(best_)) {
        best_ = loss;
        bad_ = 0;
        return false;
    }
    if (++bad_ < patience_) return false;
    lr_ *= factor_;
    bad_ = 0;
    return true;
}

std::vector<loss::TrainingPair> synthetic_pairs(const synth::SceneConfig& scene, const synth::PerturbConfig& perturb,
                                                std::size_t count, std::uint64_t index_offset) {
    std::vector<loss::TrainingPair> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        auto p = synth::make_pair(scene, perturb, index_offset + i);
        out.push_back({std::move(p.source), std::move(p.target), p.t_gt});
    }
    return out;
}

double match_precision(std::span<const loss::TrainingPair> pairs, const net::MatchParams& params,
                       const net::NetConfig& ncfg, const loss::LossConfig& lcfg) {
    std::size_t scored = 0, correct = 0;
    for (const auto& pair : pairs) {
        const auto sup = loss::build_supervision(pair.source, pair.target, pair.t_gt, lcfg);
        if (sup.source_anchors.empty()) continue;
        ad::Graph g;
        const net::BoundParams p(g, params, false);
        const auto h = net::hybrid_features(g, p, pair.source, pair.target, ncfg);
        const auto s = net::mask_semantic(net::similarity(h.source.value(), h.target.value(), ncfg.normalize_features),
                                          pair.source.classes(), pair.target.classes());
        for (const auto& a : sup.source_anchors) {
            ++scored;
            Eigen::Index best = 0;
            const double top = s.row(static_cast<Eigen::Index>(a.index)).maxCoeff(&best);
            if (top <= 0.0) continue;
            for (const auto& pos : a.positives) {
                if (static_cast<Eigen::Index>(pos.index) == best) {
                    ++correct;
                    break;
                }
            }
        }
    }
    return scored == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(scored);
}

namespace {

ObjectSet jittered(const ObjectSet& objects, const RigidTransform& t, double sigma, Rng& rng) {
    std::vector<Vec3> c = colm::apply(t, objects.centroids());
    if (sigma > 0.0) {
        for (auto& x : c) x += Vec3(rng.normal(0.0, sigma), rng.normal(0.0, sigma), rng.normal(0.0, sigma));
    }
    return {std::move(c), objects.classes()};
}

loss::TrainingPair augment(const loss::TrainingPair& pair, const TrainConfig& cfg, Rng& rng) {
    const auto yaw = RigidTransform::from_yaw(rng.uniform(0.0, cfg.max_yaw));
    return {jittered(pair.source, yaw, cfg.jitter, rng), jittered(pair.target, RigidTransform::identity(), cfg.jitter, rng),
            compose(pair.t_gt, invert(yaw))};
}

bool all_finite(const net::MatchParams& params) {
    for (const auto& [name, t] : params.tensors())
        if (!t.allFinite()) return false;
    return true;
}

}  // namespace

TrainResult train_toy(std::span<const loss::TrainingPair> train, std::span<const loss::TrainingPair> validation,
                      net::MatchParams params, const net::NetConfig& ncfg, const TrainConfig& tcfg,
                      const loss::LossConfig& lcfg, const EpochCallback& on_epoch) {
    tcfg.validate();
    lcfg.validate();
    net::check_shapes(params, ncfg);
    if (train.empty()) throw InputError("train.empty_dataset", "no training pairs");

    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(clock::now() - start).count(); };

    TrainResult result;
    auto record = [&](EpochRecord r) {
        r.wall_s = elapsed();
        result.curve.push_back(r);
        if (on_epoch) on_epoch(r);
    };

    const auto initial = loss::evaluate_loss(train, params, ncfg, lcfg);
    if (initial.items == 0) throw InputError("loss.no_anchors", "no training pair has a positive pair");
    if (!std::isfinite(initial.loss)) throw DivergenceError("initial loss is not finite", -1);
    record({0, tcfg.lr, initial.loss, match_precision(validation, params, ncfg, lcfg), 0.0});

    Rng rng(tcfg.seed);
    Adam adam;
    PlateauScheduler sched(tcfg.lr, tcfg.patience, tcfg.lr_factor);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<loss::TrainingPair> batch;

    for (std::size_t epoch = 1; epoch <= tcfg.epochs; ++epoch) {
        const double lr = sched.lr();
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
        double total = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += tcfg.batch_size) {
            batch.clear();
            for (std::size_t k = b; k < std::min(order.size(), b + tcfg.batch_size); ++k) {
                batch.push_back(augment(train[order[k]], tcfg, rng));
            }
            loss::Gradients g;
            try {
                g = loss::grad_params(batch, params, ncfg, lcfg, tcfg.jobs);
            } catch (const InputError& e) {
                if (e.code() == "loss.no_anchors") continue;
                throw;
            }
            if (!std::isfinite(g.loss)) {
                std::ostringstream msg;
                msg << "non-finite loss in epoch " << epoch;
                throw DivergenceError(msg.str(), static_cast<int>(epoch) - 1);
            }
            adam.step(params, g.grads, lr);
            if (!all_finite(params)) {
                std::ostringstream msg;
                msg << "non-finite parameters in epoch " << epoch;
                throw DivergenceError(msg.str(), static_cast<int>(epoch) - 1);
            }
            total += g.loss;
            ++batches;
        }
        if (batches == 0) continue;
        const double mean = total / static_cast<double>(batches);
        record({epoch, lr, mean, match_precision(validation, params, ncfg, lcfg), 0.0});
        sched.step(mean);
    }
    result.params = std::move(params);
    return result;
}

}  // namespace colm::train
