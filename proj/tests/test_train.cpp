#include <gtest/gtest.h>

#include <cmath>

#include "colm/error.hpp"
#include "colm/train.hpp"

namespace colm::train {
namespace {

TEST(Scheduler, HalvesAfterPatienceOnFlatLoss) {
    PlateauScheduler s(1.0, 5);
    std::vector<double> rates;
    for (int epoch = 1; epoch <= 12; ++epoch) {
        s.step(2.0);
        rates.push_back(s.lr());
    }
    // Epoch 1 sets the best; epochs 2..6 fail to improve, 7..11 again.
    const std::vector<double> expected = {1, 1, 1, 1, 1, 0.5, 0.5, 0.5, 0.5, 0.5, 0.25, 0.25};
    EXPECT_EQ(rates, expected);
}

TEST(Scheduler, ImprovementResetsCount) {
    PlateauScheduler s(1.0, 2);
    EXPECT_FALSE(s.step(10.0));
    EXPECT_FALSE(s.step(10.0));
    EXPECT_FALSE(s.step(9.0));
    EXPECT_FALSE(s.step(9.0));
    EXPECT_TRUE(s.step(9.0));
    EXPECT_EQ(s.lr(), 0.5);
}

TEST(Scheduler, TinyImprovementCountsAsPlateau) {
    PlateauScheduler s(1.0, 1);
    s.step(1.0);
    EXPECT_TRUE(s.step(1.0 - 1e-6));
}

TEST(Adam, TwoStepsByHand) {
    net::MatchParams p;
    p.set("w", Matrix::Constant(1, 1, 1.0));
    Adam adam;
    const double lr = 0.1, g1 = 2.0, g2 = -1.0;
    adam.step(p, {{"w", Matrix::Constant(1, 1, g1)}}, lr);
    // Bias-corrected moments equal g1 and g1^2 after one step.
    double w = 1.0 - lr * g1 / (std::abs(g1) + 1e-8);
    EXPECT_NEAR(p.at("w")(0, 0), w, 1e-14);
    adam.step(p, {{"w", Matrix::Constant(1, 1, g2)}}, lr);
    const double m = 0.9 * 0.1 * g1 + 0.1 * g2, v = 0.999 * 0.001 * g1 * g1 + 0.001 * g2 * g2;
    const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
    w -= lr * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(p.at("w")(0, 0), w, 1e-14);
    EXPECT_EQ(adam.steps(), 2u);
}

std::vector<loss::TrainingPair> pairs(std::size_t count, std::uint64_t seed, double jitter = 0.05) {
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = 12;
    sc.extent_xy = 10.0;
    sc.min_spacing = 1.0;
    sc.seed = seed;
    synth::PerturbConfig pc;
    pc.jitter = jitter;
    pc.extent_xy = 10.0;
    return synthetic_pairs(sc, pc, count);
}

TrainConfig small_config() {
    TrainConfig c;
    c.batch_size = 4;
    c.epochs = 3;
    c.seed = 11;
    return c;
}

TEST(Train, CurveIsDeterministic) {
    const auto cfg = net::NetConfig::toy(8, 1);
    const auto train = pairs(8, 1), val = pairs(4, 2);
    const auto a = train_toy(train, val, net::init_params(cfg, 1), cfg, small_config(), {});
    const auto b = train_toy(train, val, net::init_params(cfg, 1), cfg, small_config(), {});
    ASSERT_EQ(a.curve.size(), 4u);
    for (std::size_t e = 0; e < a.curve.size(); ++e) {
        EXPECT_EQ(a.curve[e].epoch, e);
        EXPECT_EQ(a.curve[e].train_loss, b.curve[e].train_loss);
        EXPECT_EQ(a.curve[e].val_precision, b.curve[e].val_precision);
    }
    EXPECT_TRUE(a.params == b.params);
}

TEST(Train, CallbackSeesEveryEpoch) {
    const auto cfg = net::NetConfig::toy(8, 1);
    const auto train = pairs(4, 3);
    std::vector<std::size_t> seen;
    train_toy(train, {}, net::init_params(cfg, 1), cfg, small_config(), {},
              [&](const EpochRecord& r) { seen.push_back(r.epoch); });
    EXPECT_EQ(seen, (std::vector<std::size_t>{0, 1, 2, 3}));
}

TEST(Train, HugeRateDiverges) {
    const auto cfg = net::NetConfig::toy(8, 1);
    const auto train = pairs(8, 4);
    auto tc = small_config();
    tc.lr = 1e300;
    try {
        train_toy(train, {}, net::init_params(cfg, 1), cfg, tc, {});
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.last_finite_epoch(), 0);
    }
}

TEST(Train, RejectsBadConfig) {
    const auto cfg = net::NetConfig::toy(8, 1);
    auto tc = small_config();
    tc.batch_size = 0;
    EXPECT_THROW(train_toy(pairs(2, 5), {}, net::init_params(cfg, 1), cfg, tc, {}), InputError);
    EXPECT_THROW(train_toy({}, {}, net::init_params(cfg, 1), cfg, small_config(), {}), InputError);
}

TEST(Train, FitsIdenticalSets) {
    // Source and target are the same set; after a short fit each object's
    // best match should be itself.
    const auto cfg = net::NetConfig::toy(8, 1);
    auto data = pairs(8, 6, 0.0);
    for (auto& p : data) {
        p.target = p.source;
        p.t_gt = RigidTransform::identity();
    }
    auto tc = small_config();
    tc.epochs = 10;
    tc.max_yaw = 0.0;
    tc.jitter = 0.0;
    tc.lr = 3e-3;
    const auto r = train_toy(data, data, net::init_params(cfg, 6), cfg, tc, {});
    EXPECT_LT(r.curve.back().train_loss, r.curve.front().train_loss);
    EXPECT_GE(r.curve.back().val_precision, 0.8);
}

TEST(MatchPrecision, NoPartnersGivesZero) {
    const auto cfg = net::NetConfig::toy(8, 1);
    const std::vector<loss::TrainingPair> none = {
        {ObjectSet({Vec3(0, 0, 0)}, {1}), ObjectSet({Vec3(0, 0, 0)}, {2}), RigidTransform::identity()}};
    EXPECT_EQ(match_precision(none, net::init_params(cfg, 1), cfg, {}), 0.0);
}

TEST(SyntheticPairs, OffsetSelectsLaterPairs) {
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = 10;
    sc.extent_xy = 10;
    sc.min_spacing = 1;
    const synth::PerturbConfig pc;
    const auto all = synthetic_pairs(sc, pc, 5);
    const auto tail = synthetic_pairs(sc, pc, 2, 3);
    for (std::size_t k = 0; k < 2; ++k) {
        EXPECT_EQ(tail[k].source.centroids(), all[k + 3].source.centroids());
        EXPECT_EQ(tail[k].target.classes(), all[k + 3].target.classes());
    }
}

}  // namespace
}  // namespace colm::train
