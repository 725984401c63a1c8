#include <gtest/gtest.h>

#include <Eigen/SVD>

#include "colm/error.hpp"
#include "colm/pose.hpp"
#include "colm/synth.hpp"
#include "helpers.hpp"

namespace colm {
namespace {

using test::rz;

std::vector<double> ones(std::size_t n) { return std::vector<double>(n, 1.0); }

TEST(WeightedSvd, RecoversNoiselessTransform) {
    Rng rng(1);
    const auto t = test::random_transform(rng);
    const auto src = test::random_points(rng, 10, 20.0);
    const auto dst = colm::apply(t, src);
    const auto e = pose_error(weighted_svd(src, dst, ones(10)), t);
    EXPECT_LT(e.rte_m, 1e-9);
    EXPECT_LT(e.rre_rad, 1e-7);
}

TEST(WeightedSvd, SameSetsGiveIdentity) {
    Rng rng(2);
    const auto src = test::random_points(rng, 8, 5.0);
    const auto e = pose_error(weighted_svd(src, src, ones(8)), RigidTransform{});
    EXPECT_LT(e.rte_m, 1e-12);
    EXPECT_LT(e.rre_rad, 1e-7);
}

TEST(WeightedSvd, ZeroWeightOutlierIgnored) {
    Rng rng(3);
    const auto t = test::random_transform(rng);
    auto src = test::random_points(rng, 4, 10.0);
    auto dst = colm::apply(t, src);
    dst[3] += Vec3(7, -3, 2);
    const std::vector<double> w = {1, 1, 1, 0};
    const std::vector<Vec3> s3(src.begin(), src.begin() + 3), d3(dst.begin(), dst.begin() + 3);
    const auto a = weighted_svd(src, dst, w);
    const auto b = weighted_svd(s3, d3, ones(3));
    EXPECT_LT(test::max_abs_diff(a.rotation(), b.rotation()), 1e-12);
    EXPECT_LT((a.translation() - b.translation()).norm(), 1e-12);
}

// Closed-form Kabsch written out independently: unweighted on duplicated
// points equals weighted with integer weights.
TEST(WeightedSvd, IntegerWeightsEqualDuplication) {
    Rng rng(4);
    const auto src = test::random_points(rng, 6, 10.0);
    auto dst = colm::apply(test::random_transform(rng), src);
    for (auto& p : dst) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.1;
    const std::vector<double> w = {1, 2, 3, 1, 2, 1};
    std::vector<Vec3> s2, d2;
    for (std::size_t i = 0; i < 6; ++i)
        for (int k = 0; k < static_cast<int>(w[i]); ++k) {
            s2.push_back(src[i]);
            d2.push_back(dst[i]);
        }
    const auto a = weighted_svd(src, dst, w);
    const auto b = weighted_svd(s2, d2, ones(s2.size()));
    EXPECT_LT(test::max_abs_diff(a.rotation(), b.rotation()), 1e-10);
    EXPECT_LT((a.translation() - b.translation()).norm(), 1e-10);
}

TEST(WeightedSvd, Errors) {
    const std::vector<Vec3> two = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    EXPECT_THROW(weighted_svd(two, two, ones(2)), NoSolutionError);
    const std::vector<Vec3> line = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0), Vec3(3, 0, 0)};
    EXPECT_THROW(weighted_svd(line, line, ones(4)), NoSolutionError);
    const std::vector<Vec3> tri = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    EXPECT_THROW(weighted_svd(tri, tri, std::vector<double>{0, 0, 0}), NoSolutionError);
}

TEST(WeightedSvdProperties, IsMinimiserOfObjective) {
    Rng rng(5);
    const auto src = test::random_points(rng, 12, 10.0);
    auto dst = colm::apply(test::random_transform(rng), src);
    for (auto& p : dst) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.3;
    std::vector<double> w;
    for (int i = 0; i < 12; ++i) w.push_back(rng.uniform(0.1, 2.0));
    const auto best = weighted_svd(src, dst, w);
    const double f = weighted_residual(best, src, dst, w);
    for (int k = 0; k < 200; ++k) {
        const Mat3 dr = Eigen::AngleAxisd(rng.uniform(-0.05, 0.05), test::random_rotation(rng).col(0)).toRotationMatrix();
        const RigidTransform delta(dr, Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.05);
        EXPECT_LE(f, weighted_residual(compose(delta, best), src, dst, w) + 1e-12);
    }
}

TEST(WeightedSvdProperties, WeightScaleInvariance) {
    Rng rng(6);
    const auto src = test::random_points(rng, 9, 10.0);
    auto dst = colm::apply(test::random_transform(rng), src);
    for (auto& p : dst) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.2;
    std::vector<double> w, w2;
    for (int i = 0; i < 9; ++i) {
        w.push_back(rng.uniform(0.1, 1.0));
        w2.push_back(w.back() * 37.5);
    }
    const auto a = weighted_svd(src, dst, w), b = weighted_svd(src, dst, w2);
    EXPECT_LT(test::max_abs_diff(a.rotation(), b.rotation()), 1e-12);
    EXPECT_LT((a.translation() - b.translation()).norm(), 1e-12);
}

struct Scenario {
    ObjectSet source, target;
    RigidTransform truth;
    CorrespondenceSet corr;
};

Scenario outlier_scenario(std::uint64_t seed, std::size_t inliers, std::size_t outliers, double jitter) {
    Rng rng(seed);
    const std::size_t n = inliers + outliers;
    const auto src = test::random_points(rng, n, 60.0);
    const RigidTransform truth(rz(rng.uniform(0, 360)), Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), 0));
    auto dst = colm::apply(truth, src);
    for (auto& p : dst) p += Vec3(rng.normal(), rng.normal(), rng.normal()) * jitter;
    Scenario s{ObjectSet(src, std::vector<ClassId>(n, 0)), ObjectSet(dst, std::vector<ClassId>(n, 0)), truth, {}};
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = i < inliers ? i : rng.uniform_int(n);
        s.corr.push_back({i, j, 1.0});
    }
    return s;
}

TEST(Ransac, RecoversWithOneThirdOutliers) {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const auto s = outlier_scenario(seed, 40, 20, 0.0);
        RansacConfig cfg;
        cfg.tolerance = 0.5;
        cfg.seed = seed;
        const auto r = ransac_register(s.corr, s.source, s.target, cfg);
        EXPECT_LT(pose_error(r.transform, s.truth).rte_m, 0.05) << seed;
    }
}

TEST(Ransac, AllExactPairsAreInliers) {
    const auto s = outlier_scenario(3, 30, 0, 0.0);
    const auto r = ransac_register(s.corr, s.source, s.target, RansacConfig{});
    EXPECT_EQ(r.inliers.size(), 30u);
    EXPECT_LT(pose_error(r.transform, s.truth).rte_m, 1e-9);
    EXPECT_EQ(r.tag(), "ransac");
}

TEST(Ransac, NoOutliersEqualsWeightedSvd) {
    auto s = outlier_scenario(4, 25, 0, 0.02);
    Rng rng(4);
    for (auto& c : s.corr) c.weight = rng.uniform(0.2, 1.0);
    const auto r = ransac_register(s.corr, s.source, s.target, RansacConfig{});
    const auto w = weighted_svd(s.corr, s.source, s.target);
    EXPECT_LT(test::max_abs_diff(r.transform.rotation(), w.rotation()), 1e-9);
    EXPECT_LT((r.transform.translation() - w.translation()).norm(), 1e-9);
}

TEST(Ransac, CollinearCorrespondencesFail) {
    const ObjectSet line({Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0)}, {0, 0, 0});
    const CorrespondenceSet c = {{0, 0, 1}, {1, 1, 1}, {2, 2, 1}};
    EXPECT_THROW(ransac_register(c, line, line, RansacConfig{}), NoSolutionError);
}

TEST(Ransac, DeterministicUnderSeed) {
    const auto s = outlier_scenario(5, 20, 20, 0.05);
    RansacConfig cfg;
    cfg.seed = 17;
    const auto a = ransac_register(s.corr, s.source, s.target, cfg);
    const auto b = ransac_register(s.corr, s.source, s.target, cfg);
    EXPECT_EQ(a.transform.row_major(), b.transform.row_major());
}

TEST(SvdRegister, UsesAllPairs) {
    const auto s = outlier_scenario(6, 15, 0, 0.0);
    const auto r = svd_register(s.corr, s.source, s.target);
    EXPECT_LT(pose_error(r.transform, s.truth).rte_m, 1e-9);
    EXPECT_EQ(r.tag(), "svd");
}

synth::ScenePair icp_pair(double jitter, std::uint64_t seed) {
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = 120;
    sc.seed = seed;
    synth::PerturbConfig pc;
    pc.jitter = jitter;
    return synth::make_pair(sc, pc, 0);
}

TEST(Icp, GroundTruthIsFixedPoint) {
    const auto p = icp_pair(0.0, 1);
    const auto r = icp_refine(p.source, p.target, p.t_gt, IcpConfig{});
    const auto e = pose_error(r.transform, p.t_gt);
    EXPECT_LT(e.rte_m, 1e-9);
    EXPECT_LT(e.rre_rad, 1e-9);
    EXPECT_FALSE(r.no_overlap);
}

TEST(Icp, ResidualDecreasesFromOffsetInit) {
    const auto p = icp_pair(0.05, 2);
    const auto init = compose(RigidTransform::translation_only(Vec3(0.2, 0, 0)), p.t_gt);
    const auto r = icp_refine(p.source, p.target, init, IcpConfig{});
    ASSERT_GE(r.residuals.size(), 2u);
    EXPECT_LT(r.residuals[1], r.residuals[0]);
    for (std::size_t k = 1; k < r.residuals.size(); ++k) EXPECT_LE(r.residuals[k], r.residuals[k - 1]);
    EXPECT_LT(pose_error(r.transform, p.t_gt).rte_m, pose_error(init, p.t_gt).rte_m);
}

TEST(Icp, DisjointSetsReturnInit) {
    const auto p = icp_pair(0.0, 3);
    const auto far = colm::apply(RigidTransform::translation_only(Vec3(1000, 0, 0)), p.target);
    const auto r = icp_refine(p.source, far, p.t_gt, IcpConfig{});
    EXPECT_TRUE(r.no_overlap);
    EXPECT_EQ(r.transform.row_major(), p.t_gt.row_major());
}

TEST(Icp, DenseVariantRefines) {
    const auto p = icp_pair(0.0, 4);
    const auto init = compose(RigidTransform(rz(1.0), Vec3(0.1, -0.1, 0)), p.t_gt);
    const auto r = icp_refine_dense(PointCloud{p.source.centroids()}, PointCloud{p.target.centroids()}, init,
                                    IcpConfig{});
    EXPECT_LT(pose_error(r.transform, p.t_gt).rte_m, 1e-6);
}

TEST(Metrics, Rte) {
    EXPECT_EQ(rte(Vec3(1, 2, 3), Vec3(1, 2, 3)), 0.0);
    EXPECT_EQ(rte(Vec3(1, 0, 0), Vec3::Zero()), 1.0);
    EXPECT_EQ(rte(Vec3(1, 2, 2), Vec3::Zero()), 3.0);
}

TEST(Metrics, Rre) {
    EXPECT_EQ(rre(rz(30), rz(30)), 0.0);
    EXPECT_NEAR(rre(rz(180), Mat3::Identity()), M_PI, 1e-7);
    EXPECT_NEAR(rre(rz(1), Mat3::Identity()), 0.017453292519943295, 1e-9);
}

TEST(MetricsProperties, RreSymmetricAndTriangle) {
    Rng rng(7);
    for (int k = 0; k < 100; ++k) {
        const Mat3 a = test::random_rotation(rng), b = test::random_rotation(rng), c = test::random_rotation(rng);
        EXPECT_NEAR(rre(a, b), rre(b, a), 1e-12);
        EXPECT_LE(rre(a, c), rre(a, b) + rre(b, c) + 1e-9);
        const double v = rre(a, b);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, M_PI);
    }
}

TEST(Recall, AllPerfect) {
    const std::vector<PoseError> e(5, PoseError{0, 0});
    EXPECT_EQ(registration_recall(e, 0.3, 1.0).recall, 1.0);
}

TEST(Recall, StrictBoundary) {
    const std::vector<PoseError> e = {{0.3, deg2rad(0.5)}};
    EXPECT_EQ(registration_recall(e, 0.3, 1.0).recall, 0.0);
}

TEST(Recall, MixedFixture) {
    const std::vector<PoseError> e = {
        {0.1, deg2rad(0.2)}, {0.2, deg2rad(0.6)}, {0.5, deg2rad(0.1)}, {0.1, deg2rad(3.0)}};
    const auto s = registration_recall(e, 0.3, 1.0);
    EXPECT_EQ(s.successes, 2u);
    EXPECT_DOUBLE_EQ(s.recall, 0.5);
    EXPECT_NEAR(s.mean_rte_m, 0.15, 1e-12);
    EXPECT_NEAR(s.mean_rre_deg, 0.4, 1e-9);
}

TEST(Recall, EmptyRejected) { EXPECT_THROW(registration_recall({}, 0.3, 1.0), InputError); }

}  // namespace
}  // namespace colm
