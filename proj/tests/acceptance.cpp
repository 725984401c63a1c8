// Acceptance checks; one PASS/FAIL line per criterion. `acceptance N` runs
// criterion N, no argument runs all of them.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <string>
#include <vector>

#include "colm/codec.hpp"
#include "colm/error.hpp"
#include "colm/extract.hpp"
#include "colm/loss.hpp"
#include "colm/net.hpp"
#include "colm/pose.hpp"
#include "colm/synth.hpp"
#include "colm/train.hpp"
#include "dbscan_oracle.hpp"
#include "fd_check.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"

using namespace colm;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string format(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

Outcome storage() {
    const auto t0 = Clock::now();
    const bool sizes = codec::payload_size(105) == 1365 && codec::payload_size(238) == 3094 &&
                       codec::record_size(105) == 1372;
    // Encoded records agree with the arithmetic.
    Rng rng(1);
    const auto bytes105 = codec::encode_scan(test::random_objects(rng, 105, 60.0, 7));
    const auto bytes238 = codec::encode_scan(test::random_objects(rng, 238, 60.0, 7));
    const bool encoded = bytes105.size() == codec::record_size(105) && bytes238.size() == codec::record_size(238);
    const double s = seconds_since(t0);
    return {sizes && encoded && s < 1.0,
            format("payload 105 -> %zu B (%.2f kB), 238 -> %zu B, record 105 -> %zu B, %.3f s",
                   codec::payload_size(105), codec::payload_size(105) / 1024.0, codec::payload_size(238),
                   bytes105.size(), s)};
}

Outcome kabsch() {
    const auto t0 = Clock::now();
    Rng rng(2);
    double worst_t = 0.0, worst_r = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto n = 4 + rng.uniform_int(60);
        const auto src = test::random_points(rng, n, 50.0);
        const auto t = test::random_transform(rng, 100.0);
        const auto dst = colm::apply(t, src);
        std::vector<double> w(n);
        for (auto& x : w) x = rng.uniform(0.1, 1.0);
        const auto e = pose_error(weighted_svd(src, dst, w), t);
        worst_t = std::max(worst_t, e.rte_m);
        worst_r = std::max(worst_r, e.rre_rad);
    }
    const double s = seconds_since(t0);
    return {worst_t < 1e-9 && worst_r < 1e-7 && s < 5.0,
            format("1000 instances, max RTE %.3g m, max RRE %.3g rad, %.2f s", worst_t, worst_r, s)};
}

Outcome ransac() {
    const auto t0 = Clock::now();
    std::vector<PoseError> errors;
    for (std::uint64_t trial = 0; trial < 100; ++trial) {
        Rng rng(1000 + trial);
        std::vector<Vec3> src, dst;
        const auto t = RigidTransform::from_yaw(rng.uniform(0.0, 2 * M_PI), Vec3(rng.uniform(-3, 3), rng.uniform(-3, 3), 0));
        for (int i = 0; i < 60; ++i) {
            const Vec3 p(rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(-3, 3));
            src.push_back(p);
            dst.push_back(t(p) + Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.05);
        }
        // 20 of 60 (33%) targets replaced by uniform outliers.
        for (int i = 0; i < 20; ++i) dst[3 * i] = Vec3(rng.uniform(-60, 60), rng.uniform(-60, 60), rng.uniform(-3, 3));
        CorrespondenceSet corr;
        for (std::size_t i = 0; i < 60; ++i) corr.push_back({i, i, 1.0});
        const std::vector<ClassId> cls(60, 0);
        RansacConfig cfg;
        cfg.seed = trial;
        try {
            errors.push_back(pose_error(ransac_register(corr, ObjectSet(src, cls), ObjectSet(dst, cls), cfg).transform, t));
        } catch (const NoSolutionError&) {
            errors.push_back({1e9, 1e9});
        }
    }
    const auto r = registration_recall(errors, 0.5, 5.0);
    const double s = seconds_since(t0);
    return {r.successes == 100 && s < 30.0,
            format("recall %.2f at 0.5 m / 5 deg (%zu / 100), mean RTE %.3f m, %.2f s", r.recall, r.successes,
                   r.mean_rte_m, s)};
}

Outcome gradients() {
    const auto t0 = Clock::now();
    const auto cfg = net::NetConfig::toy(8, 1);
    const auto params = net::init_params(cfg, 3);
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = 5;
    sc.extent_xy = 3.0;
    sc.min_spacing = 0.5;
    synth::PerturbConfig pc;
    pc.jitter = 0.1;
    const auto batch = train::synthetic_pairs(sc, pc, 1, 2);
    const auto r = test::fd_check(batch, params, cfg, loss::LossConfig{}, 1e-3, 1e-5);
    const double s = seconds_since(t0);
    return {r.failed == 0 && r.checked == params.count() && s < 120.0,
            format("%zu cells, max relative error %.3g at %s, %.1f s", r.checked, r.worst, r.worst_cell.c_str(), s)};
}

Outcome invariance() {
    const auto t0 = Clock::now();
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = 50;
    sc.seed = 5;
    const auto scene = synth::generate_scene(sc);
    const auto cfg = net::NetConfig::paper();
    const auto base = net::geometric_structure_embedding(scene.centroids(), cfg).values;
    Rng rng(5);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        const auto moved = colm::apply(test::random_transform(rng, 100.0), scene.centroids());
        worst = std::max(worst, test::max_abs_diff(net::geometric_structure_embedding(moved, cfg).values, base));
    }
    const double s = seconds_since(t0);
    return {worst <= 1e-9 && s < 10.0, format("100 transforms, max deviation %.3g, %.2f s", worst, s)};
}

Outcome log_two() {
    const loss::LossConfig cfg;
    const double ln2 = std::log(2.0);
    // Object 0 of each set is the anchor: its positive sits at delta_p, its
    // single negative at delta_n.
    ad::Matrix h(2, 2);
    h << cfg.delta_p, cfg.delta_n, cfg.delta_n, 0.0;
    auto value = [&](bool source_side, bool target_side) {
        loss::MatchSupervision sup;
        sup.n_source = sup.n_target = 2;
        if (source_side) sup.source_anchors.push_back({0, {{0, 1.0}}});
        if (target_side) sup.target_anchors.push_back({0, {{0, 1.0}}});
        return loss::circle_loss_from_distances(h, sup, cfg).value;
    };
    // Each side carries half the weight of the two-side average.
    const double s = 2.0 * value(true, false), t = 2.0 * value(false, true), both = value(true, true);
    const bool pass = std::abs(s - ln2) <= 1e-12 && std::abs(t - ln2) <= 1e-12 && std::abs(both - ln2) <= 1e-12;
    return {pass, format("source side %.17g, target side %.17g, both %.17g, log 2 = %.17g", s, t, both, ln2)};
}

Outcome semantic_gate() {
    Rng rng(7);
    std::size_t emitted = 0, crossing = 0;
    for (int k = 0; k < 1000; ++k) {
        const auto n = 1 + rng.uniform_int(40), m = 1 + rng.uniform_int(40);
        std::vector<ClassId> a(n), b(m);
        for (auto& c : a) c = static_cast<ClassId>(rng.uniform_int(4));
        for (auto& c : b) c = static_cast<ClassId>(rng.uniform_int(4));
        ad::Matrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
        for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.uniform();
        const auto masked = net::mask_semantic(s, a, b);
        CorrespondenceSet corr;
        try {
            corr = net::topk_correspondences(masked, 1 + rng.uniform_int(n * m));
        } catch (const NoSolutionError&) {
            continue;
        }
        emitted += corr.size();
        for (const auto& c : corr) crossing += a[c.source] != b[c.target];
    }
    return {crossing == 0, format("%zu correspondences emitted, %zu join differing classes", emitted, crossing)};
}

Outcome dbscan() {
    const auto t0 = Clock::now();
    std::size_t identical = 0, points = 0, clusters = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        Rng rng(500 + seed);
        const auto n = 50 + rng.uniform_int(451);
        const auto centres = test::random_points(rng, 1 + rng.uniform_int(10), 10.0);
        std::vector<Vec3> p;
        for (std::size_t i = 0; i < n; ++i) {
            if (rng.bernoulli(0.1)) {
                p.push_back(Vec3(rng.uniform(-12, 12), rng.uniform(-12, 12), rng.uniform(-12, 12)));
                continue;
            }
            const auto& c = centres[rng.uniform_int(centres.size())];
            p.push_back(c + Vec3(rng.normal(), rng.normal(), rng.normal()) * rng.uniform(0.2, 1.0));
        }
        const double eps = rng.uniform(0.3, 1.0);
        const std::size_t min_pts = 1 + rng.uniform_int(8);
        const auto got = cluster_dbscan(p, eps, min_pts);
        identical += got == test::dbscan_oracle(p, eps, min_pts);
        points += n;
        clusters += static_cast<std::size_t>(*std::max_element(got.begin(), got.end()) + 1);
    }
    return {identical == 100, format("%zu / 100 partitions identical (%zu points, %zu clusters), %.2f s", identical,
                                     points, clusters, seconds_since(t0))};
}

struct SeedRun {
    double initial = 0.0, final = 0.0, recall = 0.0, untrained = 0.0, nearest = 0.0, precision = 0.0;
};

double ransac_recall(std::span<const loss::TrainingPair> pairs,
                     const std::function<CorrespondenceSet(const loss::TrainingPair&)>& match) {
    std::vector<PoseError> errors;
    for (const auto& p : pairs) {
        RansacConfig rc;
        rc.seed = 7;
        try {
            errors.push_back(pose_error(ransac_register(match(p), p.source, p.target, rc).transform, p.t_gt));
        } catch (const NoSolutionError&) {
            errors.push_back({1e9, 1e9});
        }
    }
    return registration_recall(errors, 0.5, 5.0).recall;
}

Outcome toy_training() {
    const auto t0 = Clock::now();
    std::vector<SeedRun> runs;
    bool pass = true;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto cfg = net::NetConfig::toy(16, 2);
        cfg.coord_scale = 0.0;
        synth::SceneConfig sc;
        sc.min_objects = sc.max_objects = 30;
        sc.extent_xy = 30.0;
        sc.seed = 100 * seed;
        synth::PerturbConfig pc;
        pc.drop_rate = 0.2;
        pc.jitter = 0.05;
        const auto train_set = train::synthetic_pairs(sc, pc, 200, 0);
        const auto held_out = train::synthetic_pairs(sc, pc, 100, 1000000);
        train::TrainConfig tc;
        tc.epochs = 30;
        tc.batch_size = 4;
        tc.lr = 1e-3;
        tc.seed = seed;
        const auto init = net::init_params(cfg, seed);
        const auto result = train::train_toy(train_set, held_out, init, cfg, tc, loss::LossConfig{});
        SeedRun r;
        r.initial = result.curve.front().train_loss;
        r.final = result.curve.back().train_loss;
        r.precision = result.curve.back().val_precision;
        auto with = [&](const net::MatchParams& params) {
            return [&](const loss::TrainingPair& p) { return net::forward(p.source, p.target, params, cfg, 60).correspondences; };
        };
        r.recall = ransac_recall(held_out, with(result.params));
        r.untrained = ransac_recall(held_out, with(init));
        r.nearest = ransac_recall(held_out, [](const loss::TrainingPair& p) { return net::nearest_by_class(p.source, p.target); });
        std::printf("  seed %llu: loss %.2f -> %.2f (ratio %.3f), val precision %.3f, recall %.2f; "
                    "untrained weights %.2f, nearest-by-class %.2f\n",
                    static_cast<unsigned long long>(seed), r.initial, r.final, r.final / r.initial, r.precision,
                    r.recall, r.untrained, r.nearest);
        std::fflush(stdout);
        pass = pass && r.final <= 0.5 * r.initial && r.recall >= 0.9;
        runs.push_back(r);
    }
    const double s = seconds_since(t0);
    pass = pass && s <= 600.0;
    double worst_ratio = 0.0, worst_recall = 1.0;
    for (const auto& r : runs) {
        worst_ratio = std::max(worst_ratio, r.final / r.initial);
        worst_recall = std::min(worst_recall, r.recall);
    }
    return {pass, format("3 seeds, worst loss ratio %.3f, worst recall %.2f, %.0f s", worst_ratio, worst_recall, s)};
}

Outcome throughput() {
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = 105;
    synth::PerturbConfig pc;
    pc.jitter = 0.05;
    const auto pair = synth::make_pair(sc, pc, 1);
    const auto cfg = net::NetConfig::paper();
    const auto params = net::init_params(cfg, 1);
    auto once = [&] {
        const auto t0 = Clock::now();
        try {
            const auto m = net::forward(pair.source, pair.target, params, cfg, 60);
            const auto r = ransac_register(m.correspondences, pair.source, pair.target, RansacConfig{});
            icp_refine(pair.source, pair.target, r.transform, IcpConfig{});
        } catch (const NoSolutionError&) {
            // Timing is what counts here; untrained weights may not find a model.
        }
        return 1000.0 * seconds_since(t0);
    };
    once();
    std::vector<double> ms;
    for (int k = 0; k < 9; ++k) ms.push_back(once());
    std::sort(ms.begin(), ms.end());
    const double median = ms[ms.size() / 2];
    return {median <= 200.0, format("%zu vs %zu objects, median %.1f ms over 9 runs (min %.1f, max %.1f)",
                                    pair.source.size(), pair.target.size(), median, ms.front(), ms.back())};
}

Outcome goldens() {
    const auto doc = test::load_fixtures();
    std::string detail;
    bool pass = true;
    for (const std::string name : {"header_only", "mixed", "typical105"}) {
        const auto scan = test::fixture_scan(doc, name);
        const auto golden = codec::read_file(test::golden_path("golden_" + name + ".cor"));
        const bool same = codec::encode_scan(scan) == golden;
        const auto back = codec::decode_scan(golden);
        const auto q = codec::quantize(scan);
        bool exact = back.size() == scan.size() && back.classes() == scan.classes();
        for (std::size_t i = 0; exact && i < back.size(); ++i) exact = back.centroid(i) == q.centroid(i);
        pass = pass && same && exact;
        detail += format("%s%s %zu B %s", detail.empty() ? "" : ", ", name.c_str(), golden.size(),
                         same && exact ? "ok" : "MISMATCH");
    }
    return {pass, detail};
}

const std::vector<std::pair<const char*, Outcome (*)()>> kCriteria = {
    {"storage arithmetic", storage},     {"weighted Kabsch exactness", kabsch},
    {"RANSAC robustness", ransac},        {"gradient check", gradients},
    {"rigid invariance", invariance},     {"circle loss closed form", log_two},
    {"semantic gate", semantic_gate},     {"DBSCAN oracle", dbscan},
    {"toy training", toy_training},       {"throughput", throughput},
    {"codec goldens", goldens},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::size_t> which;
    if (argc > 1) {
        const auto n = std::strtoul(argv[1], nullptr, 10);
        if (n < 1 || n > kCriteria.size()) {
            std::fprintf(stderr, "usage: acceptance [1-%zu]\n", kCriteria.size());
            return 2;
        }
        which.push_back(n);
    } else {
        for (std::size_t n = 1; n <= kCriteria.size(); ++n) which.push_back(n);
    }
    int failed = 0;
    for (auto n : which) {
        const auto& [name, fn] = kCriteria[n - 1];
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", n, name, o.detail.c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
