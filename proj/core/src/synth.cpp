#include "colm/synth.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "colm/error.hpp"
#include "colm/rng.hpp"

namespace colm::synth {
namespace {

ClassId sample_class(Rng& rng, const std::array<double, kNumStaticClasses>& weights) {
    const double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
        acc += weights[c];
        if (u < acc) return static_cast<ClassId>(c);
    }
    return static_cast<ClassId>(weights.size() - 1);
}

// splitmix64 finaliser, to derive independent seeds from (seed, index).
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

void SceneConfig::validate() const {
    if (min_objects < 1 || max_objects < min_objects) {
        throw InputError("synth.config", "object count range must satisfy 1 <= min <= max");
    }
    if (!(extent_xy > 0.0) || !(extent_z >= 0.0)) throw InputError("synth.config", "extent must be positive");
    if (min_spacing < 0.0) throw InputError("synth.config", "spacing must be >= 0");
    double sum = 0.0;
    for (double w : class_weights) {
        if (w < 0.0) throw InputError("synth.config", "class weights must be >= 0");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw InputError("synth.config", "class distribution must sum to 1");
}

void PerturbConfig::validate() const {
    auto rate = [](double r) { return r >= 0.0 && r < 1.0; };
    if (!rate(drop_rate) || !(flip_rate >= 0.0 && flip_rate <= 1.0) || insert_rate < 0.0 || jitter < 0.0 ||
        min_translation < 0.0 || max_translation < min_translation || max_yaw < 0.0) {
        throw InputError("synth.config", "perturbation rates or ranges out of bounds");
    }
    if (num_classes < 2 && flip_rate > 0.0) throw InputError("synth.config", "label flips need >= 2 classes");
}

ObjectSet generate_scene(const SceneConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    const auto count = cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
    const double spacing2 = cfg.min_spacing * cfg.min_spacing;
    const std::size_t max_attempts = 1000 * count + 1000;

    std::vector<Vec3> pts;
    std::vector<ClassId> cls;
    pts.reserve(count);
    std::size_t attempts = 0;
    while (pts.size() < count) {
        if (++attempts > max_attempts) {
            std::ostringstream msg;
            msg << "could not place " << count << " objects " << cfg.min_spacing << " m apart (placed "
                << pts.size() << ")";
            throw InputError("synth.rejection_exhausted", msg.str());
        }
        const Vec3 p(rng.uniform(-cfg.extent_xy, cfg.extent_xy), rng.uniform(-cfg.extent_xy, cfg.extent_xy),
                     rng.uniform(-cfg.extent_z, cfg.extent_z));
        bool ok = true;
        for (const auto& q : pts) {
            if ((p - q).squaredNorm() < spacing2) {
                ok = false;
                break;
            }
        }
        if (!ok) continue;
        pts.push_back(p);
        cls.push_back(sample_class(rng, cfg.class_weights));
    }
    return {std::move(pts), std::move(cls)};
}

PerturbedScene perturb_scene(const ObjectSet& scene, const PerturbConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const double yaw = rng.uniform() * cfg.max_yaw;
    const double mag = rng.uniform(cfg.min_translation, cfg.max_translation);
    const double dir = rng.uniform() * 2.0 * M_PI;
    PerturbedScene out;
    out.transform = RigidTransform::from_yaw(yaw, Vec3(mag * std::cos(dir), mag * std::sin(dir), 0.0));

    std::vector<Vec3> pts;
    std::vector<ClassId> cls;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (cfg.drop_rate > 0.0 && rng.bernoulli(cfg.drop_rate)) continue;
        Vec3 p = out.transform(scene.centroid(i));
        if (cfg.jitter > 0.0) {
            for (int k = 0; k < 3; ++k) p[k] += rng.normal(0.0, cfg.jitter);
        }
        ClassId c = scene.cls(i);
        if (cfg.flip_rate > 0.0 && rng.bernoulli(cfg.flip_rate)) {
            const auto shift = 1 + rng.uniform_int(cfg.num_classes - 1);
            c = static_cast<ClassId>((c + shift) % cfg.num_classes);
        }
        pts.push_back(p);
        cls.push_back(c);
        out.survivors.push_back(static_cast<std::ptrdiff_t>(i));
    }
    if (pts.empty()) throw InputError("synth.empty_survivors", "perturbation dropped every object");

    const double expected = cfg.insert_rate * static_cast<double>(scene.size());
    auto inserts = static_cast<std::size_t>(std::floor(expected));
    if (rng.bernoulli(expected - std::floor(expected))) ++inserts;
    for (std::size_t k = 0; k < inserts; ++k) {
        const Vec3 p(rng.uniform(-cfg.extent_xy, cfg.extent_xy), rng.uniform(-cfg.extent_xy, cfg.extent_xy),
                     rng.uniform(-cfg.extent_z, cfg.extent_z));
        pts.push_back(out.transform(p));
        cls.push_back(static_cast<ClassId>(rng.uniform_int(cfg.num_classes)));
        out.survivors.push_back(-1);
    }
    out.objects = ObjectSet(std::move(pts), std::move(cls));
    return out;
}

CorrespondenceSet gt_correspondences(const ObjectSet& source, const ObjectSet& target, const RigidTransform& t_gt,
                                     double tol) {
    if (!(tol > 0.0)) throw InputError("synth.tolerance", "oracle tolerance must be > 0");
    const auto aligned = colm::apply(t_gt, source.centroids());
    constexpr auto none = std::numeric_limits<std::size_t>::max();

    auto nearest = [](const Vec3& q, ClassId c, const std::vector<Vec3>& pts, const std::vector<ClassId>& cls) {
        std::size_t best = none;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < pts.size(); ++j) {
            if (cls[j] != c) continue;
            const double d = (pts[j] - q).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = j;
            }
        }
        return std::pair{best, best_d};
    };

    CorrespondenceSet out;
    const double tol2 = tol * tol;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const auto [j, d] = nearest(aligned[i], source.cls(i), target.centroids(), target.classes());
        if (j == none || !(d < tol2)) continue;
        const auto [back, unused] = nearest(target.centroid(j), target.cls(j), aligned, source.classes());
        if (back == i) out.push_back({i, j, 1.0});
    }
    return out;
}

ScenePair make_pair(const SceneConfig& scene, const PerturbConfig& perturb, std::uint64_t index) {
    SceneConfig sc = scene;
    sc.seed = mix(scene.seed ^ mix(index));
    ScenePair p;
    p.source = generate_scene(sc);
    auto pert = perturb_scene(p.source, perturb, mix(sc.seed + 1));
    p.target = std::move(pert.objects);
    p.t_gt = pert.transform;
    p.survivors = std::move(pert.survivors);
    return p;
}

}  // namespace colm::synth
