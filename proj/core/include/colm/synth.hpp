#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "colm/classes.hpp"
#include "colm/core.hpp"

namespace colm::synth {

struct SceneConfig {
    std::size_t min_objects = 60;
    std::size_t max_objects = 240;
    double extent_xy = 60.0;  ///< objects in [-extent_xy, extent_xy]^2
    double extent_z = 3.0;
    /// Probability of each static class, indexed by class id.
    std::array<double, kNumStaticClasses> class_weights = {0.10, 0.20, 0.10, 0.20, 0.15, 0.15, 0.10};
    double min_spacing = 2.0;  ///< metres between any two objects
    std::uint64_t seed = 0;

    void validate() const;
};

struct PerturbConfig {
    double max_yaw = 2.0 * M_PI;  ///< yaw uniform in [0, max_yaw)
    double min_translation = 0.0;
    double max_translation = 3.0;  ///< horizontal translation magnitude, metres
    double jitter = 0.0;           ///< per-coordinate Gaussian sigma, metres
    double drop_rate = 0.0;
    double insert_rate = 0.0;  ///< expected distractors per source object
    double flip_rate = 0.0;
    std::size_t num_classes = kNumStaticClasses;
    double extent_xy = 60.0;  ///< distractor placement, source frame
    double extent_z = 3.0;

    void validate() const;
};

/// Per-object scene sampled with rejection to keep `min_spacing`. Throws
/// InputError("synth.rejection_exhausted") when the spacing is infeasible.
ObjectSet generate_scene(const SceneConfig& cfg);

struct PerturbedScene {
    ObjectSet objects;
    RigidTransform transform;  ///< maps source coordinates into this set's frame
    /// For each output object, the index of its source object, or -1 for an
    /// inserted distractor.
    std::vector<std::ptrdiff_t> survivors;
};

/// Throws InputError("synth.empty_survivors") if every object was dropped.
PerturbedScene perturb_scene(const ObjectSet& scene, const PerturbConfig& cfg, std::uint64_t seed);

/// Mutual nearest same-class neighbours within `tol` after mapping the
/// source through `t_gt`. Weight 1 each; ordered by source index.
CorrespondenceSet gt_correspondences(const ObjectSet& source, const ObjectSet& target, const RigidTransform& t_gt,
                                     double tol);

/// A (source, target, ground truth) training or evaluation pair.
struct ScenePair {
    ObjectSet source;
    ObjectSet target;
    RigidTransform t_gt;  ///< target = t_gt(source) up to noise
    std::vector<std::ptrdiff_t> survivors;
};

/// Deterministic pair: scene from `scene.seed ^ index`, perturbed with a
/// seed derived from the same pair.
ScenePair make_pair(const SceneConfig& scene, const PerturbConfig& perturb, std::uint64_t index);

}  // namespace colm::synth
