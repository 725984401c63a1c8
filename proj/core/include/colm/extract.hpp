#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <vector>

#include "colm/core.hpp"

namespace colm {

/// Parameters for turning a labelled scan into an object set.
struct ExtractConfig {
    double eps = 0.5;              ///< DBSCAN neighbourhood radius, metres
    std::size_t min_pts = 5;       ///< neighbours (self included) for a core point
    std::set<std::uint32_t> static_classes = {0, 1, 2, 3, 4, 5, 6};
    std::size_t max_points = 24000;  ///< subsample cap before clustering; 0 disables
    std::uint64_t seed = 0;          ///< subsampling seed

    /// Throws InputError on eps <= 0, min_pts == 0, empty or >255 static classes.
    void validate() const;
};

inline constexpr int kNoise = -1;

/// Density-based clustering. Returns one id per point; -1 marks noise.
///
/// A point is core when at least `min_pts` points (itself included) lie
/// within `eps`. Core points within `eps` of each other share a cluster
/// (transitively). A non-core point within `eps` of some core point joins
/// the cluster of its nearest such core point (ties: lower index); this
/// keeps the partition independent of input order. Cluster ids are
/// contiguous from 0 and ordered by each cluster's lowest member index.
std::vector<int> cluster_dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts);

/// Uniform sample of `n` points without replacement, kept in input order.
/// Identity when the cloud already has at most `n` points.
LabeledPointCloud subsample(const LabeledPointCloud& scan, std::size_t n, std::uint64_t seed);

/// Clusters each static class independently and keeps one (centroid, class)
/// per cluster. Output is sorted by (class id, lowest member index).
ObjectSet extract_objects(const LabeledPointCloud& scan, const ExtractConfig& cfg);

}  // namespace colm
