#include "colm/extract.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

#include "colm/error.hpp"
#include "colm/rng.hpp"
#include "colm/voxel_grid.hpp"

namespace colm {

void ExtractConfig::validate() const {
    if (!(eps > 0.0)) throw InputError("extract.config", "eps must be > 0");
    if (min_pts < 1) throw InputError("extract.config", "min_pts must be >= 1");
    if (static_classes.empty()) throw InputError("extract.config", "static class set is empty");
    if (*static_classes.rbegin() > 255) {
        throw InputError("extract.config", "static class ids must fit in one byte");
    }
}

std::vector<int> cluster_dbscan(std::span<const Vec3> points, double eps, std::size_t min_pts) {
    const std::size_t n = points.size();
    std::vector<int> labels(n, kNoise);
    if (n == 0) return labels;

    VoxelGrid grid(points, eps);
    std::vector<std::vector<std::size_t>> neighbours(n);
    std::vector<char> core(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        neighbours[i] = grid.radius_search(points[i], eps);
        core[i] = neighbours[i].size() >= min_pts;
    }

    // Connected components of the eps-graph restricted to core points.
    std::vector<int> raw(n, kNoise);
    int next = 0;
    std::vector<std::size_t> stack;
    for (std::size_t seed = 0; seed < n; ++seed) {
        if (!core[seed] || raw[seed] != kNoise) continue;
        raw[seed] = next;
        stack.assign(1, seed);
        while (!stack.empty()) {
            const auto p = stack.back();
            stack.pop_back();
            for (auto q : neighbours[p]) {
                if (core[q] && raw[q] == kNoise) {
                    raw[q] = next;
                    stack.push_back(q);
                }
            }
        }
        ++next;
    }

    // Border points follow their nearest core neighbour.
    for (std::size_t i = 0; i < n; ++i) {
        if (core[i]) continue;
        double best = std::numeric_limits<double>::infinity();
        for (auto q : neighbours[i]) {
            if (!core[q]) continue;
            const double d = (points[q] - points[i]).squaredNorm();
            if (d < best) {
                best = d;
                raw[i] = raw[q];
            }
        }
    }

    // Renumber so ids follow each cluster's lowest member index.
    std::vector<int> remap(static_cast<std::size_t>(next), kNoise);
    int ordered = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (raw[i] == kNoise) continue;
        auto& r = remap[static_cast<std::size_t>(raw[i])];
        if (r == kNoise) r = ordered++;
        labels[i] = r;
    }
    return labels;
}

LabeledPointCloud subsample(const LabeledPointCloud& scan, std::size_t n, std::uint64_t seed) {
    if (scan.size() <= n) return scan;
    std::vector<std::size_t> idx(scan.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.uniform_int(idx.size() - i));
        std::swap(idx[i], idx[j]);
    }
    idx.resize(n);
    std::sort(idx.begin(), idx.end());

    PointCloud cloud;
    std::vector<std::uint32_t> labels;
    cloud.points.reserve(n);
    labels.reserve(n);
    for (auto i : idx) {
        cloud.points.push_back(scan.points()[i]);
        labels.push_back(scan.labels()[i]);
    }
    return {std::move(cloud), std::move(labels)};
}

ObjectSet extract_objects(const LabeledPointCloud& input, const ExtractConfig& cfg) {
    cfg.validate();
    const LabeledPointCloud scan =
        cfg.max_points > 0 ? subsample(input, cfg.max_points, cfg.seed) : input;

    // Per static class: original indices of its points, ascending.
    std::map<std::uint32_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < scan.size(); ++i) {
        const auto l = scan.labels()[i];
        if (cfg.static_classes.contains(l)) by_class[l].push_back(i);
    }

    std::vector<Vec3> centroids;
    std::vector<ClassId> classes;
    for (const auto& [cls, members] : by_class) {
        std::vector<Vec3> pts;
        pts.reserve(members.size());
        for (auto i : members) pts.push_back(scan.points()[i]);
        const auto ids = cluster_dbscan(pts, cfg.eps, cfg.min_pts);
        const int count = ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end()) + 1;

        std::vector<Vec3> sum(static_cast<std::size_t>(count), Vec3::Zero());
        std::vector<std::size_t> size(static_cast<std::size_t>(count), 0);
        for (std::size_t k = 0; k < pts.size(); ++k) {
            if (ids[k] == kNoise) continue;
            sum[static_cast<std::size_t>(ids[k])] += pts[k];
            ++size[static_cast<std::size_t>(ids[k])];
        }
        // Cluster ids already follow lowest member index within the class.
        for (int c = 0; c < count; ++c) {
            const auto k = static_cast<std::size_t>(c);
            centroids.push_back(sum[k] / static_cast<double>(size[k]));
            classes.push_back(static_cast<ClassId>(cls));
        }
    }
    return {std::move(centroids), std::move(classes)};
}

}  // namespace colm
