#include "colm/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace colm {

VoxelGrid::VoxelGrid(std::span<const Vec3> points, double cell_size)
    : points_(points), cell_(cell_size) {
    cells_.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) cells_[key_of(points[i])].push_back(i);
}

VoxelGrid::Key VoxelGrid::key_of(const Vec3& p) const {
    return {static_cast<std::int64_t>(std::floor(p.x() / cell_)),
            static_cast<std::int64_t>(std::floor(p.y() / cell_)),
            static_cast<std::int64_t>(std::floor(p.z() / cell_))};
}

std::vector<std::size_t> VoxelGrid::radius_search(const Vec3& query, double radius) const {
    std::vector<std::size_t> out;
    const Key c = key_of(query);
    const double r2 = radius * radius;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dz = -1; dz <= 1; ++dz) {
                auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                if (it == cells_.end()) continue;
                for (auto j : it->second) {
                    if ((points_[j] - query).squaredNorm() <= r2) out.push_back(j);
                }
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::ptrdiff_t VoxelGrid::nearest_within(const Vec3& query, double radius) const {
    const Key c = key_of(query);
    double best = radius * radius;
    std::ptrdiff_t best_idx = -1;
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
        for (std::int64_t dy = -1; dy <= 1; ++dy) {
            for (std::int64_t dz = -1; dz <= 1; ++dz) {
                auto it = cells_.find({c.x + dx, c.y + dy, c.z + dz});
                if (it == cells_.end()) continue;
                for (auto j : it->second) {
                    const double d = (points_[j] - query).squaredNorm();
                    const auto sj = static_cast<std::ptrdiff_t>(j);
                    if (d < best || (d == best && (best_idx < 0 || sj < best_idx))) {
                        best = d;
                        best_idx = sj;
                    }
                }
            }
        }
    }
    return best_idx;
}

}  // namespace colm
