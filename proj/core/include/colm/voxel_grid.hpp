#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "colm/core.hpp"

namespace colm {

/// Fixed-radius neighbour index: points are hashed into cubic cells whose
/// edge equals the query radius, so a radius query visits 27 cells.
class VoxelGrid {
public:
    VoxelGrid(std::span<const Vec3> points, double cell_size);

    /// Indices of all points within `radius` (inclusive) of `query`, in
    /// ascending index order. `radius` must not exceed the cell size.
    std::vector<std::size_t> radius_search(const Vec3& query, double radius) const;

    /// Nearest point within `radius`, or -1 if none. Ties go to the lower index.
    std::ptrdiff_t nearest_within(const Vec3& query, double radius) const;

    std::size_t size() const noexcept { return points_.size(); }

private:
    struct Key {
        std::int64_t x, y, z;
        bool operator==(const Key&) const = default;
    };
    struct KeyHash {
        std::size_t operator()(const Key& k) const noexcept {
            return static_cast<std::size_t>(k.x * 73856093LL ^ k.y * 19349663LL ^ k.z * 83492791LL);
        }
    };

    Key key_of(const Vec3& p) const;

    std::span<const Vec3> points_;
    double cell_;
    std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells_;
};

}  // namespace colm
