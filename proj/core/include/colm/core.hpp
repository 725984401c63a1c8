#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace colm {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using ClassId = std::uint8_t;

/// Raw sensor points in metres. May be empty.
struct PointCloud {
    std::vector<Vec3> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

/// A point cloud with one semantic-class label per point.
class LabeledPointCloud {
public:
    LabeledPointCloud() = default;
    /// Throws InputError when the label count differs from the point count
    /// or a coordinate is not finite.
    LabeledPointCloud(PointCloud cloud, std::vector<std::uint32_t> labels);

    const PointCloud& cloud() const noexcept { return cloud_; }
    const std::vector<Vec3>& points() const noexcept { return cloud_.points; }
    const std::vector<std::uint32_t>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }

private:
    PointCloud cloud_;
    std::vector<std::uint32_t> labels_;
};

/// The compact scan: one centroid and one class byte per object.
class ObjectSet {
public:
    ObjectSet() = default;
    /// Throws InputError on size mismatch or non-finite coordinates.
    ObjectSet(std::vector<Vec3> centroids, std::vector<ClassId> classes);

    const std::vector<Vec3>& centroids() const noexcept { return centroids_; }
    const std::vector<ClassId>& classes() const noexcept { return classes_; }
    const Vec3& centroid(std::size_t i) const { return centroids_[i]; }
    ClassId cls(std::size_t i) const { return classes_[i]; }
    std::size_t size() const noexcept { return classes_.size(); }
    bool empty() const noexcept { return classes_.empty(); }

    /// Selects a subset of objects by index, preserving the given order.
    ObjectSet subset(std::span<const std::size_t> indices) const;

private:
    std::vector<Vec3> centroids_;
    std::vector<ClassId> classes_;
};

/// Rigid body transform x -> R x + t. Rotation is validated on construction.
class RigidTransform {
public:
    RigidTransform() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
    /// Throws InputError unless R is orthonormal with det(R) = +1 (within 1e-6).
    RigidTransform(const Mat3& rotation, const Vec3& translation);

    static RigidTransform identity() { return {}; }
    static RigidTransform translation_only(const Vec3& t) { return {Mat3::Identity(), t}; }
    /// Rotation about +z by `radians`, then translation `t`.
    static RigidTransform from_yaw(double radians, const Vec3& t = Vec3::Zero());
    /// Builds from 12 values, row-major [R | t] (3 rows of 4).
    static RigidTransform from_row_major(std::span<const double, 12> values);

    const Mat3& rotation() const noexcept { return rotation_; }
    const Vec3& translation() const noexcept { return translation_; }

    Vec3 operator()(const Vec3& p) const { return rotation_ * p + translation_; }

    /// 12 values, row-major [R | t].
    std::array<double, 12> row_major() const;

private:
    Mat3 rotation_;
    Vec3 translation_;
};

/// Result applies `b` first, then `a`.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);
std::vector<Vec3> apply(const RigidTransform& t, std::span<const Vec3> points);
ObjectSet apply(const RigidTransform& t, const ObjectSet& objects);

/// Projects a nearly-orthonormal matrix onto SO(3) via SVD.
Mat3 orthonormalize(const Mat3& m);

struct Correspondence {
    std::size_t source = 0;
    std::size_t target = 0;
    double weight = 1.0;

    friend bool operator==(const Correspondence&, const Correspondence&) = default;
};

/// Weighted (source index, target index) pairs.
using CorrespondenceSet = std::vector<Correspondence>;

/// Throws InputError if any index is out of range or any weight negative.
void validate(const CorrespondenceSet& corr, std::size_t n_source, std::size_t n_target);

}  // namespace colm
