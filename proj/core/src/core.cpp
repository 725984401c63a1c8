#include "colm/core.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "colm/error.hpp"

namespace colm {
namespace {

bool finite(const Vec3& p) { return p.allFinite(); }

}  // namespace

LabeledPointCloud::LabeledPointCloud(PointCloud cloud, std::vector<std::uint32_t> labels)
    : cloud_(std::move(cloud)), labels_(std::move(labels)) {
    if (cloud_.points.size() != labels_.size()) {
        std::ostringstream msg;
        msg << "label count " << labels_.size() << " does not match point count "
            << cloud_.points.size();
        throw InputError("core.label_count", msg.str());
    }
    for (const auto& p : cloud_.points) {
        if (!finite(p)) throw InputError("core.non_finite", "point cloud has a non-finite coordinate");
    }
}

ObjectSet::ObjectSet(std::vector<Vec3> centroids, std::vector<ClassId> classes)
    : centroids_(std::move(centroids)), classes_(std::move(classes)) {
    if (centroids_.size() != classes_.size()) {
        std::ostringstream msg;
        msg << "object set has " << centroids_.size() << " centroids but " << classes_.size()
            << " classes";
        throw InputError("core.object_count", msg.str());
    }
    for (const auto& c : centroids_) {
        if (!finite(c)) throw InputError("core.non_finite", "object centroid is not finite");
    }
}

ObjectSet ObjectSet::subset(std::span<const std::size_t> indices) const {
    std::vector<Vec3> c;
    std::vector<ClassId> l;
    c.reserve(indices.size());
    l.reserve(indices.size());
    for (auto i : indices) {
        c.push_back(centroids_.at(i));
        l.push_back(classes_.at(i));
    }
    return {std::move(c), std::move(l)};
}

RigidTransform::RigidTransform(const Mat3& rotation, const Vec3& translation)
    : rotation_(rotation), translation_(translation) {
    if (!rotation.allFinite() || !translation.allFinite()) {
        throw InputError("core.invalid_transform", "transform has non-finite entries");
    }
    const double det = rotation.determinant();
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (std::abs(det - 1.0) > 1e-6 || ortho > 1e-6) {
        std::ostringstream msg;
        msg << "rotation is not in SO(3): det = " << det << ", max |R^T R - I| = " << ortho;
        throw InputError("core.invalid_transform", msg.str());
    }
}

RigidTransform RigidTransform::from_yaw(double radians, const Vec3& t) {
    Mat3 r;
    const double c = std::cos(radians), s = std::sin(radians);
    r << c, -s, 0, s, c, 0, 0, 0, 1;
    return {r, t};
}

RigidTransform RigidTransform::from_row_major(std::span<const double, 12> v) {
    Mat3 r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    return {r, Vec3(v[3], v[7], v[11])};
}

std::array<double, 12> RigidTransform::row_major() const {
    std::array<double, 12> out{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) out[4 * i + j] = rotation_(i, j);
        out[4 * i + 3] = translation_(i);
    }
    return out;
}

Mat3 orthonormalize(const Mat3& m) {
    Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    if ((u * v.transpose()).determinant() < 0) u.col(2) *= -1.0;
    return u * v.transpose();
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
    Mat3 r = a.rotation() * b.rotation();
    const double drift = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (drift > 1e-12) r = orthonormalize(r);
    return {r, a.rotation() * b.translation() + a.translation()};
}

RigidTransform invert(const RigidTransform& t) {
    const Mat3 rt = t.rotation().transpose();
    return {rt, -(rt * t.translation())};
}

std::vector<Vec3> apply(const RigidTransform& t, std::span<const Vec3> points) {
    std::vector<Vec3> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(t(p));
    return out;
}

ObjectSet apply(const RigidTransform& t, const ObjectSet& objects) {
    return {colm::apply(t, objects.centroids()), objects.classes()};
}

void validate(const CorrespondenceSet& corr, std::size_t n_source, std::size_t n_target) {
    for (const auto& c : corr) {
        if (c.source >= n_source || c.target >= n_target) {
            std::ostringstream msg;
            msg << "correspondence (" << c.source << ", " << c.target << ") out of range for sets of size "
                << n_source << " and " << n_target;
            throw InputError("core.correspondence_range", msg.str());
        }
        if (!(c.weight >= 0.0) || !std::isfinite(c.weight)) {
            throw InputError("core.correspondence_weight", "correspondence weight must be finite and >= 0");
        }
    }
}

}  // namespace colm
