#pragma once

#include <Eigen/Geometry>
#include <vector>

#include "colm/core.hpp"
#include "colm/rng.hpp"

namespace colm::test {

inline Mat3 rz(double deg) {
    return Eigen::AngleAxisd(deg * M_PI / 180.0, Vec3::UnitZ()).toRotationMatrix();
}

// Rotation from a uniformly random unit quaternion.
inline Mat3 random_rotation(Rng& rng) {
    Eigen::Quaterniond q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    return q.toRotationMatrix();
}

inline RigidTransform random_transform(Rng& rng, double max_t = 10.0) {
    return {random_rotation(rng), Vec3(rng.uniform(-max_t, max_t), rng.uniform(-max_t, max_t),
                                       rng.uniform(-max_t, max_t))};
}

inline std::vector<Vec3> random_points(Rng& rng, std::size_t n, double extent) {
    std::vector<Vec3> p;
    for (std::size_t i = 0; i < n; ++i) {
        p.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent));
    }
    return p;
}

inline ObjectSet random_objects(Rng& rng, std::size_t n, double extent, std::size_t classes) {
    std::vector<ClassId> c;
    for (std::size_t i = 0; i < n; ++i) c.push_back(static_cast<ClassId>(rng.uniform_int(classes)));
    return {random_points(rng, n, extent), c};
}

inline double max_abs_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace colm::test
