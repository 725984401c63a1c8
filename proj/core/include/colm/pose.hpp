#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "colm/core.hpp"

namespace colm {

/// Closed-form minimiser of sum_k w_k |R src_k + t - dst_k|^2 (weighted
/// Kabsch). Needs at least 3 pairs with positive weight whose spread is not
/// collinear; throws NoSolutionError ("pose.insufficient_pairs" or
/// "pose.degenerate") otherwise.
RigidTransform weighted_svd(std::span<const Vec3> src, std::span<const Vec3> dst,
                            std::span<const double> weights);

/// Weighted Kabsch over the pairs of a correspondence set.
RigidTransform weighted_svd(const CorrespondenceSet& corr, const ObjectSet& source, const ObjectSet& target);

/// Objective value sum_k w_k |T(src_k) - dst_k|^2.
double weighted_residual(const RigidTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst,
                         std::span<const double> weights);

struct RansacConfig {
    std::size_t iterations = 2048;
    double tolerance = 0.6;  ///< inlier distance, metres
    std::size_t min_sample = 3;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class Solver { Svd, Ransac };

struct RegistrationResult {
    RigidTransform transform;
    CorrespondenceSet inliers;
    Solver solver = Solver::Svd;
    bool refined = false;  ///< ICP applied on top

    std::string tag() const;
};

/// Weighted SVD over all correspondences (weights = similarity scores).
RegistrationResult svd_register(const CorrespondenceSet& corr, const ObjectSet& source, const ObjectSet& target);

/// Fixed-iteration RANSAC over 3-point minimal samples, refit by weighted SVD
/// on the best inlier set. Throws NoSolutionError("pose.no_model") when no
/// sample reaches 3 inliers.
RegistrationResult ransac_register(const CorrespondenceSet& corr, const ObjectSet& source,
                                   const ObjectSet& target, const RansacConfig& cfg);

struct IcpConfig {
    std::size_t max_iterations = 30;
    double radius = 1.0;    ///< correspondence radius, metres
    double epsilon = 1e-6;  ///< stop when the RMS residual improves by less, metres

    void validate() const;
};

struct IcpResult {
    RigidTransform transform;
    bool no_overlap = false;  ///< no pair fell within the radius at init; transform == init
    std::size_t iterations = 0;
    /// RMS of min(d, radius) over source points, one entry per evaluated
    /// transform starting with init. Non-increasing.
    std::vector<double> residuals;
};

/// Point-to-point ICP on object centroids with nearest-neighbour pairing
/// restricted to equal classes.
IcpResult icp_refine(const ObjectSet& source, const ObjectSet& target, const RigidTransform& init,
                     const IcpConfig& cfg);

/// Same loop on raw clouds, no class gating. For when the dense scans are at hand.
IcpResult icp_refine_dense(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                           const IcpConfig& cfg);

/// Relative translation error, metres.
double rte(const Vec3& t_hat, const Vec3& t_gt);
/// Relative rotation error, radians in [0, pi].
double rre(const Mat3& r_hat, const Mat3& r_gt);

inline double rad2deg(double r) { return r * 180.0 / M_PI; }
inline double deg2rad(double d) { return d * M_PI / 180.0; }

struct PoseError {
    double rte_m = 0.0;
    double rre_rad = 0.0;
};

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth);

struct RecallSummary {
    double recall = 0.0;
    std::size_t successes = 0;
    double mean_rte_m = 0.0;    ///< over successes only; 0 if none
    double mean_rre_deg = 0.0;  ///< over successes only; 0 if none
};

/// A registration succeeds iff RTE < tau_t and RRE < tau_r (both strict).
/// Throws InputError on empty input.
RecallSummary registration_recall(std::span<const PoseError> results, double tau_t_m, double tau_r_deg);

inline bool succeeded(const PoseError& e, double tau_t_m, double tau_r_deg) {
    return e.rte_m < tau_t_m && rad2deg(e.rre_rad) < tau_r_deg;
}

}  // namespace colm
