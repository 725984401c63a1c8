#include "colm/pose.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "colm/error.hpp"
#include "colm/rng.hpp"
#include "colm/voxel_grid.hpp"

namespace colm {

RigidTransform weighted_svd(std::span<const Vec3> src, std::span<const Vec3> dst,
                            std::span<const double> weights) {
    if (src.size() != dst.size() || src.size() != weights.size()) {
        throw InputError("pose.size_mismatch", "weighted_svd: source, target and weight counts differ");
    }
    double total = 0.0;
    std::size_t active = 0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("pose.bad_weight", "weights must be finite and >= 0");
        if (w > 0.0) {
            total += w;
            ++active;
        }
    }
    if (active < 3) {
        std::ostringstream msg;
        msg << "weighted SVD needs >= 3 positively weighted pairs, got " << active;
        throw NoSolutionError("pose.insufficient_pairs", msg.str());
    }

    Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
    for (std::size_t k = 0; k < src.size(); ++k) {
        const double w = weights[k] / total;
        mu_s += w * src[k];
        mu_d += w * dst[k];
    }
    Mat3 h = Mat3::Zero();
    for (std::size_t k = 0; k < src.size(); ++k) {
        if (weights[k] == 0.0) continue;
        h += (weights[k] / total) * (src[k] - mu_s) * (dst[k] - mu_d).transpose();
    }

    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 sv = svd.singularValues();
    if (!(sv[0] > 0.0) || sv[1] <= 1e-10 * sv[0]) {
        throw NoSolutionError("pose.degenerate", "degenerate geometry: correspondences are collinear or coincident");
    }
    const Mat3& u = svd.matrixU();
    const Mat3& v = svd.matrixV();
    Mat3 d = Mat3::Identity();
    d(2, 2) = (v * u.transpose()).determinant() > 0 ? 1.0 : -1.0;
    const Mat3 r = v * d * u.transpose();
    return {r, mu_d - r * mu_s};
}

RigidTransform weighted_svd(const CorrespondenceSet& corr, const ObjectSet& source, const ObjectSet& target) {
    validate(corr, source.size(), target.size());
    std::vector<Vec3> src, dst;
    std::vector<double> w;
    for (const auto& c : corr) {
        src.push_back(source.centroid(c.source));
        dst.push_back(target.centroid(c.target));
        w.push_back(c.weight);
    }
    return weighted_svd(src, dst, w);
}

double weighted_residual(const RigidTransform& t, std::span<const Vec3> src, std::span<const Vec3> dst,
                         std::span<const double> weights) {
    double sum = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) sum += weights[k] * (t(src[k]) - dst[k]).squaredNorm();
    return sum;
}

void RansacConfig::validate() const {
    if (iterations < 1) throw InputError("pose.config", "RANSAC iterations must be >= 1");
    if (!(tolerance > 0.0)) throw InputError("pose.config", "RANSAC tolerance must be > 0");
    if (min_sample != 3) throw InputError("pose.config", "RANSAC minimal sample is 3 pairs");
}

std::string RegistrationResult::tag() const {
    std::string s = solver == Solver::Svd ? "svd" : "ransac";
    if (refined) s += "+icp";
    return s;
}

RegistrationResult svd_register(const CorrespondenceSet& corr, const ObjectSet& source, const ObjectSet& target) {
    RegistrationResult r;
    r.transform = weighted_svd(corr, source, target);
    r.inliers = corr;
    r.solver = Solver::Svd;
    return r;
}

RegistrationResult ransac_register(const CorrespondenceSet& corr, const ObjectSet& source,
                                   const ObjectSet& target, const RansacConfig& cfg) {
    cfg.validate();
    validate(corr, source.size(), target.size());
    const std::size_t n = corr.size();
    if (n < 3) {
        std::ostringstream msg;
        msg << "RANSAC needs >= 3 correspondences, got " << n;
        throw NoSolutionError("pose.insufficient_pairs", msg.str());
    }
    std::vector<Vec3> src(n), dst(n);
    for (std::size_t k = 0; k < n; ++k) {
        src[k] = source.centroid(corr[k].source);
        dst[k] = target.centroid(corr[k].target);
    }

    Rng rng(cfg.seed);
    const double tol2 = cfg.tolerance * cfg.tolerance;
    const std::array<double, 3> unit = {1.0, 1.0, 1.0};
    std::size_t best_count = 0;
    double best_cost = std::numeric_limits<double>::infinity();
    RigidTransform best_model;
    std::vector<char> best_mask;
    std::vector<char> mask(n);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        std::array<std::size_t, 3> idx{};
        idx[0] = rng.uniform_int(n);
        do idx[1] = rng.uniform_int(n); while (idx[1] == idx[0]);
        do idx[2] = rng.uniform_int(n); while (idx[2] == idx[0] || idx[2] == idx[1]);
        const std::array<Vec3, 3> s = {src[idx[0]], src[idx[1]], src[idx[2]]};
        const std::array<Vec3, 3> d = {dst[idx[0]], dst[idx[1]], dst[idx[2]]};
        RigidTransform model;
        try {
            model = weighted_svd(s, d, unit);
        } catch (const NoSolutionError&) {
            continue;  // degenerate sample, draw again
        }
        std::size_t count = 0;
        double cost = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double e = (model(src[k]) - dst[k]).squaredNorm();
            mask[k] = e <= tol2;
            if (mask[k]) {
                ++count;
                cost += e;
            }
        }
        if (count > best_count || (count == best_count && cost < best_cost)) {
            best_count = count;
            best_cost = cost;
            best_model = model;
            best_mask = mask;
        }
    }
    if (best_count < 3) {
        throw NoSolutionError("pose.no_model", "RANSAC found no model with >= 3 inliers");
    }

    RegistrationResult result;
    result.solver = Solver::Ransac;
    std::vector<Vec3> is, id;
    std::vector<double> iw;
    for (std::size_t k = 0; k < n; ++k) {
        if (!best_mask[k]) continue;
        result.inliers.push_back(corr[k]);
        is.push_back(src[k]);
        id.push_back(dst[k]);
        iw.push_back(corr[k].weight);
    }
    try {
        result.transform = weighted_svd(is, id, iw);
    } catch (const NoSolutionError&) {
        result.transform = best_model;
    }
    return result;
}

void IcpConfig::validate() const {
    if (max_iterations < 1 || !(radius > 0.0) || !(epsilon > 0.0)) {
        throw InputError("pose.config", "ICP iterations, radius and epsilon must be positive");
    }
}

namespace {

struct Pairing {
    std::vector<Vec3> src, dst;
    double truncated_sq = 0.0;  // sum of min(d^2, r^2) over all source points
};

// `nearest(p)` returns the matched target point within radius, or nullptr.
template <typename Nearest>
Pairing pair_up(std::span<const Vec3> source, const RigidTransform& t, double radius, Nearest&& nearest) {
    Pairing p;
    const double r2 = radius * radius;
    for (std::size_t i = 0; i < source.size(); ++i) {
        const Vec3 q = t(source[i]);
        const Vec3* m = nearest(i, q);
        if (m == nullptr) {
            p.truncated_sq += r2;
            continue;
        }
        p.truncated_sq += (q - *m).squaredNorm();
        p.src.push_back(source[i]);
        p.dst.push_back(*m);
    }
    return p;
}

template <typename Nearest>
IcpResult icp_loop(std::span<const Vec3> source, const RigidTransform& init, const IcpConfig& cfg,
                   Nearest&& nearest) {
    cfg.validate();
    IcpResult res;
    res.transform = init;
    const double n = static_cast<double>(std::max<std::size_t>(source.size(), 1));
    auto rms = [n](const Pairing& p) { return std::sqrt(p.truncated_sq / n); };

    Pairing cur = pair_up(source, init, cfg.radius, nearest);
    res.residuals.push_back(rms(cur));
    if (cur.src.empty()) {
        res.no_overlap = true;
        return res;
    }
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        if (cur.src.size() < 3) break;
        RigidTransform next;
        try {
            const std::vector<double> w(cur.src.size(), 1.0);
            next = weighted_svd(cur.src, cur.dst, w);
        } catch (const NoSolutionError&) {
            break;
        }
        Pairing np = pair_up(source, next, cfg.radius, nearest);
        const double before = rms(cur), after = rms(np);
        if (after > before) break;  // cannot happen in exact arithmetic; guards rounding
        res.transform = next;
        res.residuals.push_back(after);
        res.iterations = it + 1;
        cur = std::move(np);
        if (before - after < cfg.epsilon) break;
    }
    return res;
}

}  // namespace

IcpResult icp_refine(const ObjectSet& source, const ObjectSet& target, const RigidTransform& init,
                     const IcpConfig& cfg) {
    const auto& tgt = target.centroids();
    const double r2 = cfg.radius * cfg.radius;
    auto nearest = [&](std::size_t i, const Vec3& q) -> const Vec3* {
        const Vec3* best = nullptr;
        double best_d = r2;
        for (std::size_t j = 0; j < tgt.size(); ++j) {
            if (target.cls(j) != source.cls(i)) continue;
            const double d = (tgt[j] - q).squaredNorm();
            if (d <= best_d && (best == nullptr || d < best_d)) {
                best_d = d;
                best = &tgt[j];
            }
        }
        return best;
    };
    return icp_loop(source.centroids(), init, cfg, nearest);
}

IcpResult icp_refine_dense(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
                           const IcpConfig& cfg) {
    VoxelGrid grid(target.points, cfg.radius);
    auto nearest = [&](std::size_t, const Vec3& q) -> const Vec3* {
        const auto j = grid.nearest_within(q, cfg.radius);
        return j < 0 ? nullptr : &target.points[static_cast<std::size_t>(j)];
    };
    return icp_loop(source.points, init, cfg, nearest);
}

double rte(const Vec3& t_hat, const Vec3& t_gt) { return (t_hat - t_gt).norm(); }

double rre(const Mat3& r_hat, const Mat3& r_gt) {
    const double c = ((r_hat.transpose() * r_gt).trace() - 1.0) / 2.0;
    return std::acos(std::clamp(c, -1.0, 1.0));
}

PoseError pose_error(const RigidTransform& estimate, const RigidTransform& truth) {
    return {rte(estimate.translation(), truth.translation()), rre(estimate.rotation(), truth.rotation())};
}

RecallSummary registration_recall(std::span<const PoseError> results, double tau_t_m, double tau_r_deg) {
    if (results.empty()) throw InputError("pose.empty_results", "registration recall over an empty result set");
    RecallSummary s;
    for (const auto& r : results) {
        if (!succeeded(r, tau_t_m, tau_r_deg)) continue;
        ++s.successes;
        s.mean_rte_m += r.rte_m;
        s.mean_rre_deg += rad2deg(r.rre_rad);
    }
    s.recall = static_cast<double>(s.successes) / static_cast<double>(results.size());
    if (s.successes > 0) {
        s.mean_rte_m /= static_cast<double>(s.successes);
        s.mean_rre_deg /= static_cast<double>(s.successes);
    }
    return s;
}

}  // namespace colm
