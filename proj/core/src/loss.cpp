#include "colm/loss.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <thread>

#include "colm/error.hpp"

namespace colm::loss {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double softplus(double z) {
    if (z == kNegInf) return 0.0;
    return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

double sigmoid(double z) {
    if (z == kNegInf) return 0.0;
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

double logsumexp(const std::vector<double>& v) {
    if (v.empty()) return kNegInf;
    double m = kNegInf;
    for (double x : v) m = std::max(m, x);
    double s = 0.0;
    for (double x : v) s += std::exp(x - m);
    return m + std::log(s);
}

// Mean loss over one side's anchors. `at(a, o)` reads h for (anchor a,
// other o); `add(a, o, d)` accumulates dL/dh into the gradient (may be null).
template <typename At, typename Add>
double side_loss(const std::vector<Anchor>& anchors, std::size_t n_other, const LossConfig& cfg, double weight,
                 At&& at, Add* add) {
    if (anchors.empty()) return 0.0;
    const double per = weight / static_cast<double>(anchors.size());
    double total = 0.0;
    std::vector<char> positive(n_other);
    std::vector<double> lp, ln;
    std::vector<std::size_t> neg_idx;
    for (const auto& a : anchors) {
        std::fill(positive.begin(), positive.end(), 0);
        lp.clear();
        ln.clear();
        neg_idx.clear();
        for (const auto& p : a.positives) {
            positive[p.index] = 1;
            const double x = at(a.index, p.index) - cfg.delta_p;
            lp.push_back(std::sqrt(p.rho) * cfg.gamma * std::max(0.0, x) * x);
        }
        for (std::size_t o = 0; o < n_other; ++o) {
            if (positive[o]) continue;
            const double x = cfg.delta_n - at(a.index, o);
            ln.push_back(cfg.gamma * std::max(0.0, x) * x);
            neg_idx.push_back(o);
        }
        const double lse_p = logsumexp(lp), lse_n = logsumexp(ln);
        const double z = lse_p + lse_n;
        total += softplus(z);
        if (add == nullptr || z == kNegInf) continue;

        const double dz = per * sigmoid(z);
        for (std::size_t k = 0; k < a.positives.size(); ++k) {
            const auto& p = a.positives[k];
            const double x = at(a.index, p.index) - cfg.delta_p;
            const double dlp = std::sqrt(p.rho) * cfg.gamma * 2.0 * std::max(0.0, x);
            (*add)(a.index, p.index, dz * std::exp(lp[k] - lse_p) * dlp);
        }
        for (std::size_t k = 0; k < neg_idx.size(); ++k) {
            const double x = cfg.delta_n - at(a.index, neg_idx[k]);
            const double dln = -cfg.gamma * 2.0 * std::max(0.0, x);
            (*add)(a.index, neg_idx[k], dz * std::exp(ln[k] - lse_n) * dln);
        }
    }
    return total * per;
}

}  // namespace

void LossConfig::validate() const {
    if (!(tau_match > 0.0)) throw InputError("loss.config", "tau_match must be > 0");
    if (!(delta_n > delta_p)) throw InputError("loss.config", "delta_n must exceed delta_p");
    if (!(gamma > 0.0)) throw InputError("loss.config", "gamma must be > 0");
}

MatchSupervision build_supervision(const ObjectSet& source, const ObjectSet& target, const RigidTransform& t_gt,
                                   const LossConfig& cfg) {
    cfg.validate();
    MatchSupervision sup;
    sup.n_source = source.size();
    sup.n_target = target.size();
    const auto aligned = colm::apply(t_gt, source.centroids());
    std::vector<Anchor> by_target(target.size());
    for (std::size_t j = 0; j < target.size(); ++j) by_target[j].index = j;

    for (std::size_t i = 0; i < source.size(); ++i) {
        Anchor a{i, {}};
        for (std::size_t j = 0; j < target.size(); ++j) {
            if (source.cls(i) != target.cls(j)) continue;
            const double d = (aligned[i] - target.centroid(j)).norm();
            if (!(d < cfg.tau_match)) continue;
            const double rho = 1.0 - d / cfg.tau_match;
            a.positives.push_back({j, rho});
            by_target[j].positives.push_back({i, rho});
        }
        if (!a.positives.empty()) sup.source_anchors.push_back(std::move(a));
    }
    for (auto& a : by_target) {
        if (!a.positives.empty()) sup.target_anchors.push_back(std::move(a));
    }
    return sup;
}

LossValue circle_loss_from_distances(const Matrix& h, const MatchSupervision& sup, const LossConfig& cfg,
                                     Matrix* grad) {
    cfg.validate();
    if (h.rows() != static_cast<Eigen::Index>(sup.n_source) || h.cols() != static_cast<Eigen::Index>(sup.n_target)) {
        throw InputError("loss.dimension_mismatch", "distance matrix does not match the supervision");
    }
    if (grad != nullptr) *grad = Matrix::Zero(h.rows(), h.cols());
    auto at_s = [&](std::size_t a, std::size_t o) { return h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(o)); };
    auto at_m = [&](std::size_t a, std::size_t o) { return h(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(a)); };
    auto add_s = [&](std::size_t a, std::size_t o, double d) {
        (*grad)(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(o)) += d;
    };
    auto add_m = [&](std::size_t a, std::size_t o, double d) {
        (*grad)(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(a)) += d;
    };
    LossValue v;
    v.source_side_empty = sup.source_anchors.empty();
    v.target_side_empty = sup.target_anchors.empty();
    v.value = side_loss(sup.source_anchors, sup.n_target, cfg, 0.5, at_s, grad ? &add_s : nullptr) +
              side_loss(sup.target_anchors, sup.n_source, cfg, 0.5, at_m, grad ? &add_m : nullptr);
    return v;
}

LossValue circle_loss(const Matrix& h_s, const Matrix& h_m, const MatchSupervision& sup, const LossConfig& cfg,
                      bool normalize) {
    ad::Graph g;
    const auto v = circle_loss(g.constant(h_s), g.constant(h_m), sup, cfg, normalize);
    LossValue out;
    out.value = v.value()(0, 0);
    out.source_side_empty = sup.source_anchors.empty();
    out.target_side_empty = sup.target_anchors.empty();
    return out;
}

ad::Var circle_loss(const ad::Var& h_s, const ad::Var& h_m, const MatchSupervision& sup, const LossConfig& cfg,
                    bool normalize) {
    if (h_s.cols() != h_m.cols()) throw InputError("loss.dimension_mismatch", "feature widths differ");
    const ad::Var a = normalize ? ad::l2_normalize_rows(h_s) : h_s;
    const ad::Var b = normalize ? ad::l2_normalize_rows(h_m) : h_m;
    const ad::Var d = ad::pairwise_sqdist(a, b);
    Matrix grad;
    const auto v = circle_loss_from_distances(d.value(), sup, cfg, d.requires_grad() ? &grad : nullptr);
    Matrix value(1, 1);
    value(0, 0) = v.value;
    const std::array<ad::Var, 1> in = {d};
    return d.graph()->record(in, std::move(value), [d, grad](const Matrix& g, const ad::Graph::Accumulate& acc) {
        acc(d.id(), grad * g(0, 0));
    });
}

namespace {

struct ItemResult {
    bool used = false;
    double loss = 0.0;
    std::map<std::string, Matrix> grads;
};

ItemResult run_item(const TrainingPair& item, const net::MatchParams& params, const net::NetConfig& ncfg,
                    const LossConfig& lcfg, bool with_grad) {
    ItemResult r;
    const auto sup = build_supervision(item.source, item.target, item.t_gt, lcfg);
    if (sup.empty()) return r;
    ad::Graph g;
    const net::BoundParams p(g, params, with_grad);
    const auto h = net::hybrid_features(g, p, item.source, item.target, ncfg);
    const auto l = circle_loss(h.source, h.target, sup, lcfg, ncfg.normalize_features);
    r.used = true;
    r.loss = l.value()(0, 0);
    if (!with_grad) return r;
    g.backward(l);
    for (const auto& [name, var] : p.vars()) {
        const auto& gr = var.grad();
        r.grads[name] = gr.size() == 0 ? Matrix::Zero(var.rows(), var.cols()) : gr;
    }
    return r;
}

Gradients reduce(std::vector<ItemResult>& items, const net::MatchParams& params, bool with_grad) {
    Gradients out;
    if (with_grad) {
        for (const auto& [name, t] : params.tensors()) out.grads[name] = Matrix::Zero(t.rows(), t.cols());
    }
    for (auto& r : items) {
        if (!r.used) continue;
        ++out.items;
        out.loss += r.loss;
        if (!with_grad) continue;
        for (auto& [name, g] : r.grads) out.grads[name] += g;
    }
    if (out.items > 0) {
        const double inv = 1.0 / static_cast<double>(out.items);
        out.loss *= inv;
        for (auto& [name, g] : out.grads) g *= inv;
    }
    return out;
}

std::vector<ItemResult> run_batch(std::span<const TrainingPair> batch, const net::MatchParams& params,
                                  const net::NetConfig& ncfg, const LossConfig& lcfg, bool with_grad,
                                  std::size_t jobs) {
    std::vector<ItemResult> results(batch.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, batch.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < batch.size(); ++i) results[i] = run_item(batch[i], params, ncfg, lcfg, with_grad);
        return results;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < batch.size(); i += jobs) {
                    results[i] = run_item(batch[i], params, ncfg, lcfg, with_grad);
                }
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return results;
}

}  // namespace

Gradients grad_params(std::span<const TrainingPair> batch, const net::MatchParams& params, const net::NetConfig& ncfg,
                      const LossConfig& lcfg, std::size_t jobs) {
    auto items = run_batch(batch, params, ncfg, lcfg, true, jobs);
    auto out = reduce(items, params, true);
    if (out.items == 0) throw InputError("loss.no_anchors", "no batch item has a positive pair");
    return out;
}

Gradients evaluate_loss(std::span<const TrainingPair> batch, const net::MatchParams& params,
                        const net::NetConfig& ncfg, const LossConfig& lcfg) {
    auto items = run_batch(batch, params, ncfg, lcfg, false, 1);
    return reduce(items, params, false);
}

}  // namespace colm::loss
