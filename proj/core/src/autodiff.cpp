#include "colm/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <limits>

#include "colm/error.hpp"

namespace colm::ad {

const Matrix& Var::value() const { return graph_->value(id_); }
const Matrix& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

Var Graph::constant(Matrix value) {
    nodes_.push_back({std::move(value), {}, {}, false});
    return {this, nodes_.size() - 1};
}

Var Graph::constant_ref(const Matrix& value) {
    nodes_.push_back({Matrix(), {}, {}, false});
    nodes_.back().external = &value;
    return {this, nodes_.size() - 1};
}

Var Graph::parameter(Matrix value) {
    nodes_.push_back({std::move(value), {}, {}, true});
    return {this, nodes_.size() - 1};
}

Var Graph::record(std::span<const Var> inputs, Matrix value, Backward backward) {
    bool needs = false;
    for (const auto& v : inputs) {
        assert(v.graph() == this);
        needs = needs || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back({std::move(value), {}, needs ? std::move(backward) : Backward{}, needs});
    return {this, nodes_.size() - 1};
}

void Graph::backward(const Var& root) {
    if (root.rows() != 1 || root.cols() != 1) {
        throw Error("ad.non_scalar_root", "backward() needs a 1x1 root");
    }
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[root.id()].grad = Matrix::Ones(1, 1);
    const Accumulate acc = [this](std::size_t id, const Matrix& delta) {
        auto& n = nodes_[id];
        if (!n.requires_grad) return;
        if (n.grad.size() == 0) {
            n.grad = delta;
        } else {
            n.grad += delta;
        }
    };
    for (std::size_t id = root.id() + 1; id-- > 0;) {
        auto& n = nodes_[id];
        if (!n.backward || n.grad.size() == 0) continue;
        // Inputs always precede their output, so the callback never writes n.grad.
        n.backward(n.grad, acc);
    }
}

namespace {

Graph& graph_of(const Var& a) { return *a.graph(); }

}  // namespace

Var matmul(const Var& a, const Var& b) {
    const std::array<Var, 2> in = {a, b};
    return graph_of(a).record(in, a.value() * b.value(), [a, b](const Matrix& g, const Graph::Accumulate& acc) {
        if (a.requires_grad()) acc(a.id(), g * b.value().transpose());
        if (b.requires_grad()) acc(b.id(), a.value().transpose() * g);
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    const std::array<Var, 2> in = {a, b};
    return graph_of(a).record(in, a.value() * b.value().transpose(),
                              [a, b](const Matrix& g, const Graph::Accumulate& acc) {
                                  if (a.requires_grad()) acc(a.id(), g * b.value());
                                  if (b.requires_grad()) acc(b.id(), g.transpose() * a.value());
                              });
}

Var add(const Var& a, const Var& b) {
    const std::array<Var, 2> in = {a, b};
    return graph_of(a).record(in, a.value() + b.value(), [a, b](const Matrix& g, const Graph::Accumulate& acc) {
        acc(a.id(), g);
        acc(b.id(), g);
    });
}

Var add_row(const Var& a, const Var& b) {
    const std::array<Var, 2> in = {a, b};
    Matrix v = a.value();
    v.rowwise() += b.value().row(0);
    return graph_of(a).record(in, std::move(v), [a, b](const Matrix& g, const Graph::Accumulate& acc) {
        acc(a.id(), g);
        if (b.requires_grad()) acc(b.id(), g.colwise().sum());
    });
}

Var scale(const Var& a, double s) {
    const std::array<Var, 1> in = {a};
    return graph_of(a).record(in, a.value() * s,
                              [a, s](const Matrix& g, const Graph::Accumulate& acc) { acc(a.id(), g * s); });
}

Var relu(const Var& a) {
    const std::array<Var, 1> in = {a};
    return graph_of(a).record(in, a.value().cwiseMax(0.0), [a](const Matrix& g, const Graph::Accumulate& acc) {
        acc(a.id(), (a.value().array() > 0.0).select(g, 0.0));
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    if (b.rows() != 1 || b.cols() != w.rows()) throw Error("ad.shape", "linear: bias must be 1 x out");
    const std::array<Var, 3> in = {x, w, b};
    Matrix v(x.rows(), w.rows());
    v.noalias() = x.value() * w.value().transpose();
    v.rowwise() += b.value().row(0);
    return graph_of(x).record(in, std::move(v), [x, w, b](const Matrix& g, const Graph::Accumulate& acc) {
        if (x.requires_grad()) acc(x.id(), g * w.value());
        if (w.requires_grad()) acc(w.id(), g.transpose() * x.value());
        if (b.requires_grad()) acc(b.id(), g.colwise().sum());
    });
}

Var concat_cols(std::span<const Var> parts) {
    Eigen::Index cols = 0;
    const Eigen::Index rows = parts.front().rows();
    for (const auto& p : parts) {
        if (p.rows() != rows) throw Error("ad.shape", "concat_cols: row counts differ");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    std::vector<Var> keep(parts.begin(), parts.end());
    return graph_of(parts.front()).record(parts, std::move(v), [keep](const Matrix& g, const Graph::Accumulate& acc) {
        Eigen::Index o = 0;
        for (const auto& p : keep) {
            if (p.requires_grad()) acc(p.id(), g.middleCols(o, p.cols()));
            o += p.cols();
        }
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    const std::array<Var, 1> in = {a};
    return graph_of(a).record(in, a.value().middleCols(start, count),
                              [a, start, count](const Matrix& g, const Graph::Accumulate& acc) {
                                  Matrix d = Matrix::Zero(a.rows(), a.cols());
                                  d.middleCols(start, count) = g;
                                  acc(a.id(), d);
                              });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    const std::array<Var, 1> in = {a};
    return graph_of(a).record(in, a.value().middleRows(start, count),
                              [a, start, count](const Matrix& g, const Graph::Accumulate& acc) {
                                  Matrix d = Matrix::Zero(a.rows(), a.cols());
                                  d.middleRows(start, count) = g;
                                  acc(a.id(), d);
                              });
}

Var gather_rows(const Var& table, std::span<const Eigen::Index> rows) {
    const std::array<Var, 1> in = {table};
    Matrix v(static_cast<Eigen::Index>(rows.size()), table.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = table.value().row(rows[i]);
    std::vector<Eigen::Index> idx(rows.begin(), rows.end());
    return graph_of(table).record(in, std::move(v), [table, idx](const Matrix& g, const Graph::Accumulate& acc) {
        Matrix d = Matrix::Zero(table.rows(), table.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
        acc(table.id(), d);
    });
}

Var softmax_rows(const Var& a) {
    const std::array<Var, 1> in = {a};
    Matrix v = a.value();
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
        const double m = v.row(i).maxCoeff();
        v.row(i) = (v.row(i).array() - m).exp();
        v.row(i) /= v.row(i).sum();
    }
    Matrix s = v;
    return graph_of(a).record(in, std::move(v), [a, s](const Matrix& g, const Graph::Accumulate& acc) {
        // d_in = s * (g - rowsum(g * s))
        const Eigen::VectorXd dot = (g.array() * s.array()).rowwise().sum();
        Matrix d = s.array() * (g.colwise() - dot).array();
        acc(a.id(), d);
    });
}

Var l2_normalize_rows(const Var& a, double eps) {
    const std::array<Var, 1> in = {a};
    const Eigen::VectorXd norms = a.value().rowwise().norm().cwiseMax(eps);
    Matrix y = a.value().array().colwise() / norms.array();
    Matrix yc = y;
    return graph_of(a).record(in, std::move(y), [a, yc, norms, eps](const Matrix& g, const Graph::Accumulate& acc) {
        Matrix d(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            if (a.value().row(i).norm() < eps) {
                d.row(i) = g.row(i) / eps;  // clamped region: y = x / eps
            } else {
                const double dot = g.row(i).dot(yc.row(i));
                d.row(i) = (g.row(i) - dot * yc.row(i)) / norms[i];
            }
        }
        acc(a.id(), d);
    });
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
    const Eigen::Index c = a.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c) {
        throw Error("ad.shape", "layer_norm_rows: gain and bias must be 1 x cols");
    }
    const std::array<Var, 3> in = {a, gain, bias};
    Matrix xhat(a.rows(), c);
    Eigen::VectorXd inv_std(a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const auto row = a.value().row(i).array();
        const double mean = row.mean();
        const double var = (row - mean).square().mean();
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (row - mean) * inv_std[i];
    }
    Matrix y = xhat;
    y.array().rowwise() *= gain.value().row(0).array();
    y.rowwise() += bias.value().row(0);
    return graph_of(a).record(in, std::move(y),
                              [a, gain, bias, xhat, inv_std](const Matrix& g, const Graph::Accumulate& acc) {
                                  if (gain.requires_grad()) acc(gain.id(), (g.array() * xhat.array()).colwise().sum());
                                  if (bias.requires_grad()) acc(bias.id(), g.colwise().sum());
                                  if (!a.requires_grad()) return;
                                  Matrix gh = g;
                                  gh.array().rowwise() *= gain.value().row(0).array();
                                  const Eigen::VectorXd m1 = gh.rowwise().mean();
                                  const Eigen::VectorXd m2 = (gh.array() * xhat.array()).rowwise().mean();
                                  Matrix d = gh;
                                  d.colwise() -= m1;
                                  d.array() -= xhat.array().colwise() * m2.array();
                                  d.array().colwise() *= inv_std.array();
                                  acc(a.id(), d);
                              });
}

Var pairwise_sqdist(const Var& a, const Var& b) {
    const std::array<Var, 2> in = {a, b};
    const Eigen::VectorXd na = a.value().rowwise().squaredNorm();
    const Eigen::VectorXd nb = b.value().rowwise().squaredNorm();
    Matrix d = -2.0 * a.value() * b.value().transpose();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    return graph_of(a).record(in, std::move(d), [a, b](const Matrix& g, const Graph::Accumulate& acc) {
        // d_ij = |a_i|^2 + |b_j|^2 - 2 a_i.b_j
        if (a.requires_grad()) {
            Matrix da = -2.0 * g * b.value();
            da += 2.0 * (a.value().array().colwise() * g.rowwise().sum().array()).matrix();
            acc(a.id(), da);
        }
        if (b.requires_grad()) {
            Matrix db = -2.0 * g.transpose() * a.value();
            db += 2.0 * (b.value().array().colwise() * g.colwise().sum().transpose().array()).matrix();
            acc(b.id(), db);
        }
    });
}

Var sum(const Var& a) {
    const std::array<Var, 1> in = {a};
    Matrix v(1, 1);
    v(0, 0) = a.value().sum();
    return graph_of(a).record(in, std::move(v), [a](const Matrix& g, const Graph::Accumulate& acc) {
        acc(a.id(), Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
    });
}

Var edge_conv(const Var& x, const Var& w, const Var& b, std::span<const Eigen::Index> neighbours, Eigen::Index k) {
    const Eigen::Index n = x.rows(), d = x.cols(), out = w.rows();
    if (w.cols() != 2 * d) throw Error("ad.shape", "edge_conv: weight must be out x 2*in");
    if (static_cast<Eigen::Index>(neighbours.size()) != n * k) throw Error("ad.shape", "edge_conv: neighbour table size");

    // W [x_i, x_j - x_i] = (Wa - Wb) x_i + Wb x_j
    const Matrix wa = w.value().leftCols(d);
    const Matrix wb = w.value().rightCols(d);
    const Matrix m = wa - wb;
    Matrix a_term = x.value() * m.transpose();
    a_term.rowwise() += b.value().row(0);
    const Matrix b_term = x.value() * wb.transpose();

    Matrix y(n, out);
    std::vector<Eigen::Index> arg(static_cast<std::size_t>(n * out));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < out; ++c) {
            double best = -std::numeric_limits<double>::infinity();
            Eigen::Index best_j = 0;
            for (Eigen::Index q = 0; q < k; ++q) {
                const Eigen::Index j = neighbours[static_cast<std::size_t>(i * k + q)];
                const double e = b_term(j, c);
                if (e > best) {
                    best = e;
                    best_j = j;
                }
            }
            const double v = a_term(i, c) + best;
            y(i, c) = v > 0.0 ? v : 0.0;
            arg[static_cast<std::size_t>(i * out + c)] = v > 0.0 ? best_j : -1;
        }
    }

    const std::array<Var, 3> in = {x, w, b};
    return graph_of(x).record(in, std::move(y), [x, w, b, arg, m, wb, n, d, out](const Matrix& g,
                                                                                 const Graph::Accumulate& acc) {
        Matrix ga = Matrix::Zero(n, out), gb = Matrix::Zero(n, out);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index c = 0; c < out; ++c) {
                const auto j = arg[static_cast<std::size_t>(i * out + c)];
                if (j < 0) continue;
                ga(i, c) += g(i, c);
                gb(j, c) += g(i, c);
            }
        }
        if (x.requires_grad()) acc(x.id(), ga * m + gb * wb);
        if (w.requires_grad()) {
            const Matrix dm = ga.transpose() * x.value();
            Matrix dw(out, 2 * d);
            dw.leftCols(d) = dm;
            dw.rightCols(d) = gb.transpose() * x.value() - dm;
            acc(w.id(), dw);
        }
        if (b.requires_grad()) acc(b.id(), ga.colwise().sum());
    });
}

Var pair_bias(const Var& p, const Var& structure) {
    const Eigen::Index n = p.rows();
    const Matrix& r = structure.value();
    if (r.rows() != n * n || r.cols() != p.cols()) {
        throw Error("ad.shape", "pair_bias: structure must be (n*n) x g");
    }
    Matrix y(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        y.row(i) = (r.middleRows(i * n, n) * p.value().row(i).transpose()).transpose();
    }
    const std::array<Var, 2> in = {p, structure};
    return graph_of(p).record(in, std::move(y), [p, structure, n](const Matrix& g, const Graph::Accumulate& acc) {
        if (!p.requires_grad()) return;
        const Matrix& rs = structure.value();
        Matrix dp(n, p.cols());
        for (Eigen::Index i = 0; i < n; ++i) dp.row(i) = g.row(i) * rs.middleRows(i * n, n);
        acc(p.id(), dp);
    });
}

}  // namespace colm::ad
