#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

namespace colm::ad {

using Matrix = Eigen::MatrixXd;

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while its graph lives.
class Var {
public:
    Var() = default;

    const Matrix& value() const;
    /// Gradient of the last backward() root w.r.t. this node. Zero-sized when
    /// no gradient reached it.
    const Matrix& grad() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool requires_grad() const;

    Graph* graph() const { return graph_; }
    std::size_t id() const { return id_; }

private:
    friend class Graph;
    Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Tape of matrix-valued operations. Nodes are appended in evaluation order,
/// so reverse iteration is a valid topological order for backpropagation.
/// Operations on nodes that need no gradient record no backward step, which
/// makes inference on a graph of constants cheap.
class Graph {
public:
    /// Accumulates `delta` into the gradient of input node `id`.
    using Accumulate = std::function<void(std::size_t id, const Matrix& delta)>;
    /// Backward step: receives the output gradient and the accumulator.
    using Backward = std::function<void(const Matrix& out_grad, const Accumulate& acc)>;

    Var constant(Matrix value);
    /// Constant that refers to `value` without copying; `value` must outlive
    /// the graph.
    Var constant_ref(const Matrix& value);
    Var parameter(Matrix value);

    /// Adds a node computed from `inputs`. `backward` runs only if some
    /// input requires a gradient.
    Var record(std::span<const Var> inputs, Matrix value, Backward backward);

    /// Propagates d(root)/d(node) to every node. `root` must be 1x1.
    void backward(const Var& root);

    const Matrix& value(std::size_t id) const {
        const Node& n = nodes_[id];
        return n.external != nullptr ? *n.external : n.value;
    }
    const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

private:
    struct Node {
        Matrix value;
        Matrix grad;
        Backward backward;
        bool requires_grad = false;
        const Matrix* external = nullptr;
    };
    std::vector<Node> nodes_;
};

// -- operations -------------------------------------------------------------

Var matmul(const Var& a, const Var& b);     ///< a b
Var matmul_nt(const Var& a, const Var& b);  ///< a b^T
Var add(const Var& a, const Var& b);
/// Adds the 1 x c row `b` to every row of `a`.
Var add_row(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var relu(const Var& a);
/// x W^T + b with W (out x in) and b (1 x out).
Var linear(const Var& x, const Var& w, const Var& b);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, std::span<const Eigen::Index> rows);
Var softmax_rows(const Var& a);
/// Divides each row by max(|row|, eps).
Var l2_normalize_rows(const Var& a, double eps = 1e-12);
/// Per row: (x - mean) / sqrt(var + eps) * gain + bias, with gain and bias 1 x c.
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
/// Squared Euclidean distance between every row of `a` and every row of `b`.
Var pairwise_sqdist(const Var& a, const Var& b);
Var sum(const Var& a);

/// Edge convolution x'_i = max_{j in nbrs(i)} relu(W [x_i, x_j - x_i] + b).
/// `neighbours` holds k indices per row (row-major n x k). W is out x 2d.
Var edge_conv(const Var& x, const Var& w, const Var& b, std::span<const Eigen::Index> neighbours, Eigen::Index k);

/// Geometric attention bias: out(i, j) = p_i . r_ij, where `structure` is an
/// (n*n) x g node whose row i*n + j holds r_ij and p is n x g. No gradient
/// flows into `structure`.
Var pair_bias(const Var& p, const Var& structure);

}  // namespace colm::ad
