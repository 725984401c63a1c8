#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "colm/autodiff.hpp"
#include "colm/core.hpp"

namespace colm::net {

using ad::Matrix;

/// Architecture of the object matching network.
struct NetConfig {
    std::size_t num_classes = 7;
    std::size_t d_emb = 4;
    std::vector<std::size_t> sem_widths = {32, 64, 128};
    std::vector<std::size_t> edge_widths = {64, 64, 64};
    std::size_t knn = 30;
    std::vector<std::size_t> post_widths = {1024, 512, 256, 256};
    std::size_t attn_blocks = 3;  ///< interleaved self + cross sets
    std::size_t heads = 4;
    std::size_t d_h = 256;
    std::size_t ffn_mult = 1;  ///< attention feed-forward width = ffn_mult * d_h
    std::size_t d_g = 32;      ///< sinusoidal width of the geometric structure embedding
    double sigma_d = 4.8;      ///< metres per distance embedding unit
    std::size_t angle_k = 3;   ///< neighbours pooled for the angle embedding
    double sigma_a = 15.0;     ///< degrees per angle embedding unit
    double coord_scale = 1.0;  ///< centroids are multiplied by this before edge convolution
    bool normalize_features = true;  ///< unit-normalise hybrid features before similarity and loss

    /// Widths from the published architecture.
    static NetConfig paper() { return {}; }
    /// Every width set to `width`, two heads, `blocks` attention sets.
    static NetConfig toy(std::size_t width = 8, std::size_t blocks = 1);

    std::size_t d_sem() const { return sem_widths.back(); }
    std::size_t d_f() const { return post_widths.back(); }

    /// Throws InputError on zero widths, heads not dividing d_h, d_g not a multiple of 4.
    void validate() const;
    std::string to_json() const;
    static NetConfig from_json(const std::string& text);

    bool operator==(const NetConfig&) const = default;
};

/// Learnable tensors by name. Weights are (out x in); biases are 1 x out.
class MatchParams {
public:
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool contains(const std::string& name) const { return tensors_.contains(name); }
    void set(const std::string& name, Matrix value) { tensors_[name] = std::move(value); }
    const std::map<std::string, Matrix>& tensors() const noexcept { return tensors_; }
    std::map<std::string, Matrix>& tensors() noexcept { return tensors_; }
    std::size_t count() const;

    bool operator==(const MatchParams&) const;

private:
    std::map<std::string, Matrix> tensors_;
};

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases 0, class
/// embedding N(0, 1). Deterministic under `seed`.
MatchParams init_params(const NetConfig& cfg, std::uint64_t seed);

/// Throws InputError when `params` lacks a tensor or has a wrong shape.
void check_shapes(const MatchParams& params, const NetConfig& cfg);

/// Checkpoint: "COLW" | version u8 | config json (u32 len + bytes) |
/// tensor count u32 | per tensor: name len u16, name, rank u8, dims u32 each,
/// float32 data, all little-endian, row-major.
std::vector<std::uint8_t> encode_checkpoint(const NetConfig& cfg, const MatchParams& params);
std::pair<NetConfig, MatchParams> decode_checkpoint(std::span<const std::uint8_t> data);
void save_checkpoint(const std::filesystem::path& path, const NetConfig& cfg, const MatchParams& params);
std::pair<NetConfig, MatchParams> load_checkpoint(const std::filesystem::path& path);

/// Pairwise rigid-invariant structure. Row i*n + j holds, in its first d_g/2
/// columns, the sinusoidal embedding of |o_i - o_j| / sigma_d and, in the
/// remaining d_g/2 columns, the element-wise max over the angle_k nearest
/// neighbours x of i (x != i, j) of the embedding of the angle between
/// (o_j - o_i) and (o_x - o_i), in units of sigma_a degrees. Degenerate angle
/// terms (zero-length legs) are skipped; an empty pool leaves zeros.
struct StructureEmbedding {
    std::size_t n = 0;
    Matrix values;  ///< (n*n) x d_g
};

StructureEmbedding geometric_structure_embedding(std::span<const Vec3> centroids, const NetConfig& cfg);

/// Sinusoidal embedding of a scalar: (sin(x w_0), cos(x w_0), sin(x w_1), ...),
/// w_k = 10000^(-2k/dim). `dim` must be even.
Eigen::RowVectorXd sinusoid(double x, std::size_t dim);

/// Parameters bound as graph leaves. Frozen parameters are referenced, not
/// copied, so `params` must outlive the graph.
class BoundParams {
public:
    BoundParams(ad::Graph& g, const MatchParams& params, bool trainable);
    const ad::Var& operator[](const std::string& name) const;
    const std::map<std::string, ad::Var>& vars() const noexcept { return vars_; }

private:
    std::map<std::string, ad::Var> vars_;
};

/// k nearest rows of `x` (squared L2), self excluded; self only when n == 1.
/// Returns a row-major n x k' table with k' = max(1, min(k, n - 1)).
std::vector<Eigen::Index> knn_table(const Matrix& x, std::size_t k, std::size_t& k_out);

// Graph-level building blocks, exposed for tests.
ad::Var semantic_embed(ad::Graph& g, const BoundParams& p, std::span<const ClassId> labels, const NetConfig& cfg);
ad::Var edgeconv_layer(const ad::Var& x, std::size_t k, const ad::Var& w, const ad::Var& b);
ad::Var enhance(ad::Graph& g, const BoundParams& p, const ObjectSet& objects, const NetConfig& cfg);

struct HybridFeatures {
    ad::Var source;
    ad::Var target;
};

/// Interleaved geometric self-attention and cross-attention. Inputs are
/// d_f-wide features; outputs d_h-wide hybrid features. Both sets share weights.
HybridFeatures attention_stack(ad::Graph& g, const BoundParams& p, const ad::Var& f_s, const ad::Var& f_m,
                               const StructureEmbedding& geo_s, const StructureEmbedding& geo_m,
                               const NetConfig& cfg);

/// Full feature path: object sets -> hybrid features (unnormalised).
HybridFeatures hybrid_features(ad::Graph& g, const BoundParams& p, const ObjectSet& source, const ObjectSet& target,
                               const NetConfig& cfg);

/// Non-negative |O_s| x |O_m| scores; masked cells are exactly 0.
using SimilarityMatrix = Matrix;

/// s_ij = exp(-|h_i - h_j|^2) on (optionally) unit rows, then
/// s_ij^2 / (row_sum_i * col_sum_j).
SimilarityMatrix similarity(const Matrix& h_s, const Matrix& h_m, bool normalize = true);

/// Zeroes every cell whose classes differ.
SimilarityMatrix mask_semantic(SimilarityMatrix s, std::span<const ClassId> classes_s,
                               std::span<const ClassId> classes_m);

/// The n_c highest nonzero cells, weights = scores, ties by (i, j)
/// ascending. Throws NoSolutionError("net.empty_correspondences") if S has
/// no nonzero cell.
CorrespondenceSet topk_correspondences(const SimilarityMatrix& s, std::size_t n_c);

struct MatchResult {
    Matrix h_source;
    Matrix h_target;
    SimilarityMatrix scores;  ///< masked
    CorrespondenceSet correspondences;
};

/// Inference: features, similarity, semantic mask, top-n_c.
MatchResult forward(const ObjectSet& source, const ObjectSet& target, const MatchParams& params,
                    const NetConfig& cfg, std::size_t n_c);

/// Floor baseline: each source object paired with the nearest target object
/// of the same class in raw coordinates; weight 1.
CorrespondenceSet nearest_by_class(const ObjectSet& source, const ObjectSet& target);

}  // namespace colm::net
