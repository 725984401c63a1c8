#include "colm/net.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <numeric>
#include <sstream>

#include "colm/codec.hpp"
#include "colm/error.hpp"
#include "colm/rng.hpp"

namespace colm::net {
namespace {

using ad::Var;
using Json = nlohmann::json;

enum class Init { Embedding, Weight, Bias, Gain };

struct Spec {
    std::string name;
    Eigen::Index rows, cols;
    Init init;
};

void add_linear(std::vector<Spec>& out, const std::string& prefix, std::size_t in, std::size_t o, bool bias = true) {
    out.push_back({prefix + ".weight", static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(in), Init::Weight});
    if (bias) out.push_back({prefix + ".bias", 1, static_cast<Eigen::Index>(o), Init::Bias});
}

void add_attention(std::vector<Spec>& out, const std::string& prefix, const NetConfig& cfg, bool geometric) {
    // A key bias only shifts each score row by a constant, which softmax
    // removes, so keys are projected without one.
    add_linear(out, prefix + ".q", cfg.d_h, cfg.d_h);
    add_linear(out, prefix + ".k", cfg.d_h, cfg.d_h, false);
    add_linear(out, prefix + ".v", cfg.d_h, cfg.d_h);
    add_linear(out, prefix + ".o", cfg.d_h, cfg.d_h);
    if (geometric) add_linear(out, prefix + ".geo", cfg.d_g, cfg.d_h, false);
    add_linear(out, prefix + ".ffn1", cfg.d_h, cfg.ffn_mult * cfg.d_h);
    add_linear(out, prefix + ".ffn2", cfg.ffn_mult * cfg.d_h, cfg.d_h);
    for (const char* norm : {"norm1", "norm2"}) {
        out.push_back({prefix + "." + norm + ".weight", 1, static_cast<Eigen::Index>(cfg.d_h), Init::Gain});
        out.push_back({prefix + "." + norm + ".bias", 1, static_cast<Eigen::Index>(cfg.d_h), Init::Bias});
    }
}

// Every tensor in creation order; initialisation draws in this order.
std::vector<Spec> param_specs(const NetConfig& cfg) {
    std::vector<Spec> s;
    s.push_back({"embed", static_cast<Eigen::Index>(cfg.num_classes), static_cast<Eigen::Index>(cfg.d_emb),
                 Init::Embedding});
    std::size_t in = cfg.d_emb;
    for (std::size_t k = 0; k < cfg.sem_widths.size(); ++k) {
        add_linear(s, "sem." + std::to_string(k), in, cfg.sem_widths[k]);
        in = cfg.sem_widths[k];
    }
    in = 3 + cfg.d_sem();
    std::size_t cat = 0;
    for (std::size_t k = 0; k < cfg.edge_widths.size(); ++k) {
        add_linear(s, "edge." + std::to_string(k), 2 * in, cfg.edge_widths[k]);
        in = cfg.edge_widths[k];
        cat += in;
    }
    in = cat;
    for (std::size_t k = 0; k < cfg.post_widths.size(); ++k) {
        add_linear(s, "post." + std::to_string(k), in, cfg.post_widths[k]);
        in = cfg.post_widths[k];
    }
    add_linear(s, "in_proj", cfg.d_f(), cfg.d_h);
    for (std::size_t b = 0; b < cfg.attn_blocks; ++b) {
        add_attention(s, "attn." + std::to_string(b) + ".self", cfg, true);
        add_attention(s, "attn." + std::to_string(b) + ".cross", cfg, false);
    }
    add_linear(s, "out_proj", cfg.d_h, cfg.d_h);
    return s;
}

Var mlp(const BoundParams& p, const std::string& prefix, std::size_t layers, Var x) {
    for (std::size_t k = 0; k < layers; ++k) {
        const auto name = prefix + "." + std::to_string(k);
        x = ad::linear(x, p[name + ".weight"], p[name + ".bias"]);
        if (k + 1 < layers) x = ad::relu(x);
    }
    return x;
}

Var lin(const BoundParams& p, const std::string& name, const Var& x) {
    return ad::linear(x, p[name + ".weight"], p[name + ".bias"]);
}

// Multi-head attention of `xq` over `xkv`; adds the geometric bias when
// `structure` is given. Returns the residual-updated xq followed by the
// feed-forward block.
Var attention_layer(const BoundParams& p, const std::string& prefix, const Var& xq, const Var& xkv,
                    const Var* structure, const NetConfig& cfg) {
    const Var q = lin(p, prefix + ".q", xq);
    const Var k = ad::matmul_nt(xkv, p[prefix + ".k.weight"]);
    const Var v = lin(p, prefix + ".v", xkv);
    const auto dk = static_cast<Eigen::Index>(cfg.d_h / cfg.heads);
    const double inv = 1.0 / std::sqrt(static_cast<double>(dk));

    std::vector<Var> heads;
    for (std::size_t h = 0; h < cfg.heads; ++h) {
        const auto off = static_cast<Eigen::Index>(h) * dk;
        const Var qh = ad::slice_cols(q, off, dk);
        Var scores = ad::matmul_nt(qh, ad::slice_cols(k, off, dk));
        if (structure != nullptr) {
            // q_i . (W_g r_ij) = (q_i W_g) . r_ij
            const Var wg = ad::slice_rows(p[prefix + ".geo.weight"], off, dk);
            scores = ad::add(scores, ad::pair_bias(ad::matmul(qh, wg), *structure));
        }
        const Var attn = ad::softmax_rows(ad::scale(scores, inv));
        heads.push_back(ad::matmul(attn, ad::slice_cols(v, off, dk)));
    }
    const Var x1 = ad::layer_norm_rows(ad::add(xq, lin(p, prefix + ".o", ad::concat_cols(heads))),
                                       p[prefix + ".norm1.weight"], p[prefix + ".norm1.bias"]);
    const Var ff = lin(p, prefix + ".ffn2", ad::relu(lin(p, prefix + ".ffn1", x1)));
    return ad::layer_norm_rows(ad::add(x1, ff), p[prefix + ".norm2.weight"], p[prefix + ".norm2.bias"]);
}

}  // namespace

NetConfig NetConfig::toy(std::size_t width, std::size_t blocks) {
    NetConfig c;
    c.sem_widths = {width, width};
    c.edge_widths = {width, width, width};
    c.post_widths = {width, width};
    c.attn_blocks = blocks;
    c.heads = 2;
    c.d_h = width;
    c.d_g = width;
    return c;
}

void NetConfig::validate() const {
    auto positive = [](const std::vector<std::size_t>& v) {
        return !v.empty() && std::all_of(v.begin(), v.end(), [](std::size_t w) { return w >= 1; });
    };
    if (num_classes < 1 || d_emb < 1 || knn < 1 || heads < 1 || d_h < 1 || ffn_mult < 1 || d_g < 2 ||
        !positive(sem_widths) || !positive(edge_widths) || !positive(post_widths)) {
        throw InputError("net.config", "network widths must all be >= 1");
    }
    if (d_h % heads != 0) throw InputError("net.config", "heads must divide d_h");
    if (d_g % 4 != 0) throw InputError("net.config", "d_g must be a multiple of 4");
    if (!(sigma_d > 0.0) || !(sigma_a > 0.0)) throw InputError("net.config", "embedding scales must be > 0");
    if (!std::isfinite(coord_scale) || coord_scale < 0.0) throw InputError("net.config", "coord_scale must be >= 0");
}

std::string NetConfig::to_json() const {
    Json j = {{"num_classes", num_classes}, {"d_emb", d_emb},         {"sem_widths", sem_widths},
              {"edge_widths", edge_widths}, {"knn", knn},             {"post_widths", post_widths},
              {"attn_blocks", attn_blocks}, {"heads", heads},         {"d_h", d_h},
              {"ffn_mult", ffn_mult},       {"d_g", d_g},             {"sigma_d", sigma_d},
              {"angle_k", angle_k},         {"sigma_a", sigma_a},     {"coord_scale", coord_scale},
              {"normalize_features", normalize_features}};
    return j.dump();
}

NetConfig NetConfig::from_json(const std::string& text) {
    try {
        const Json j = Json::parse(text);
        NetConfig c;
        c.num_classes = j.at("num_classes");
        c.d_emb = j.at("d_emb");
        c.sem_widths = j.at("sem_widths").get<std::vector<std::size_t>>();
        c.edge_widths = j.at("edge_widths").get<std::vector<std::size_t>>();
        c.knn = j.at("knn");
        c.post_widths = j.at("post_widths").get<std::vector<std::size_t>>();
        c.attn_blocks = j.at("attn_blocks");
        c.heads = j.at("heads");
        c.d_h = j.at("d_h");
        c.ffn_mult = j.at("ffn_mult");
        c.d_g = j.at("d_g");
        c.sigma_d = j.at("sigma_d");
        c.angle_k = j.at("angle_k");
        c.sigma_a = j.at("sigma_a");
        c.coord_scale = j.value("coord_scale", 1.0);
        c.normalize_features = j.at("normalize_features");
        c.validate();
        return c;
    } catch (const Json::exception& e) {
        throw InputError("net.config", std::string("bad network config: ") + e.what());
    }
}

Matrix& MatchParams::at(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InputError("net.missing_param", "no parameter named " + name);
    return it->second;
}

const Matrix& MatchParams::at(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw InputError("net.missing_param", "no parameter named " + name);
    return it->second;
}

std::size_t MatchParams::count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors_) n += static_cast<std::size_t>(t.size());
    return n;
}

bool MatchParams::operator==(const MatchParams& o) const {
    if (tensors_.size() != o.tensors_.size()) return false;
    for (const auto& [name, t] : tensors_) {
        auto it = o.tensors_.find(name);
        if (it == o.tensors_.end() || it->second.rows() != t.rows() || it->second.cols() != t.cols() ||
            it->second != t) {
            return false;
        }
    }
    return true;
}

MatchParams init_params(const NetConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    MatchParams p;
    for (const auto& s : param_specs(cfg)) {
        Matrix m(s.rows, s.cols);
        switch (s.init) {
            case Init::Embedding:
                for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
                break;
            case Init::Weight: {
                const double bound = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
                for (Eigen::Index r = 0; r < m.rows(); ++r)
                    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
                break;
            }
            case Init::Bias:
                m.setZero();
                break;
            case Init::Gain:
                m.setOnes();
                break;
        }
        p.set(s.name, std::move(m));
    }
    return p;
}

void check_shapes(const MatchParams& params, const NetConfig& cfg) {
    const auto specs = param_specs(cfg);
    for (const auto& s : specs) {
        const auto& t = params.at(s.name);
        if (t.rows() != s.rows || t.cols() != s.cols) {
            std::ostringstream msg;
            msg << "parameter " << s.name << " is " << t.rows() << "x" << t.cols() << ", expected " << s.rows
                << "x" << s.cols;
            throw InputError("net.param_shape", msg.str());
        }
    }
    if (params.tensors().size() != specs.size()) {
        throw InputError("net.param_shape", "checkpoint holds tensors the configuration does not use");
    }
}

// -- checkpoint ----------------------------------------------------------------

namespace {

constexpr std::array<char, 4> kCkptMagic = {'C', 'O', 'L', 'W'};
constexpr std::uint8_t kCkptVersion = 1;

void put(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

struct Reader {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

    std::uint64_t get(int bytes) {
        need(static_cast<std::size_t>(bytes));
        std::uint64_t v = 0;
        for (int i = bytes - 1; i >= 0; --i) v = (v << 8) | data[pos + static_cast<std::size_t>(i)];
        pos += static_cast<std::size_t>(bytes);
        return v;
    }
    void need(std::size_t n) const {
        if (data.size() - pos < n) throw InputError("net.checkpoint", "checkpoint is truncated");
    }
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NetConfig& cfg, const MatchParams& params) {
    std::vector<std::uint8_t> out(kCkptMagic.begin(), kCkptMagic.end());
    out.push_back(kCkptVersion);
    const auto json = cfg.to_json();
    put(out, json.size(), 4);
    out.insert(out.end(), json.begin(), json.end());
    put(out, params.tensors().size(), 4);
    for (const auto& [name, t] : params.tensors()) {
        put(out, name.size(), 2);
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(2);
        put(out, static_cast<std::uint64_t>(t.rows()), 4);
        put(out, static_cast<std::uint64_t>(t.cols()), 4);
        for (Eigen::Index r = 0; r < t.rows(); ++r)
            for (Eigen::Index c = 0; c < t.cols(); ++c)
                put(out, std::bit_cast<std::uint32_t>(static_cast<float>(t(r, c))), 4);
    }
    return out;
}

std::pair<NetConfig, MatchParams> decode_checkpoint(std::span<const std::uint8_t> data) {
    Reader rd{data};
    rd.need(5);
    if (!std::equal(kCkptMagic.begin(), kCkptMagic.end(), data.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
        throw InputError("net.checkpoint", "not a parameter checkpoint (bad magic)");
    }
    rd.pos = 4;
    if (rd.get(1) != kCkptVersion) throw InputError("net.checkpoint", "unsupported checkpoint version");
    const auto json_len = rd.get(4);
    rd.need(json_len);
    const std::string json(data.begin() + static_cast<std::ptrdiff_t>(rd.pos),
                           data.begin() + static_cast<std::ptrdiff_t>(rd.pos + json_len));
    rd.pos += json_len;
    NetConfig cfg = NetConfig::from_json(json);

    MatchParams params;
    const auto count = rd.get(4);
    for (std::uint64_t t = 0; t < count; ++t) {
        const auto len = rd.get(2);
        rd.need(len);
        std::string name(data.begin() + static_cast<std::ptrdiff_t>(rd.pos),
                         data.begin() + static_cast<std::ptrdiff_t>(rd.pos + len));
        rd.pos += len;
        const auto rank = rd.get(1);
        std::vector<std::uint64_t> dims;
        for (std::uint64_t k = 0; k < rank; ++k) dims.push_back(rd.get(4));
        if (rank < 1 || rank > 2) throw InputError("net.checkpoint", "tensor " + name + " has unsupported rank");
        const auto rows = static_cast<Eigen::Index>(rank == 2 ? dims[0] : 1);
        const auto cols = static_cast<Eigen::Index>(dims.back());
        Matrix m(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r)
            for (Eigen::Index c = 0; c < cols; ++c)
                m(r, c) = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(rd.get(4))));
        params.set(name, std::move(m));
    }
    if (rd.pos != data.size()) throw InputError("net.checkpoint", "trailing bytes after checkpoint");
    check_shapes(params, cfg);
    return {cfg, params};
}

void save_checkpoint(const std::filesystem::path& path, const NetConfig& cfg, const MatchParams& params) {
    codec::write_file(path, encode_checkpoint(cfg, params));
}

std::pair<NetConfig, MatchParams> load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(codec::read_file(path));
}

// -- geometry --------------------------------------------------------------------

namespace {

std::vector<double> sinusoid_freqs(std::size_t dim) {
    std::vector<double> w(dim / 2);
    for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(dim));
    }
    return w;
}

void sinusoid_into(double x, const std::vector<double>& freqs, double* out) {
    for (std::size_t k = 0; k < freqs.size(); ++k) {
        out[2 * k] = std::sin(x * freqs[k]);
        out[2 * k + 1] = std::cos(x * freqs[k]);
    }
}

}  // namespace

Eigen::RowVectorXd sinusoid(double x, std::size_t dim) {
    Eigen::RowVectorXd out(static_cast<Eigen::Index>(dim));
    sinusoid_into(x, sinusoid_freqs(dim), out.data());
    return out;
}

StructureEmbedding geometric_structure_embedding(std::span<const Vec3> pts, const NetConfig& cfg) {
    const std::size_t n = pts.size();
    const std::size_t d = cfg.d_g;
    const std::size_t half = d / 2;  // distance columns, then angle columns
    const auto freqs = sinusoid_freqs(half);
    StructureEmbedding out;
    out.n = n;
    // Filled row-major (one contiguous d-vector per pair), then stored
    // column-major as the rest of the network expects.
    std::vector<double> rows(n * n * d, 0.0);

    // Per anchor i: other indices ordered by (distance, index); enough to
    // pool angle_k neighbours while skipping one partner j.
    const std::size_t keep = std::min(cfg.angle_k + 1, n > 0 ? n - 1 : 0);
    std::vector<std::vector<std::size_t>> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> idx;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) idx.push_back(j);
        auto closer = [&](std::size_t a, std::size_t b) {
            const double da = (pts[a] - pts[i]).squaredNorm(), db = (pts[b] - pts[i]).squaredNorm();
            return da < db || (da == db && a < b);
        };
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), closer);
        idx.resize(keep);
        order[i] = std::move(idx);
    }

    // Distance part, symmetric in (i, j).
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            double* row = rows.data() + (i * n + j) * d;
            sinusoid_into((pts[j] - pts[i]).norm() / cfg.sigma_d, freqs, row);
            std::copy(row, row + half, rows.data() + (j * n + i) * d);
        }
    }

    const double to_deg = 180.0 / M_PI;
    std::vector<double> e(half);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double* pooled = rows.data() + (i * n + j) * d + half;
            const Vec3 leg = pts[j] - pts[i];
            const double dist = leg.norm();
            if (dist <= 1e-12) continue;

            std::size_t used = 0;
            bool any = false;
            for (auto x : order[i]) {
                if (used == cfg.angle_k) break;
                if (x == j) continue;
                ++used;
                const Vec3 other = pts[x] - pts[i];
                if (other.norm() <= 1e-12) continue;
                const double angle = std::atan2(leg.cross(other).norm(), leg.dot(other)) * to_deg;
                sinusoid_into(angle / cfg.sigma_a, freqs, any ? e.data() : pooled);
                if (any) {
                    for (std::size_t c = 0; c < half; ++c) pooled[c] = std::max(pooled[c], e[c]);
                }
                any = true;
            }
        }
    }
    out.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        rows.data(), static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(d));
    return out;
}

// -- network -------------------------------------------------------------------

BoundParams::BoundParams(ad::Graph& g, const MatchParams& params, bool trainable) {
    for (const auto& [name, t] : params.tensors()) {
        vars_.emplace(name, trainable ? g.parameter(t) : g.constant_ref(t));
    }
}

const ad::Var& BoundParams::operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw InputError("net.missing_param", "no parameter named " + name);
    return it->second;
}

std::vector<Eigen::Index> knn_table(const Matrix& x, std::size_t k, std::size_t& k_out) {
    const auto n = static_cast<std::size_t>(x.rows());
    if (n == 1) {
        k_out = 1;
        return {0};
    }
    k_out = std::max<std::size_t>(1, std::min(k, n - 1));
    const Eigen::VectorXd sq = x.rowwise().squaredNorm();
    Matrix d2 = -2.0 * x * x.transpose();
    d2.colwise() += sq;
    d2.rowwise() += sq.transpose();

    std::vector<Eigen::Index> table(n * k_out);
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < n; ++i) {
        idx.clear();
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) idx.push_back(static_cast<Eigen::Index>(j));
        const auto row = static_cast<Eigen::Index>(i);
        std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k_out), idx.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              const double da = d2(row, a), db = d2(row, b);
                              return da < db || (da == db && a < b);
                          });
        std::copy_n(idx.begin(), k_out, table.begin() + static_cast<std::ptrdiff_t>(i * k_out));
    }
    return table;
}

Var semantic_embed(ad::Graph& g, const BoundParams& p, std::span<const ClassId> labels, const NetConfig& cfg) {
    std::vector<Eigen::Index> rows;
    rows.reserve(labels.size());
    for (auto l : labels) {
        if (l >= cfg.num_classes) {
            std::ostringstream msg;
            msg << "class id " << int{l} << " outside the network's " << cfg.num_classes << " classes";
            throw InputError("net.unknown_class", msg.str());
        }
        rows.push_back(l);
    }
    if (rows.empty()) {
        return g.constant(Matrix::Zero(0, static_cast<Eigen::Index>(cfg.d_sem())));
    }
    const Var e = ad::gather_rows(p["embed"], rows);
    return mlp(p, "sem", cfg.sem_widths.size(), e);
}

Var edgeconv_layer(const Var& x, std::size_t k, const Var& w, const Var& b) {
    std::size_t kk = 0;
    const auto table = knn_table(x.value(), k, kk);
    return ad::edge_conv(x, w, b, table, static_cast<Eigen::Index>(kk));
}

Var enhance(ad::Graph& g, const BoundParams& p, const ObjectSet& objects, const NetConfig& cfg) {
    if (objects.empty()) throw InputError("net.empty_set", "cannot compute features of an empty object set");
    const auto n = static_cast<Eigen::Index>(objects.size());
    Matrix xyz(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
        xyz.row(i) = cfg.coord_scale * objects.centroid(static_cast<std::size_t>(i)).transpose();
    }
    const std::array<Var, 2> parts = {g.constant(std::move(xyz)), semantic_embed(g, p, objects.classes(), cfg)};
    Var x = ad::concat_cols(parts);

    std::vector<Var> layers;
    for (std::size_t l = 0; l < cfg.edge_widths.size(); ++l) {
        const auto name = "edge." + std::to_string(l);
        x = edgeconv_layer(x, cfg.knn, p[name + ".weight"], p[name + ".bias"]);
        layers.push_back(x);
    }
    return mlp(p, "post", cfg.post_widths.size(), ad::concat_cols(layers));
}

HybridFeatures attention_stack(ad::Graph& g, const BoundParams& p, const Var& f_s, const Var& f_m,
                               const StructureEmbedding& geo_s, const StructureEmbedding& geo_m,
                               const NetConfig& cfg) {
    const auto df = static_cast<Eigen::Index>(cfg.d_f());
    if (f_s.cols() != df || f_m.cols() != df) {
        std::ostringstream msg;
        msg << "attention input width " << f_s.cols() << "/" << f_m.cols() << " does not match d_f = " << df;
        throw InputError("net.dimension_mismatch", msg.str());
    }
    if (geo_s.n != static_cast<std::size_t>(f_s.rows()) || geo_m.n != static_cast<std::size_t>(f_m.rows()) ||
        geo_s.values.cols() != static_cast<Eigen::Index>(cfg.d_g) ||
        geo_m.values.cols() != static_cast<Eigen::Index>(cfg.d_g)) {
        throw InputError("net.dimension_mismatch", "structure embedding does not match the feature sets");
    }
    const Var rs = g.constant(geo_s.values);
    const Var rm = g.constant(geo_m.values);
    Var xs = lin(p, "in_proj", f_s);
    Var xm = lin(p, "in_proj", f_m);
    for (std::size_t b = 0; b < cfg.attn_blocks; ++b) {
        const auto prefix = "attn." + std::to_string(b);
        xs = attention_layer(p, prefix + ".self", xs, xs, &rs, cfg);
        xm = attention_layer(p, prefix + ".self", xm, xm, &rm, cfg);
        const Var cs = attention_layer(p, prefix + ".cross", xs, xm, nullptr, cfg);
        const Var cm = attention_layer(p, prefix + ".cross", xm, xs, nullptr, cfg);
        xs = cs;
        xm = cm;
    }
    return {lin(p, "out_proj", xs), lin(p, "out_proj", xm)};
}

HybridFeatures hybrid_features(ad::Graph& g, const BoundParams& p, const ObjectSet& source, const ObjectSet& target,
                               const NetConfig& cfg) {
    const Var fs = enhance(g, p, source, cfg);
    const Var fm = enhance(g, p, target, cfg);
    const auto gs = geometric_structure_embedding(source.centroids(), cfg);
    const auto gm = geometric_structure_embedding(target.centroids(), cfg);
    return attention_stack(g, p, fs, fm, gs, gm, cfg);
}

SimilarityMatrix similarity(const Matrix& h_s, const Matrix& h_m, bool normalize) {
    if (h_s.cols() != h_m.cols()) throw InputError("net.dimension_mismatch", "similarity: feature widths differ");
    Matrix a = h_s, b = h_m;
    if (normalize) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) a.row(i) /= std::max(a.row(i).norm(), 1e-12);
        for (Eigen::Index i = 0; i < b.rows(); ++i) b.row(i) /= std::max(b.row(i).norm(), 1e-12);
    }
    const Eigen::VectorXd na = a.rowwise().squaredNorm(), nb = b.rowwise().squaredNorm();
    Matrix d = -2.0 * a * b.transpose();
    d.colwise() += na;
    d.rowwise() += nb.transpose();
    const Matrix s = (-d.cwiseMax(0.0)).array().exp().matrix();
    const Eigen::VectorXd rows = s.rowwise().sum();
    const Eigen::RowVectorXd cols = s.colwise().sum();
    Matrix out(s.rows(), s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            const double r = rows[i] > 0.0 ? s(i, j) / rows[i] : 0.0;
            const double c = cols[j] > 0.0 ? s(i, j) / cols[j] : 0.0;
            out(i, j) = r * c;
        }
    }
    return out;
}

SimilarityMatrix mask_semantic(SimilarityMatrix s, std::span<const ClassId> cs, std::span<const ClassId> cm) {
    if (static_cast<Eigen::Index>(cs.size()) != s.rows() || static_cast<Eigen::Index>(cm.size()) != s.cols()) {
        throw InputError("net.dimension_mismatch", "class lists do not match the similarity matrix");
    }
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            if (cs[static_cast<std::size_t>(i)] != cm[static_cast<std::size_t>(j)]) s(i, j) = 0.0;
    return s;
}

CorrespondenceSet topk_correspondences(const SimilarityMatrix& s, std::size_t n_c) {
    if (n_c < 1) throw InputError("net.topk", "n_c must be >= 1");
    CorrespondenceSet cells;
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j)
            if (s(i, j) > 0.0) cells.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j), s(i, j)});
    if (cells.empty()) {
        throw NoSolutionError("net.empty_correspondences", "similarity matrix has no nonzero cell to match");
    }
    const auto take = std::min(n_c, cells.size());
    std::partial_sort(cells.begin(), cells.begin() + static_cast<std::ptrdiff_t>(take), cells.end(),
                      [](const Correspondence& a, const Correspondence& b) {
                          if (a.weight != b.weight) return a.weight > b.weight;
                          if (a.source != b.source) return a.source < b.source;
                          return a.target < b.target;
                      });
    cells.resize(take);
    return cells;
}

MatchResult forward(const ObjectSet& source, const ObjectSet& target, const MatchParams& params,
                    const NetConfig& cfg, std::size_t n_c) {
    ad::Graph g;
    const BoundParams p(g, params, false);
    const auto h = hybrid_features(g, p, source, target, cfg);
    MatchResult r;
    r.h_source = h.source.value();
    r.h_target = h.target.value();
    r.scores = mask_semantic(similarity(r.h_source, r.h_target, cfg.normalize_features), source.classes(),
                             target.classes());
    r.correspondences = topk_correspondences(r.scores, n_c);
    return r;
}

CorrespondenceSet nearest_by_class(const ObjectSet& source, const ObjectSet& target) {
    CorrespondenceSet out;
    for (std::size_t i = 0; i < source.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < target.size(); ++j) {
            if (target.cls(j) != source.cls(i)) continue;
            const double d = (target.centroid(j) - source.centroid(i)).squaredNorm();
            if (d < best) {
                best = d;
                best_j = j;
            }
        }
        if (std::isfinite(best)) out.push_back({i, best_j, 1.0});
    }
    return out;
}

}  // namespace colm::net
