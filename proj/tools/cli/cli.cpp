#include "cli.hpp"

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <limits>
#include <sstream>
#include <thread>

#include "colm/codec.hpp"
#include "colm/error.hpp"
#include "colm/extract.hpp"
#include "colm/ingest.hpp"
#include "colm/synth.hpp"
#include "colm/train.hpp"

#ifndef COLM_VERSION
#define COLM_VERSION "unknown"
#endif

namespace colm::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fmt(double v, int digits = 9) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(line);
    while (std::getline(in, cur, sep)) out.push_back(cur);
    if (!line.empty() && line.back() == sep) out.emplace_back();
    return out;
}

std::string trim(std::string s) {
    const auto ws = " \t\r\n";
    s.erase(0, s.find_first_not_of(ws));
    s.erase(s.find_last_not_of(ws) + 1);
    return s;
}

// Text round-trips lose a few ulps, so the rotation is re-projected first.
RigidTransform from_values(std::span<const double> v) {
    Mat3 r;
    r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
    if (!r.allFinite()) throw InputError("cli.parse", "ground truth has non-finite entries");
    return {orthonormalize(r), Vec3(v[3], v[7], v[11])};
}

double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw InputError("cli.parse", "cannot parse " + what + " value '" + s + "'");
    }
}

class Logger {
public:
    explicit Logger(std::ostream& err) : err_(err), level_(log_level()) {}

    void warn(const std::string& m) const { emit(LogLevel::Warn, "warning", m); }
    void info(const std::string& m) const { emit(LogLevel::Info, "info", m); }
    void debug(const std::string& m) const { emit(LogLevel::Debug, "debug", m); }

private:
    void emit(LogLevel l, const char* tag, const std::string& m) const {
        if (static_cast<int>(l) <= static_cast<int>(level_)) err_ << "colm: " << tag << ": " << m << "\n";
    }

    std::ostream& err_;
    LogLevel level_;
};

std::string sha1_file(const fs::path& p) {
    const auto bytes = codec::read_file(p);
    return git_blob_sha1(bytes);
}

// Serialised next to every output. Only inputs and settings go in, so two
// runs with identical inputs produce identical manifests.
struct Manifest {
    ordered_json doc;

    explicit Manifest(const std::string& command) {
        doc["tool"] = "colm";
        doc["version"] = COLM_VERSION;
        doc["command"] = command;
        doc["config"] = ordered_json::object();
        doc["seeds"] = ordered_json::object();
        doc["inputs"] = ordered_json::array();
        doc["params_sha1"] = nullptr;
    }

    void input(const fs::path& p) {
        doc["inputs"].push_back({{"path", p.generic_string()}, {"sha1", sha1_file(p)}});
    }

    void write(const fs::path& path) const {
        const std::string text = doc.dump(2) + "\n";
        codec::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
    }
};

void write_text(const fs::path& path, const std::string& text) {
    codec::write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

const std::map<std::string, Solver> kSolvers = {{"svd", Solver::Svd}, {"ransac", Solver::Ransac}};
const std::map<std::string, Matcher> kMatchers = {
    {"net", Matcher::Net}, {"oracle", Matcher::Oracle}, {"nn", Matcher::Nearest}};

std::string solver_name(Solver s) { return s == Solver::Svd ? "svd" : "ransac"; }

std::size_t effective_nc(const RegisterOptions& o) {
    if (o.n_c > 0) return o.n_c;
    return o.solver == Solver::Svd ? 15 : 60;
}

struct Matching {
    std::string matcher = "net";
    std::string solver = "ransac";
    std::size_t n_c = 0;
    bool icp = false;
    double oracle_tol = 1.0;
    std::uint64_t seed = 0;
    std::string checkpoint;

    void add(CLI::App* app) {
        app->add_option("--matcher", matcher, "Correspondence source")
            ->transform(CLI::IsMember(kMatchers))
            ->capture_default_str();
        app->add_option("--solver", solver, "Pose solver")->transform(CLI::IsMember(kSolvers))->capture_default_str();
        app->add_option("--nc", n_c, "Correspondences kept (0: 15 for svd, 60 for ransac)")->capture_default_str();
        app->add_flag("--icp", icp, "Refine with centroid ICP");
        app->add_option("--oracle-tol", oracle_tol, "Oracle matcher tolerance, metres")->capture_default_str();
        app->add_option("--seed", seed, "RANSAC seed")->capture_default_str();
        app->add_option("--checkpoint", checkpoint, "Network weights (net matcher)");
    }

    RegisterOptions options() const {
        RegisterOptions o;
        o.matcher = kMatchers.at(matcher);
        o.solver = kSolvers.at(solver);
        o.n_c = n_c;
        o.icp = icp;
        o.oracle_tolerance = oracle_tol;
        o.seed = seed;
        return o;
    }

    void describe(ordered_json& cfg) const {
        cfg["matcher"] = matcher;
        cfg["solver"] = solver;
        cfg["nc"] = effective_nc(options());
        cfg["icp"] = icp;
        if (matcher == "oracle") cfg["oracle_tol"] = oracle_tol;
    }
};

struct Network {
    std::optional<net::NetConfig> cfg;
    net::MatchParams params;
};

Network load_network(const Matching& m, Manifest* manifest) {
    Network n;
    if (m.matcher != "net") return n;
    if (m.checkpoint.empty()) throw InputError("cli.missing_checkpoint", "--checkpoint is required with --matcher net");
    auto [cfg, params] = net::load_checkpoint(m.checkpoint);
    n.cfg = cfg;
    n.params = std::move(params);
    if (manifest != nullptr) manifest->doc["params_sha1"] = sha1_file(m.checkpoint);
    return n;
}

ObjectSet read_cor(const fs::path& p) { return codec::decode_scan(codec::read_file(p)); }

std::string transform_line(const RigidTransform& t) {
    std::string s;
    for (double v : t.row_major()) {
        if (!s.empty()) s += ' ';
        s += fmt(v, 12);
    }
    return s;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
    std::vector<std::string> scans, labels;
    std::string classes, out = ".";
    ExtractConfig cfg;
};

int cmd_extract(const ExtractArgs& a, std::ostream& out, const Logger& log) {
    if (a.scans.size() != a.labels.size()) {
        throw InputError("cli.arguments", "got " + std::to_string(a.scans.size()) + " scans but " +
                                              std::to_string(a.labels.size()) + " label files");
    }
    const auto cmap = a.classes.empty() ? ingest::ClassMap::semantic_kitti() : ingest::ClassMap::load(a.classes);
    fs::create_directories(a.out);
    Manifest manifest("extract");
    manifest.doc["config"] = {{"eps", a.cfg.eps}, {"min_pts", a.cfg.min_pts}, {"max_points", a.cfg.max_points}};
    manifest.doc["seeds"] = {{"subsample", a.cfg.seed}};
    if (!a.classes.empty()) manifest.input(a.classes);
    for (std::size_t k = 0; k < a.scans.size(); ++k) {
        const fs::path scan_path = a.scans[k], label_path = a.labels[k];
        auto cloud = ingest::read_point_bin(scan_path);
        const auto raw = ingest::read_labels(label_path, cloud.size());
        const LabeledPointCloud scan(std::move(cloud), cmap.remap(raw));
        const auto objects = extract_objects(scan, a.cfg);
        const auto bytes = codec::encode_scan(objects);
        const auto dst = fs::path(a.out) / (scan_path.stem().string() + ".cor");
        codec::write_file(dst, bytes);
        manifest.input(scan_path);
        manifest.input(label_path);
        if (objects.empty()) log.warn(scan_path.string() + ": no static objects found");
        out << dst.generic_string() << ": " << objects.size() << " objects, " << bytes.size() << " bytes\n";
    }
    manifest.write(fs::path(a.out) / "extract_manifest.json");
    return kOk;
}

// ---------------------------------------------------------------- register

struct RegisterArgs {
    std::string source, target, out;
    std::vector<double> gt;
    Matching m;
};

int cmd_register(const RegisterArgs& a, std::ostream& out, const Logger& log) {
    Manifest manifest("register");
    const auto source = read_cor(a.source);
    const auto target = read_cor(a.target);
    manifest.input(a.source);
    manifest.input(a.target);
    std::optional<RigidTransform> truth;
    if (!a.gt.empty()) truth = from_values(a.gt);
    const auto network = load_network(a.m, &manifest);
    const auto opts = a.m.options();
    a.m.describe(manifest.doc["config"]);
    manifest.doc["seeds"] = {{"ransac", opts.seed}};
    log.info("registering " + std::to_string(source.size()) + " vs " + std::to_string(target.size()) + " objects");

    const auto t0 = std::chrono::steady_clock::now();
    const auto r = register_pair(source, target, opts, network.cfg ? &network.params : nullptr,
                                 network.cfg ? &*network.cfg : nullptr, truth);
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

    out << "transform: " << transform_line(r.transform) << "\n";
    out << "solver: " << r.tag() << ", inliers: " << r.inliers.size() << "\n";
    if (truth) {
        const auto e = pose_error(r.transform, *truth);
        out << "rte_m: " << fmt(e.rte_m) << ", rre_deg: " << fmt(rad2deg(e.rre_rad)) << "\n";
    }
    out << "wall_ms: " << fmt(ms, 4) << "\n";
    if (!a.out.empty()) {
        fs::create_directories(a.out);
        ordered_json res;
        res["transform"] = r.transform.row_major();
        res["solver"] = r.tag();
        res["inliers"] = r.inliers.size();
        write_text(fs::path(a.out) / "register.json", res.dump(2) + "\n");
        manifest.write(fs::path(a.out) / "register_manifest.json");
    }
    return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string pairs, map_dir, query_dir, out = ".";
    double tau_t = 2.0, tau_r = 5.0;
    std::size_t jobs = 1;
    Matching m;
};

struct EvalRow {
    bool ok = false;
    PoseError err;
    double ms = 0.0;
    std::string failure;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, const Logger& log) {
    auto pairs = read_pair_list(a.pairs);
    if (pairs.empty()) throw InputError("cli.empty_pair_list", a.pairs + ": pair list is empty");
    const fs::path base = fs::path(a.pairs).parent_path();
    const fs::path map_dir = a.map_dir.empty() ? base : fs::path(a.map_dir);
    const fs::path query_dir = a.query_dir.empty() ? base : fs::path(a.query_dir);
    for (auto& p : pairs) {
        if (!p.truth) throw InputError("cli.missing_ground_truth", "pair " + p.id + " has no ground-truth columns");
        if (p.source.is_relative()) p.source = map_dir / p.source;
        if (p.target.is_relative()) p.target = query_dir / p.target;
    }

    Manifest manifest("eval");
    manifest.input(a.pairs);
    const auto network = load_network(a.m, &manifest);
    const auto opts = a.m.options();
    auto& cfg = manifest.doc["config"];
    a.m.describe(cfg);
    cfg["tau_t"] = a.tau_t;
    cfg["tau_r"] = a.tau_r;
    manifest.doc["seeds"] = {{"ransac", opts.seed}};

    std::vector<ObjectSet> sources(pairs.size()), targets(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        sources[k] = read_cor(pairs[k].source);
        targets[k] = read_cor(pairs[k].target);
        manifest.input(pairs[k].source);
        manifest.input(pairs[k].target);
    }

    std::vector<EvalRow> rows(pairs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < pairs.size();) {
            auto& row = rows[k];
            const auto t0 = std::chrono::steady_clock::now();
            try {
                const auto r = register_pair(sources[k], targets[k], opts, network.cfg ? &network.params : nullptr,
                                             network.cfg ? &*network.cfg : nullptr, pairs[k].truth);
                row.err = pose_error(r.transform, *pairs[k].truth);
                row.ok = true;
            } catch (const NoSolutionError& e) {
                row.failure = e.code();
            }
            row.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(a.jobs, pairs.size()));
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < jobs; ++w) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    std::ostringstream csv;
    csv << "pair_id,solver,rte_m,rre_deg,success_03_1,success_05_5,wall_ms\n";
    std::vector<PoseError> errors;
    std::size_t failures = 0;
    const double inf = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto& r = rows[k];
        const std::string tag = solver_name(opts.solver) + (opts.icp ? "+icp" : "");
        if (r.ok) {
            const double deg = rad2deg(r.err.rre_rad);
            csv << pairs[k].id << ',' << tag << ',' << fmt(r.err.rte_m) << ',' << fmt(deg) << ','
                << succeeded(r.err, 0.3, 1.0) << ',' << succeeded(r.err, 0.5, 5.0) << ',' << fmt(r.ms, 4) << '\n';
            errors.push_back(r.err);
        } else {
            ++failures;
            log.warn("pair " + pairs[k].id + " failed: " + r.failure);
            csv << pairs[k].id << ',' << tag << ",nan,nan,0,0," << fmt(r.ms, 4) << '\n';
            errors.push_back({inf, inf});
        }
    }

    struct Threshold {
        double t, r;
    };
    const std::vector<Threshold> thresholds = {{0.3, 1.0}, {0.5, 5.0}, {a.tau_t, a.tau_r}};
    std::ostringstream summary;
    summary << "tau_t_m,tau_r_deg,recall,successes,pairs,mean_rte_m,mean_rre_deg\n";
    out << "pairs: " << pairs.size() << ", failures: " << failures << "\n";
    for (const auto& th : thresholds) {
        const auto s = registration_recall(errors, th.t, th.r);
        summary << fmt(th.t) << ',' << fmt(th.r) << ',' << fmt(s.recall) << ',' << s.successes << ','
                << pairs.size() << ',' << fmt(s.mean_rte_m) << ',' << fmt(s.mean_rre_deg) << '\n';
        out << fmt(th.t) << " m / " << fmt(th.r) << " deg: recall " << fmt(s.recall, 4) << ", mean RTE "
            << fmt(s.mean_rte_m, 4) << " m, mean RRE " << fmt(s.mean_rre_deg, 4) << " deg\n";
    }
    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "results.csv", csv.str());
    write_text(fs::path(a.out) / "summary.csv", summary.str());
    manifest.write(fs::path(a.out) / "eval_manifest.json");
    return kOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    std::size_t pairs = 200, val_pairs = 100;
    std::size_t objects = 30;
    double extent = 30.0;
    double drop = 0.2, jitter = 0.05, max_yaw_deg = 360.0, max_translation = 3.0;
    std::size_t width = 16, blocks = 2;
    double coord_scale = 0.0;
    train::TrainConfig tc;
    double aug_yaw_deg = 360.0;
    std::string out = ".";
};

int cmd_train(TrainArgs a, std::ostream& out, const Logger& log) {
    synth::SceneConfig sc;
    sc.min_objects = sc.max_objects = a.objects;
    sc.extent_xy = a.extent;
    sc.seed = a.tc.seed;
    synth::PerturbConfig pc;
    pc.drop_rate = a.drop;
    pc.jitter = a.jitter;
    pc.max_yaw = deg2rad(a.max_yaw_deg);
    pc.max_translation = a.max_translation;
    pc.extent_xy = a.extent;
    auto ncfg = net::NetConfig::toy(a.width, a.blocks);
    ncfg.coord_scale = a.coord_scale;
    a.tc.max_yaw = deg2rad(a.aug_yaw_deg);
    const loss::LossConfig lcfg;

    const auto train_set = train::synthetic_pairs(sc, pc, a.pairs, 0);
    const auto val_set = train::synthetic_pairs(sc, pc, a.val_pairs, a.pairs);

    Manifest manifest("train");
    manifest.doc["config"] = {{"pairs", a.pairs},
                              {"val_pairs", a.val_pairs},
                              {"objects", a.objects},
                              {"extent_m", a.extent},
                              {"drop", a.drop},
                              {"jitter_m", a.jitter},
                              {"max_yaw_deg", a.max_yaw_deg},
                              {"max_translation_m", a.max_translation},
                              {"net", ordered_json::parse(ncfg.to_json())},
                              {"epochs", a.tc.epochs},
                              {"batch", a.tc.batch_size},
                              {"lr", a.tc.lr},
                              {"patience", a.tc.patience},
                              {"aug_yaw_deg", a.aug_yaw_deg},
                              {"aug_jitter_m", a.tc.jitter}};
    manifest.doc["seeds"] = {{"scenes", sc.seed}, {"init", a.tc.seed}, {"shuffle", a.tc.seed}};

    fs::create_directories(a.out);
    std::ostringstream curve;
    curve << "epoch,lr,train_loss,val_precision,wall_s\n";
    auto on_epoch = [&](const train::EpochRecord& r) {
        curve << r.epoch << ',' << fmt(r.lr) << ',' << fmt(r.train_loss, 12) << ',' << fmt(r.val_precision) << ','
              << fmt(r.wall_s, 4) << '\n';
        log.info("epoch " + std::to_string(r.epoch) + " loss " + fmt(r.train_loss, 6) + " precision " +
                 fmt(r.val_precision, 4));
    };
    train::TrainResult result;
    try {
        result = train::train_toy(train_set, val_set, net::init_params(ncfg, a.tc.seed), ncfg, a.tc, lcfg, on_epoch);
    } catch (const DivergenceError&) {
        write_text(fs::path(a.out) / "curve.csv", curve.str());
        throw;
    }
    const auto ckpt = fs::path(a.out) / "checkpoint.colw";
    net::save_checkpoint(ckpt, ncfg, result.params);
    write_text(fs::path(a.out) / "curve.csv", curve.str());
    manifest.doc["params_sha1"] = sha1_file(ckpt);
    manifest.write(fs::path(a.out) / "train_manifest.json");
    const auto& first = result.curve.front();
    const auto& last = result.curve.back();
    out << "epochs: " << last.epoch << ", loss " << fmt(first.train_loss, 6) << " -> " << fmt(last.train_loss, 6)
        << ", val precision " << fmt(last.val_precision, 4) << "\n";
    out << "checkpoint: " << ckpt.generic_string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------- report / pack

int cmd_report(const std::string& path, std::optional<std::size_t> raw_points, std::ostream& out) {
    const auto map = codec::decode_map(codec::read_file(path));
    const auto s = codec::storage_report(map, raw_points);
    out << "scans: " << s.scans << "\n";
    out << "total_bytes: " << s.total_bytes << "\n";
    out << "record_bytes_mean: " << fmt(s.record_bytes_mean, 6) << "\n";
    out << "payload_bytes_mean: " << fmt(s.payload_bytes_mean, 6) << "\n";
    out << "objects_mean: " << fmt(s.objects_mean, 6) << "\n";
    out << "objects_max: " << s.objects_max << "\n";
    if (s.compression_ratio) out << "compression_ratio: " << fmt(*s.compression_ratio, 6) << "\n";
    return kOk;
}

int cmd_pack(const std::vector<std::string>& scans, const std::string& poses, const std::string& dst,
             std::ostream& out) {
    codec::MapFile map;
    std::optional<ingest::PoseTrack> track;
    if (!poses.empty()) {
        track = ingest::read_pose_track(poses);
        if (track->poses.size() != scans.size()) {
            throw InputError("cli.arguments", poses + ": " + std::to_string(track->poses.size()) + " poses for " +
                                                  std::to_string(scans.size()) + " scans");
        }
    }
    for (std::size_t k = 0; k < scans.size(); ++k) {
        codec::MapEntry e;
        e.scan_id = static_cast<std::uint32_t>(track ? track->frames[k] : k);
        e.pose = track ? track->poses[k] : RigidTransform{};
        e.objects = read_cor(scans[k]);
        map.entries.push_back(std::move(e));
    }
    const auto bytes = codec::encode_map(map);
    codec::write_file(dst, bytes);
    out << dst << ": " << map.entries.size() << " scans, " << bytes.size() << " bytes\n";
    return kOk;
}

// ---------------------------------------------------------------- synth / pairs

struct SynthArgs {
    std::size_t count = 10;
    std::size_t min_objects = 60, max_objects = 240;
    double extent = 60.0, spacing = 2.0;
    double max_yaw_deg = 360.0, min_translation = 0.0, max_translation = 3.0;
    double jitter = 0.0, drop = 0.0, insert = 0.0, flip = 0.0;
    std::uint64_t seed = 0;
    std::string out = ".";
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
    synth::SceneConfig sc;
    sc.min_objects = a.min_objects;
    sc.max_objects = a.max_objects;
    sc.extent_xy = a.extent;
    sc.min_spacing = a.spacing;
    sc.seed = a.seed;
    synth::PerturbConfig pc;
    pc.max_yaw = deg2rad(a.max_yaw_deg);
    pc.min_translation = a.min_translation;
    pc.max_translation = a.max_translation;
    pc.jitter = a.jitter;
    pc.drop_rate = a.drop;
    pc.insert_rate = a.insert;
    pc.flip_rate = a.flip;
    pc.extent_xy = a.extent;
    sc.validate();
    pc.validate();
    fs::create_directories(a.out);
    std::vector<PairSpec> specs;
    for (std::size_t k = 0; k < a.count; ++k) {
        const auto p = synth::make_pair(sc, pc, k);
        char name[32];
        std::snprintf(name, sizeof name, "%06zu", k);
        PairSpec s{name, std::string("src_") + name + ".cor", std::string("dst_") + name + ".cor", p.t_gt};
        codec::write_file(fs::path(a.out) / s.source, codec::encode_scan(p.source));
        codec::write_file(fs::path(a.out) / s.target, codec::encode_scan(p.target));
        specs.push_back(std::move(s));
    }
    write_pair_list(fs::path(a.out) / "pairs.csv", specs);
    out << a.count << " pairs written to " << a.out << "\n";
    return kOk;
}

int cmd_pairs(const std::string& a, const std::string& b, double max_dist, std::size_t min_gap, std::ostream& out) {
    const auto ta = ingest::read_pose_track(a);
    std::optional<ingest::PoseTrack> tb;
    if (!b.empty()) tb = ingest::read_pose_track(b);
    const auto pairs = ingest::select_pairs(ta, tb ? &*tb : nullptr, max_dist, min_gap);
    out << "frame_a,frame_b\n";
    for (const auto& [i, j] : pairs) out << i << ',' << j << '\n';
    return kOk;
}

}  // namespace

LogLevel log_level() {
    const char* v = std::getenv("COLM_LOG");
    if (v == nullptr) return LogLevel::Warn;
    const std::string s = v;
    if (s == "error") return LogLevel::Error;
    if (s == "info") return LogLevel::Info;
    if (s == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

std::string git_blob_sha1(std::span<const std::uint8_t> data) {
    const std::string header = "blob " + std::to_string(data.size()) + '\0';
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
    EVP_DigestUpdate(ctx, header.data(), header.size());
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

std::vector<PairSpec> read_pair_list(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cli.unreadable", path.string() + ": cannot open pair list");
    std::string line;
    if (!std::getline(in, line)) return {};
    const auto header = split(trim(line), ',');
    const bool with_gt = header.size() == 15;
    if ((header.size() != 3 && !with_gt) || header[0] != "pair_id" || header[1] != "source" ||
        header[2] != "target") {
        throw InputError("cli.pair_list", path.string() + ": expected header pair_id,source,target[,gt_00..gt_11]");
    }
    std::vector<PairSpec> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        line = trim(line);
        if (line.empty()) continue;
        const auto f = split(line, ',');
        if (f.size() != header.size()) {
            throw InputError("cli.pair_list", path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                  std::to_string(header.size()) + " fields, got " +
                                                  std::to_string(f.size()));
        }
        PairSpec s{trim(f[0]), trim(f[1]), trim(f[2]), std::nullopt};
        if (with_gt) {
            std::array<double, 12> v{};
            for (std::size_t k = 0; k < 12; ++k) v[k] = parse_double(trim(f[3 + k]), "gt");
            s.truth = from_values(v);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void write_pair_list(const fs::path& path, std::span<const PairSpec> pairs) {
    const bool with_gt = !pairs.empty() && std::all_of(pairs.begin(), pairs.end(), [](const auto& p) {
        return p.truth.has_value();
    });
    std::ostringstream os;
    os << "pair_id,source,target";
    if (with_gt) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 4; ++c) os << ",gt_" << r << c;
    }
    os << '\n';
    for (const auto& p : pairs) {
        os << p.id << ',' << p.source.generic_string() << ',' << p.target.generic_string();
        if (with_gt) {
            for (double v : p.truth->row_major()) os << ',' << fmt(v, 17);
        }
        os << '\n';
    }
    write_text(path, os.str());
}

RegistrationResult register_pair(const ObjectSet& source, const ObjectSet& target, const RegisterOptions& opts,
                                 const net::MatchParams* params, const net::NetConfig* cfg,
                                 const std::optional<RigidTransform>& truth) {
    CorrespondenceSet corr;
    switch (opts.matcher) {
        case Matcher::Net:
            if (params == nullptr || cfg == nullptr) {
                throw InputError("cli.missing_checkpoint", "the network matcher needs parameters");
            }
            corr = net::forward(source, target, *params, *cfg, effective_nc(opts)).correspondences;
            break;
        case Matcher::Oracle:
            if (!truth) throw InputError("cli.missing_ground_truth", "the oracle matcher needs ground truth");
            corr = synth::gt_correspondences(source, target, *truth, opts.oracle_tolerance);
            break;
        case Matcher::Nearest:
            corr = net::nearest_by_class(source, target);
            break;
    }
    if (corr.empty()) throw NoSolutionError("net.empty_correspondences", "no correspondences between the scans");

    RegistrationResult r;
    if (opts.solver == Solver::Svd) {
        r = svd_register(corr, source, target);
    } else {
        RansacConfig rc;
        rc.seed = opts.seed;
        r = ransac_register(corr, source, target, rc);
    }
    if (opts.icp) {
        const auto refined = icp_refine(source, target, r.transform, IcpConfig{});
        r.transform = refined.transform;
        r.refined = true;
    }
    return r;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Object-level LiDAR scan registration"};
    app.name("colm");
    app.set_version_flag("--version", COLM_VERSION);
    app.require_subcommand(1);
    const Logger log(err);

    ExtractArgs ex;
    auto* extract = app.add_subcommand("extract", "Cluster labelled scans into compact object records");
    extract->add_option("--scan", ex.scans, "Point file (x, y, z, intensity float32)")->required();
    extract->add_option("--labels", ex.labels, "Label file (u32 per point)")->required();
    extract->add_option("--classes", ex.classes, "Class map file (id = name lines)");
    extract->add_option("--eps", ex.cfg.eps, "Cluster radius, metres")->capture_default_str();
    extract->add_option("--min-pts", ex.cfg.min_pts, "Core point threshold")->capture_default_str();
    extract->add_option("--max-points", ex.cfg.max_points, "Subsample cap (0 disables)")->capture_default_str();
    extract->add_option("--seed", ex.cfg.seed, "Subsampling seed")->capture_default_str();
    extract->add_option("--out", ex.out, "Output directory")->capture_default_str();

    RegisterArgs rg;
    auto* reg = app.add_subcommand("register", "Estimate the transform mapping one scan onto another");
    reg->add_option("source", rg.source, "Source .cor")->required();
    reg->add_option("target", rg.target, "Target .cor")->required();
    reg->add_option("--gt", rg.gt, "Ground truth, 12 row-major [R|t] values")->expected(12);
    reg->add_option("--out", rg.out, "Directory for the result and manifest");
    rg.m.add(reg);

    EvalArgs ev;
    auto* eval = app.add_subcommand("eval", "Register every pair of a pair list and score it");
    eval->add_option("pairs", ev.pairs, "Pair list CSV")->required();
    eval->add_option("--map-dir", ev.map_dir, "Directory for relative source paths");
    eval->add_option("--query-dir", ev.query_dir, "Directory for relative target paths");
    eval->add_option("--tau-t", ev.tau_t, "Extra threshold, metres")->capture_default_str();
    eval->add_option("--tau-r", ev.tau_r, "Extra threshold, degrees")->capture_default_str();
    eval->add_option("--jobs", ev.jobs, "Worker threads")->capture_default_str();
    eval->add_option("--out", ev.out, "Output directory")->capture_default_str();
    ev.m.add(eval);

    TrainArgs tr;
    tr.tc.epochs = 30;
    tr.tc.batch_size = 4;
    tr.tc.lr = 1e-3;
    auto* trn = app.add_subcommand("train", "Train a toy matcher on synthetic pairs");
    trn->add_option("--pairs", tr.pairs, "Training pairs")->capture_default_str();
    trn->add_option("--val-pairs", tr.val_pairs, "Validation pairs")->capture_default_str();
    trn->add_option("--objects", tr.objects, "Objects per scene")->capture_default_str();
    trn->add_option("--extent", tr.extent, "Scene half-width, metres")->capture_default_str();
    trn->add_option("--drop", tr.drop, "Object drop rate")->capture_default_str();
    trn->add_option("--jitter", tr.jitter, "Centroid noise sigma, metres")->capture_default_str();
    trn->add_option("--max-yaw", tr.max_yaw_deg, "Pair yaw range, degrees")->capture_default_str();
    trn->add_option("--max-translation", tr.max_translation, "Pair translation, metres")->capture_default_str();
    trn->add_option("--width", tr.width, "Toy network width")->capture_default_str();
    trn->add_option("--blocks", tr.blocks, "Attention blocks")->capture_default_str();
    trn->add_option("--coord-scale", tr.coord_scale, "Centroid scale before edge convolution")
        ->capture_default_str();
    trn->add_option("--epochs", tr.tc.epochs, "Epochs")->capture_default_str();
    trn->add_option("--batch", tr.tc.batch_size, "Batch size")->capture_default_str();
    trn->add_option("--lr", tr.tc.lr, "Initial learning rate")->capture_default_str();
    trn->add_option("--patience", tr.tc.patience, "Plateau epochs before halving the rate")->capture_default_str();
    trn->add_option("--aug-yaw", tr.aug_yaw_deg, "Augmentation yaw range, degrees")->capture_default_str();
    trn->add_option("--aug-jitter", tr.tc.jitter, "Augmentation noise, metres")->capture_default_str();
    trn->add_option("--seed", tr.tc.seed, "Seed for scenes, init and shuffling")->capture_default_str();
    trn->add_option("--jobs", tr.tc.jobs, "Worker threads per batch")->capture_default_str();
    trn->add_option("--out", tr.out, "Output directory")->capture_default_str();

    std::string report_path;
    std::optional<std::size_t> raw_points;
    auto* report = app.add_subcommand("report", "Storage statistics of a map file");
    report->add_option("map", report_path, "Map file")->required();
    report->add_option("--points-per-scan", raw_points, "Raw points per scan for the compression ratio");

    std::vector<std::string> pack_scans;
    std::string pack_poses, pack_out;
    auto* pack = app.add_subcommand("pack", "Bundle .cor records into a map file");
    pack->add_option("scans", pack_scans, "Records in scan order")->required();
    pack->add_option("--poses", pack_poses, "Pose file, one pose per record");
    pack->add_option("--out", pack_out, "Map file to write")->required();

    SynthArgs sy;
    auto* syn = app.add_subcommand("synth", "Write synthetic pairs and a pair list");
    syn->add_option("--count", sy.count, "Pairs")->capture_default_str();
    syn->add_option("--min-objects", sy.min_objects)->capture_default_str();
    syn->add_option("--max-objects", sy.max_objects)->capture_default_str();
    syn->add_option("--extent", sy.extent, "Scene half-width, metres")->capture_default_str();
    syn->add_option("--spacing", sy.spacing, "Minimum object spacing, metres")->capture_default_str();
    syn->add_option("--max-yaw", sy.max_yaw_deg, "Degrees")->capture_default_str();
    syn->add_option("--min-translation", sy.min_translation, "Metres")->capture_default_str();
    syn->add_option("--max-translation", sy.max_translation, "Metres")->capture_default_str();
    syn->add_option("--jitter", sy.jitter, "Metres")->capture_default_str();
    syn->add_option("--drop", sy.drop)->capture_default_str();
    syn->add_option("--insert", sy.insert)->capture_default_str();
    syn->add_option("--flip", sy.flip)->capture_default_str();
    syn->add_option("--seed", sy.seed)->capture_default_str();
    syn->add_option("--out", sy.out, "Output directory")->capture_default_str();

    std::string poses_a, poses_b;
    double max_dist = 3.0;
    std::size_t min_gap = 50;
    auto* prs = app.add_subcommand("pairs", "Select scan pairs from pose files");
    prs->add_option("poses", poses_a, "Pose file")->required();
    prs->add_option("--other", poses_b, "Second pose file (cross-track pairs)");
    prs->add_option("--max-dist", max_dist, "Metres")->capture_default_str();
    prs->add_option("--min-gap", min_gap, "Frames, single-track only")->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion&) {
        out << COLM_VERSION << "\n";
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "colm: " << e.what() << "\n";
        return kInputError;
    }

    try {
        if (*extract) return cmd_extract(ex, out, log);
        if (*reg) return cmd_register(rg, out, log);
        if (*eval) return cmd_eval(ev, out, log);
        if (*trn) return cmd_train(tr, out, log);
        if (*report) return cmd_report(report_path, raw_points, out);
        if (*pack) return cmd_pack(pack_scans, pack_poses, pack_out, out);
        if (*syn) return cmd_synth(sy, out);
        if (*prs) return cmd_pairs(poses_a, poses_b, max_dist, min_gap, out);
    } catch (const DivergenceError& e) {
        err << "colm: " << e.what() << " (last finite epoch " << e.last_finite_epoch() << ")\n";
        return kDivergence;
    } catch (const NoSolutionError& e) {
        err << "colm: no solution: " << e.what() << " [" << e.code() << "]\n";
        return kNoSolution;
    } catch (const InputError& e) {
        err << "colm: " << e.what() << " [" << e.code() << "]\n";
        return kInputError;
    } catch (const fs::filesystem_error& e) {
        err << "colm: " << e.what() << "\n";
        return kInputError;
    } catch (const std::exception& e) {
        err << "colm: internal error: " << e.what() << "\n";
        return 1;
    }
    return kOk;
}

}  // namespace colm::cli
