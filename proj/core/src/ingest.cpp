#include "colm/ingest.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "colm/classes.hpp"
#include "colm/codec.hpp"
#include "colm/error.hpp"

namespace colm::ingest {
namespace {

std::uint32_t le_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_le_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

PointCloud read_point_bin(const std::filesystem::path& path) {
    const auto bytes = codec::read_file(path);
    if (bytes.size() % 16 != 0) {
        std::ostringstream msg;
        msg << path.string() << ": length " << bytes.size() << " is not a multiple of 16";
        throw InputError("ingest.length_mismatch", msg.str());
    }
    PointCloud cloud;
    cloud.points.reserve(bytes.size() / 16);
    for (std::size_t off = 0; off < bytes.size(); off += 16) {
        Vec3 p;
        for (int k = 0; k < 3; ++k) {
            p[k] = static_cast<double>(std::bit_cast<float>(le_u32(bytes.data() + off + 4 * k)));
        }
        if (!p.allFinite()) throw InputError("ingest.non_finite", path.string() + ": non-finite coordinate");
        cloud.points.push_back(p);
    }
    return cloud;
}

void write_point_bin(const std::filesystem::path& path, const PointCloud& cloud) {
    std::vector<std::uint8_t> out;
    out.reserve(cloud.size() * 16);
    for (const auto& p : cloud.points) {
        for (int k = 0; k < 3; ++k) put_le_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(p[k])));
        put_le_u32(out, 0);
    }
    codec::write_file(path, out);
}

std::vector<std::uint32_t> read_labels(const std::filesystem::path& path, std::size_t point_count) {
    const auto bytes = codec::read_file(path);
    if (bytes.size() != 4 * point_count) {
        std::ostringstream msg;
        msg << path.string() << ": holds " << bytes.size() / 4 << " labels (" << bytes.size()
            << " bytes) but the scan has " << point_count << " points";
        throw InputError("ingest.count_mismatch", msg.str());
    }
    std::vector<std::uint32_t> labels(point_count);
    for (std::size_t i = 0; i < point_count; ++i) labels[i] = le_u32(bytes.data() + 4 * i) & 0xffffu;
    return labels;
}

void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& raw) {
    std::vector<std::uint8_t> out;
    out.reserve(raw.size() * 4);
    for (auto v : raw) put_le_u32(out, v);
    codec::write_file(path, out);
}

ClassMap ClassMap::parse(const std::string& text) {
    ClassMap m;
    std::map<std::string, std::uint32_t> by_name;
    for (std::size_t c = 0; c < kNumStaticClasses; ++c) by_name.emplace(std::string(kStaticClassNames[c]), c);
    std::uint32_t next = kNumStaticClasses;

    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        std::uint32_t id = 0;
        std::string name;
        try {
            if (eq == std::string::npos) throw std::invalid_argument("no '='");
            std::size_t used = 0;
            const auto key = trim(line.substr(0, eq));
            const unsigned long v = std::stoul(key, &used);
            if (used != key.size() || v > 0xffffu) throw std::invalid_argument("bad id");
            id = static_cast<std::uint32_t>(v);
            name = trim(line.substr(eq + 1));
            if (name.empty()) throw std::invalid_argument("empty name");
        } catch (const std::exception&) {
            std::ostringstream msg;
            msg << "class map line " << lineno << ": expected `id = name`, got `" << line << "`";
            throw InputError("ingest.class_map", msg.str());
        }
        auto [it, inserted] = by_name.emplace(name, next);
        if (inserted) ++next;
        if (it->second >= kUnmapped) throw InputError("ingest.class_map", "too many distinct class names");
        m.names_[id] = name;
        m.internal_[id] = it->second;
    }
    return m;
}

ClassMap ClassMap::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("io.unreadable", "cannot read class map: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

ClassMap ClassMap::semantic_kitti() {
    return parse(
        "0 = unlabeled\n1 = outlier\n10 = car\n11 = bicycle\n13 = bus\n15 = motorcycle\n16 = on-rails\n"
        "18 = truck\n20 = other-vehicle\n30 = person\n31 = bicyclist\n32 = motorcyclist\n40 = road\n"
        "44 = parking\n48 = sidewalk\n49 = other-ground\n50 = building\n51 = fence\n52 = other-structure\n"
        "60 = lane-marking\n70 = vegetation\n71 = trunk\n72 = terrain\n80 = pole\n81 = traffic-sign\n"
        "99 = other-object\n252 = moving-car\n253 = moving-bicyclist\n254 = moving-person\n"
        "255 = moving-motorcyclist\n256 = moving-on-rails\n257 = moving-bus\n258 = moving-truck\n"
        "259 = moving-other-vehicle\n");
}

std::uint32_t ClassMap::internal_id(std::uint32_t dataset_id) const {
    auto it = internal_.find(dataset_id);
    return it == internal_.end() ? kUnmapped : it->second;
}

std::vector<std::uint32_t> ClassMap::remap(const std::vector<std::uint32_t>& dataset_labels) const {
    std::vector<std::uint32_t> out(dataset_labels.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = internal_id(dataset_labels[i]);
    return out;
}

void PoseTrack::validate() const {
    if (frames.size() != poses.size()) throw InputError("ingest.pose_track", "frame and pose counts differ");
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i] <= frames[i - 1]) throw InputError("ingest.pose_track", "frame indices must increase");
    }
}

PoseTrack read_pose_track(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("io.unreadable", "cannot read pose file: " + path.string());
    PoseTrack track;
    std::string line;
    std::size_t lineno = 0, row = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::vector<double> v;
        double x;
        while (ls >> x) v.push_back(x);
        if (v.empty()) continue;
        if (!ls.eof() || (v.size() != 12 && v.size() != 13)) {
            std::ostringstream msg;
            msg << path.string() << ":" << lineno << ": expected 12 or 13 numbers";
            throw InputError("ingest.pose_format", msg.str());
        }
        std::size_t frame = row;
        if (v.size() == 13) {
            frame = static_cast<std::size_t>(v.front());
            v.erase(v.begin());
        }
        Mat3 r;
        r << v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10];
        track.frames.push_back(frame);
        track.poses.emplace_back(orthonormalize(r), Vec3(v[3], v[7], v[11]));
        ++row;
    }
    track.validate();
    return track;
}

std::vector<std::pair<std::size_t, std::size_t>> select_pairs(const PoseTrack& a, const PoseTrack* b,
                                                              double max_dist, std::size_t min_gap) {
    a.validate();
    const bool same = b == nullptr || b == &a;
    const PoseTrack& other = same ? a : *b;
    other.validate();
    const double d2 = max_dist * max_dist;
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < a.frames.size(); ++i) {
        for (std::size_t j = same ? i + 1 : 0; j < other.frames.size(); ++j) {
            if (same && other.frames[j] - a.frames[i] < min_gap) continue;
            if ((a.poses[i].translation() - other.poses[j].translation()).squaredNorm() < d2) {
                out.emplace_back(a.frames[i], other.frames[j]);
            }
        }
    }
    return out;
}

}  // namespace colm::ingest
