#include "colm/codec.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace colm::codec {
namespace {

std::string kind_code(CodecErrorKind kind) {
    switch (kind) {
        case CodecErrorKind::Overflow: return "codec.overflow";
        case CodecErrorKind::CorruptMagic: return "codec.corrupt_magic";
        case CodecErrorKind::VersionMismatch: return "codec.version_mismatch";
        case CodecErrorKind::Truncation: return "codec.truncation";
        case CodecErrorKind::TrailingBytes: return "codec.trailing_bytes";
        case CodecErrorKind::InvalidMap: return "codec.invalid_map";
        case CodecErrorKind::EmptyMap: return "codec.empty_map";
    }
    return "codec.unknown";
}

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(Bytes& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

void put_u64(Bytes& out, std::uint64_t v) {
    for (int s = 0; s < 64; s += 8) out.push_back(static_cast<std::uint8_t>((v >> s) & 0xff));
}

std::uint16_t get_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

std::uint64_t get_u64(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

void truncated(std::size_t expected, std::size_t actual) {
    std::ostringstream msg;
    msg << "truncated record: expected " << expected << " bytes, got " << actual;
    throw CodecError(CodecErrorKind::Truncation, msg.str());
}

}  // namespace

CodecError::CodecError(CodecErrorKind kind, const std::string& message)
    : InputError(kind_code(kind), message), kind_(kind) {}

Bytes encode_scan(const ObjectSet& objects) {
    const auto n = objects.size();
    if (n > kMaxObjects) {
        std::ostringstream msg;
        msg << "object count " << n << " exceeds the record limit of " << kMaxObjects;
        throw CodecError(CodecErrorKind::Overflow, msg.str());
    }
    Bytes out;
    out.reserve(record_size(n));
    out.insert(out.end(), kScanMagic.begin(), kScanMagic.end());
    out.push_back(kScanVersion);
    put_u16(out, static_cast<std::uint16_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        const Vec3& c = objects.centroid(i);
        for (int k = 0; k < 3; ++k) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(c[k])));
        out.push_back(objects.cls(i));
    }
    return out;
}

std::size_t decode_scan_prefix(std::span<const std::uint8_t> data, ObjectSet& out) {
    if (data.size() < 4) truncated(kHeaderBytes, data.size());
    if (!std::equal(kScanMagic.begin(), kScanMagic.end(), data.begin(),
                    [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
        throw CodecError(CodecErrorKind::CorruptMagic, "bad magic: not a compact scan record");
    }
    if (data.size() < kHeaderBytes) truncated(kHeaderBytes, data.size());
    if (data[4] != kScanVersion) {
        std::ostringstream msg;
        msg << "unsupported record version " << int{data[4]} << " (expected " << int{kScanVersion} << ")";
        throw CodecError(CodecErrorKind::VersionMismatch, msg.str());
    }
    const std::size_t n = get_u16(data.data() + 5);
    const std::size_t size = record_size(n);
    if (data.size() < size) truncated(size, data.size());

    std::vector<Vec3> centroids(n);
    std::vector<ClassId> classes(n);
    const std::uint8_t* p = data.data() + kHeaderBytes;
    for (std::size_t i = 0; i < n; ++i, p += kObjectBytes) {
        for (int k = 0; k < 3; ++k) {
            centroids[i][k] = static_cast<double>(std::bit_cast<float>(get_u32(p + 4 * k)));
        }
        classes[i] = p[12];
    }
    out = ObjectSet(std::move(centroids), std::move(classes));
    return size;
}

ObjectSet decode_scan(std::span<const std::uint8_t> data) {
    ObjectSet out;
    const auto used = decode_scan_prefix(data, out);
    if (used != data.size()) {
        std::ostringstream msg;
        msg << "record is " << used << " bytes but buffer holds " << data.size();
        throw CodecError(CodecErrorKind::TrailingBytes, msg.str());
    }
    return out;
}

ObjectSet quantize(const ObjectSet& objects) {
    // Through the byte encoding rather than static_cast<double>(static_cast<float>(x)):
    // GCC 11's SLP vectoriser folds that roundtrip away on some lanes at -O3.
    return decode_scan(encode_scan(objects));
}

void MapFile::validate() const {
    for (std::size_t i = 1; i < entries.size(); ++i) {
        if (entries[i].scan_id <= entries[i - 1].scan_id) {
            std::ostringstream msg;
            msg << "scan ids must be strictly increasing (" << entries[i - 1].scan_id << " then "
                << entries[i].scan_id << ")";
            throw CodecError(CodecErrorKind::InvalidMap, msg.str());
        }
    }
}

Bytes encode_map(const MapFile& map) {
    map.validate();
    Bytes out;
    for (const auto& e : map.entries) {
        put_u32(out, e.scan_id);
        for (double v : e.pose.row_major()) put_u64(out, std::bit_cast<std::uint64_t>(v));
        const auto rec = encode_scan(e.objects);
        out.insert(out.end(), rec.begin(), rec.end());
    }
    return out;
}

MapFile decode_map(std::span<const std::uint8_t> data) {
    MapFile map;
    std::size_t pos = 0;
    while (pos < data.size()) {
        if (data.size() - pos < kMapEntryPrefixBytes) truncated(kMapEntryPrefixBytes, data.size() - pos);
        MapEntry e;
        e.scan_id = get_u32(data.data() + pos);
        std::array<double, 12> pose{};
        for (std::size_t k = 0; k < 12; ++k) {
            pose[k] = std::bit_cast<double>(get_u64(data.data() + pos + 4 + 8 * k));
        }
        try {
            e.pose = RigidTransform::from_row_major(pose);
        } catch (const InputError& err) {
            throw CodecError(CodecErrorKind::InvalidMap, std::string("invalid pose in map: ") + err.what());
        }
        pos += kMapEntryPrefixBytes;
        pos += decode_scan_prefix(data.subspan(pos), e.objects);
        map.entries.push_back(std::move(e));
    }
    map.validate();
    return map;
}

StorageStats storage_report(const MapFile& map, std::optional<std::size_t> raw_points_per_scan) {
    if (map.entries.empty()) throw CodecError(CodecErrorKind::EmptyMap, "map has no scans");
    StorageStats s;
    s.scans = map.entries.size();
    std::size_t objects = 0;
    for (const auto& e : map.entries) {
        objects += e.objects.size();
        s.objects_max = std::max(s.objects_max, e.objects.size());
        s.total_bytes += kMapEntryPrefixBytes + record_size(e.objects.size());
    }
    const double scans = static_cast<double>(s.scans);
    s.objects_mean = static_cast<double>(objects) / scans;
    s.record_bytes_mean = static_cast<double>(record_size(0)) + static_cast<double>(kObjectBytes) * s.objects_mean;
    s.payload_bytes_mean = static_cast<double>(kObjectBytes) * s.objects_mean;
    if (raw_points_per_scan) {
        s.compression_ratio = static_cast<double>(*raw_points_per_scan) * 16.0 / s.record_bytes_mean;
    }
    return s;
}

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("io.unreadable", "cannot read file: " + path.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("io.unwritable", "cannot write file: " + path.string());
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw InputError("io.unwritable", "write failed: " + path.string());
}

}  // namespace colm::codec
