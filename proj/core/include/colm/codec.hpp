#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "colm/core.hpp"
#include "colm/error.hpp"

namespace colm::codec {

// CompactScanRecord layout (all little-endian):
//   "COLM" | version u8 | count u16 | count x (f32 x, f32 y, f32 z, u8 class)
inline constexpr std::array<char, 4> kScanMagic = {'C', 'O', 'L', 'M'};
inline constexpr std::uint8_t kScanVersion = 1;
inline constexpr std::size_t kHeaderBytes = 7;
inline constexpr std::size_t kObjectBytes = 13;
inline constexpr std::size_t kMaxObjects = 65535;
// MapFile entry: scan id u32 | 12 x f64 row-major [R|t] | CompactScanRecord
inline constexpr std::size_t kMapEntryPrefixBytes = 4 + 12 * 8;

using Bytes = std::vector<std::uint8_t>;

enum class CodecErrorKind { Overflow, CorruptMagic, VersionMismatch, Truncation, TrailingBytes, InvalidMap, EmptyMap };

class CodecError : public InputError {
public:
    CodecError(CodecErrorKind kind, const std::string& message);
    CodecErrorKind kind() const noexcept { return kind_; }

private:
    CodecErrorKind kind_;
};

constexpr std::size_t record_size(std::size_t objects) { return kHeaderBytes + kObjectBytes * objects; }
constexpr std::size_t payload_size(std::size_t objects) { return kObjectBytes * objects; }

Bytes encode_scan(const ObjectSet& objects);

/// Decodes exactly one record spanning all of `data`.
ObjectSet decode_scan(std::span<const std::uint8_t> data);

/// Decodes one record from the front of `data`; returns the bytes consumed.
std::size_t decode_scan_prefix(std::span<const std::uint8_t> data, ObjectSet& out);

/// Rounds centroids through float32, i.e. what a roundtrip preserves.
ObjectSet quantize(const ObjectSet& objects);

struct MapEntry {
    std::uint32_t scan_id = 0;
    RigidTransform pose;
    ObjectSet objects;
};

/// Scans of a map in strictly increasing id order.
struct MapFile {
    std::vector<MapEntry> entries;

    /// Throws CodecError(InvalidMap) unless ids are strictly increasing.
    void validate() const;
};

Bytes encode_map(const MapFile& map);
MapFile decode_map(std::span<const std::uint8_t> data);

struct StorageStats {
    std::size_t scans = 0;
    std::size_t total_bytes = 0;          ///< full map file size
    double record_bytes_mean = 0.0;       ///< per-scan record incl. 7-byte header
    double payload_bytes_mean = 0.0;      ///< 13 bytes per object, no header
    double objects_mean = 0.0;
    std::size_t objects_max = 0;
    std::optional<double> compression_ratio;  ///< raw (16 B/point) over mean record bytes
};

/// `raw_points_per_scan`, when given, is the raw scan size the compression
/// ratio is computed against. Throws CodecError(EmptyMap) for an empty map.
StorageStats storage_report(const MapFile& map, std::optional<std::size_t> raw_points_per_scan = {});

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> data);

}  // namespace colm::codec
