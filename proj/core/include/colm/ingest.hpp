#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "colm/core.hpp"

namespace colm::ingest {

/// Scan file: records of 4 little-endian float32 (x, y, z, intensity).
/// Intensity is dropped. Throws InputError on unreadable files or a length
/// that is not a multiple of 16.
PointCloud read_point_bin(const std::filesystem::path& path);
void write_point_bin(const std::filesystem::path& path, const PointCloud& cloud);

/// Label file: one little-endian u32 per point; the semantic class is the
/// low 16 bits (the upper half carries an instance id and is dropped).
std::vector<std::uint32_t> read_labels(const std::filesystem::path& path, std::size_t point_count);
void write_labels(const std::filesystem::path& path, const std::vector<std::uint32_t>& raw);

/// Maps dataset label ids onto internal class ids. Static class names get
/// their fixed ids 0..6; other names are numbered from 7 in order of first
/// appearance. Labels absent from the map become `kUnmapped`.
class ClassMap {
public:
    static constexpr std::uint32_t kUnmapped = 255;

    /// Parses `id = name` lines; `#` starts a comment.
    static ClassMap parse(const std::string& text);
    static ClassMap load(const std::filesystem::path& path);
    /// The SemanticKITTI taxonomy.
    static ClassMap semantic_kitti();

    std::uint32_t internal_id(std::uint32_t dataset_id) const;
    std::vector<std::uint32_t> remap(const std::vector<std::uint32_t>& dataset_labels) const;
    const std::map<std::uint32_t, std::string>& names() const noexcept { return names_; }

private:
    std::map<std::uint32_t, std::string> names_;
    std::map<std::uint32_t, std::uint32_t> internal_;
};

struct PoseTrack {
    std::vector<std::size_t> frames;  ///< strictly increasing
    std::vector<RigidTransform> poses;

    void validate() const;
};

/// Reads a pose text file: either 12 numbers per line (row-major [R|t],
/// frame = line number) or 13 numbers (frame index first). Rotations are
/// re-orthonormalised to absorb text rounding.
PoseTrack read_pose_track(const std::filesystem::path& path);

/// Frame pairs whose positions lie closer than `max_dist`. When `b` is
/// null the pairs come from a single track: frame_a < frame_b and
/// frame_b - frame_a >= min_gap. Ordered by (frame_a, frame_b).
std::vector<std::pair<std::size_t, std::size_t>> select_pairs(const PoseTrack& a, const PoseTrack* b,
                                                              double max_dist, std::size_t min_gap);

}  // namespace colm::ingest
