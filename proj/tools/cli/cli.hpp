#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "colm/core.hpp"
#include "colm/net.hpp"
#include "colm/pose.hpp"

namespace colm::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kNoSolution = 3, kDivergence = 4 };

/// Parses `args` (without the program name), runs the subcommand and maps
/// library exceptions onto exit codes. Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

enum class Matcher { Net, Oracle, Nearest };

struct RegisterOptions {
    Matcher matcher = Matcher::Net;
    Solver solver = Solver::Ransac;
    std::size_t n_c = 0;  ///< 0 selects 15 for SVD and 60 for RANSAC
    bool icp = false;
    double oracle_tolerance = 1.0;  ///< metres, for the oracle matcher
    std::uint64_t seed = 0;
};

/// Correspondences, pose solver and optional ICP for one pair. `params` and
/// `cfg` are needed by the network matcher, `truth` by the oracle.
RegistrationResult register_pair(const ObjectSet& source, const ObjectSet& target, const RegisterOptions& opts,
                                 const net::MatchParams* params, const net::NetConfig* cfg,
                                 const std::optional<RigidTransform>& truth);

struct PairSpec {
    std::string id;
    std::filesystem::path source;
    std::filesystem::path target;
    std::optional<RigidTransform> truth;
};

/// Pair list CSV: header `pair_id,source,target` optionally followed by
/// gt_00..gt_11 (row-major [R|t] mapping source into target). Relative paths
/// are returned as written.
std::vector<PairSpec> read_pair_list(const std::filesystem::path& path);
void write_pair_list(const std::filesystem::path& path, std::span<const PairSpec> pairs);

/// SHA-1 of "blob <size>\0" + data, as git hashes file contents; lowercase hex.
std::string git_blob_sha1(std::span<const std::uint8_t> data);

/// Verbosity from COLM_LOG: error, warn (default), info, debug.
enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };
LogLevel log_level();

}  // namespace colm::cli
