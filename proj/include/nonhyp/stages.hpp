#pragma once

// The experiment stages run by the command line tool. Each stage takes its
// resolved options, the global seed and its main output path, and returns the
// files to write; nothing touches the file system here.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nonhyp/cli.hpp"
#include "nonhyp/horseshoe.hpp"
#include "nonhyp/map_system.hpp"

namespace nonhyp::cli {

struct OutputFile {
    std::filesystem::path path;
    std::string content;
};

struct StageResult {
    bool pass = false;
    std::string message;
    std::vector<OutputFile> files;
};

/// Report JSON plus CSV (condition, delta, margin). Passes when every condition passes at every delta.
StageResult run_conditions_stage(const Json& options, std::uint64_t seed, const std::filesystem::path& out);

/// Table CSV at `out` plus the accompanying condition report. Passes when every trial converged.
StageResult run_shadow_stage(const Json& options, std::uint64_t seed, const std::filesystem::path& out);

/// Report JSON plus disk, inclination and contraction CSVs. Passes when the
/// contraction, periodic point and inclination checks all hold.
StageResult run_horseshoe_stage(const Json& options, std::uint64_t seed, const std::filesystem::path& out);

/// Report JSON plus flatness and flattening CSVs and a system file usable by
/// `horseshoe --system`. Passes when every flatness invariant holds.
StageResult run_tangency_stage(const Json& options, std::uint64_t seed, const std::filesystem::path& out);

/// "builtin:<name>" or a map definition file.
MapSystem load_map_spec(const std::string& spec);

/// "builtin" or a JSON system file {"schema_version": 1, "kind": "homoclinic", ...}.
ChartedSystem load_charted_system(const std::string& spec);

/// Path beside `out` with its extension replaced by `suffix` (e.g. ".disks.csv").
std::filesystem::path sidecar(const std::filesystem::path& out, const std::string& suffix);

}  // namespace nonhyp::cli
