#pragma once

// Experiment orchestration behind the `nonhyp` command line tool.
//
// Every subcommand resolves its options from built-in defaults, then an
// optional JSON config file, then command-line flags (flags win). Config
// keys are the flag names without the leading dashes. Results are collected
// in memory and written by a single writer through temp-file + rename, and a
// manifest records the resolved config, stage statuses and SHA-256 digests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "nonhyp/linalg.hpp"

namespace nonhyp::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::ordered_json;

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitConfig = 2 };

struct StageStatus {
    std::string name;
    std::string status;    // ok | failed | error
    std::string message;
    int exit_code = kExitOk;
};

struct OutputDigest {
    std::string path;      // relative to the manifest's directory
    std::string sha256;
    std::size_t bytes = 0;
};

struct RunManifest {
    std::string tool_version = kToolVersion;
    Json config;
    std::uint64_t seed = 0;
    std::string started_at, finished_at;
    std::vector<StageStatus> stages;
    std::vector<OutputDigest> outputs;
    int exit_code = kExitOk;
    std::filesystem::path path;   // where the manifest itself was written

    Json to_json() const;
    static RunManifest from_json(const Json& j);
};

struct ExperimentConfig {
    std::string subcommand;   // shadow | conditions | horseshoe | tangency | all
    Json options;             // fully resolved, including seed, threads and out
};

/// Defaults for a subcommand, as a JSON object keyed by flag name.
Json default_options(const std::string& subcommand);

/// Merges defaults, config-file values and flag overrides. Throws ConfigError
/// naming the offending key for unknown keys or values of the wrong type.
ExperimentConfig resolve_config(const std::string& subcommand, const Json& file_values, const Json& flag_values);

/// Runs the stage pipeline and writes all outputs plus the manifest.
RunManifest run(const ExperimentConfig& config);

struct VerifyReport {
    bool ok = true;
    std::vector<std::string> mismatched;
    std::vector<std::string> missing;
};

/// Recomputes the digests listed in a manifest.
VerifyReport verify_manifest(const std::filesystem::path& manifest);

/// Full command line entry point; returns the process exit code.
int main(int argc, char** argv);

std::string sha256_hex(std::string_view bytes);
void write_atomic(const std::filesystem::path& path, std::string_view content);

/// "2", "[[0.5, 0], [0, 0.3]]" or "[2, 3]" (diagonal).
Matrix parse_matrix_literal(const std::string& text);

/// Shortest round-trip decimal text for a double ("nan", "inf", "-inf" for non-finite values).
std::string format_number(double v);

}  // namespace nonhyp::cli
