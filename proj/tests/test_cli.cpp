#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "nonhyp/cli.hpp"
#include "nonhyp/error.hpp"
#include "nonhyp/stages.hpp"

using namespace nonhyp;
using namespace nonhyp::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("nonhyp_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_main(std::vector<std::string> args) {
    args.insert(args.begin(), "nonhyp");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return cli::main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("sha256 and number formatting") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(format_number(0.1) == "0.1");
    CHECK(format_number(1e-300) == "1e-300");
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("matrix literals") {
    CHECK(parse_matrix_literal("2") == Matrix::Constant(1, 1, 2.0));
    const Matrix d = parse_matrix_literal("[2, 3]");
    CHECK(d.rows() == 2);
    CHECK(d(1, 1) == 3.0);
    CHECK(d(0, 1) == 0.0);
    const Matrix m = parse_matrix_literal("[[0, -2], [2, 0]]");
    CHECK(m(0, 1) == -2.0);
    CHECK(m(1, 0) == 2.0);
    CHECK_THROWS_AS(parse_matrix_literal("[[1, 2], [3]]"), ConfigError);
    CHECK_THROWS_AS(parse_matrix_literal("two"), ConfigError);
}

TEST_CASE("config layering: defaults, then file, then flags") {
    const Json file = {{"samples", 500}, {"K", 3.0}};
    const Json flags = {{"samples", 700}};
    const ExperimentConfig cfg = resolve_config("conditions", file, flags);
    CHECK(cfg.options["samples"] == 700);
    CHECK(cfg.options["K"] == 3.0);
    CHECK(cfg.options["alpha"] == 1.0);
    CHECK(cfg.options["out"] == "conditions_report.json");

    const ExperimentConfig all = resolve_config("all", Json{{"tangency", {{"C", "3"}}}}, Json::object());
    CHECK(all.options["tangency"]["C"] == "3");
    CHECK(all.options["out"] == "results");
}

TEST_CASE("config errors name the offending key") {
    try {
        resolve_config("conditions", Json{{"sample", 10}}, Json::object());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("sample") != std::string::npos);
    }
    try {
        resolve_config("all", Json{{"horseshoe", {{"orbitz", 3}}}}, Json::object());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("horseshoe.orbitz") != std::string::npos);
    }
    CHECK_THROWS_AS(resolve_config("conditions", Json{{"samples", "many"}}, Json::object()), ConfigError);
    CHECK_THROWS_AS(resolve_config("conditions", Json{{"seed", -1}}, Json::object()), ConfigError);

    const fs::path dir = scratch("config_error");
    const fs::path config = dir / "bad.json";
    std::ofstream(config) << R"({"shadow_steps": 4})";
    CHECK(run_main({"shadow", "--config", config.string(), "--out", (dir / "r.csv").string()}) == kExitConfig);
    CHECK(run_main({"conditions", "--samples", "zero", "--out", (dir / "c.json").string()}) == kExitConfig);
    CHECK(run_main({"conditions", "--samples", "0", "--out", (dir / "c.json").string()}) == kExitConfig);
    CHECK(run_main({"tangency", "--radii", "0.95", "--out", (dir / "t.json").string()}) == kExitConfig);
    CHECK_FALSE(fs::exists(dir / "r.csv"));
}

TEST_CASE("atomic writes leave no temporary files") {
    const fs::path dir = scratch("atomic");
    write_atomic(dir / "sub" / "a.txt", "one");
    write_atomic(dir / "sub" / "a.txt", "two");
    CHECK(slurp(dir / "sub" / "a.txt") == "two");
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir / "sub")) ++n;
    CHECK(n == 1);
}

TEST_CASE("manifest records digests and verify detects tampering") {
    const fs::path dir = scratch("manifest");
    const ExperimentConfig cfg =
        resolve_config("conditions", Json{{"samples", 1000}, {"out", (dir / "cond.json").string()}}, Json::object());
    const RunManifest m = run(cfg);
    CHECK(m.exit_code == kExitOk);
    REQUIRE(m.outputs.size() == 2);
    CHECK(m.outputs[0].path == "cond.json");
    CHECK(m.outputs[1].path == "cond.margins.csv");
    CHECK(m.outputs[0].sha256 == sha256_hex(slurp(dir / "cond.json")));
    const fs::path manifest = dir / "cond.manifest.json";
    REQUIRE(fs::exists(manifest));
    const RunManifest back = RunManifest::from_json(Json::parse(slurp(manifest)));
    CHECK(back.tool_version == kToolVersion);
    CHECK(back.config["options"]["samples"] == 1000);
    CHECK(back.stages.at(0).status == "ok");

    CHECK(verify_manifest(manifest).ok);
    CHECK(run_main({"verify", manifest.string()}) == kExitOk);
    std::ofstream(dir / "cond.margins.csv", std::ios::app) << "tampered\n";
    const VerifyReport rep = verify_manifest(manifest);
    CHECK_FALSE(rep.ok);
    REQUIRE(rep.mismatched.size() == 1);
    CHECK(rep.mismatched[0] == "cond.margins.csv");
    fs::remove(dir / "cond.json");
    CHECK(verify_manifest(manifest).missing.size() == 1);
    CHECK(run_main({"verify", manifest.string()}) == kExitFailure);
}

TEST_CASE("failing checks give exit 1 and are recorded") {
    const fs::path dir = scratch("failing");
    // delta far beyond the neighborhood breaks the sampled conditions.
    const ExperimentConfig cfg = resolve_config(
        "conditions", Json{{"samples", 500}, {"delta", {0.5}}, {"out", (dir / "c.json").string()}}, Json::object());
    const RunManifest m = run(cfg);
    CHECK(m.exit_code == kExitFailure);
    CHECK(m.stages.at(0).status == "failed");
    CHECK(fs::exists(dir / "c.json"));
}

TEST_CASE("identical config and seed give identical outputs for any worker count") {
    std::vector<std::vector<OutputDigest>> runs;
    for (int threads : {1, 2, 8}) {
        const fs::path dir = scratch("determinism_" + std::to_string(threads));
        const Json file = {{"seed", 7}, {"threads", threads}, {"trials", 20}, {"out", (dir / "s.csv").string()}};
        runs.push_back(run(resolve_config("shadow", file, Json::object())).outputs);
    }
    for (std::size_t r = 1; r < runs.size(); ++r) {
        REQUIRE(runs[r].size() == runs[0].size());
        for (std::size_t i = 0; i < runs[0].size(); ++i) CHECK(runs[r][i].sha256 == runs[0][i].sha256);
    }
    // A different seed changes the table.
    const fs::path dir = scratch("determinism_seed");
    const auto other = run(resolve_config("shadow", Json{{"seed", 8}, {"trials", 20}, {"out", (dir / "s.csv").string()}},
                                          Json::object()))
                           .outputs;
    CHECK(other[0].sha256 != runs[0][0].sha256);
}

TEST_CASE("tangency system file feeds the horseshoe loader") {
    const fs::path dir = scratch("chain");
    const StageResult t = run_tangency_stage(default_options("tangency"), 0, dir / "t.json");
    CHECK(t.pass);
    const auto it = std::find_if(t.files.begin(), t.files.end(),
                                 [](const OutputFile& f) { return f.path.filename() == "t.system.json"; });
    REQUIRE(it != t.files.end());
    write_atomic(it->path, it->content);
    const ChartedSystem sys = load_charted_system(it->path.string());
    CHECK(sys.charts[0].y_half > 0.0);
    std::ofstream(dir / "bad.json") << R"({"kind": "homoclinic", "stabel": 0.5})";
    CHECK_THROWS_AS(load_charted_system((dir / "bad.json").string()), ConfigError);
}
