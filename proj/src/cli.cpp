#include "nonhyp/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "nonhyp/error.hpp"
#include "nonhyp/parallel.hpp"
#include "nonhyp/stages.hpp"

namespace nonhyp::cli {

namespace fs = std::filesystem;

// ------------------------------------------------------------------ utilities

std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 15]);
    }
    return out;
}

void write_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error("cannot open " + tmp.string() + " for writing");
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        os.flush();
        if (!os) throw Error("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

namespace {

std::string read_file(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ConfigError("cannot read " + path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::string utc_now() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(text);
    while (std::getline(is, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        const auto e = item.find_last_not_of(" \t");
        out.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
    }
    return out;
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError("invalid number for '" + key + "': " + text);
    return v;
}

std::int64_t parse_integer(const std::string& key, const std::string& text) {
    std::int64_t v = 0;
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError("invalid integer for '" + key + "': " + text);
    return v;
}

}  // namespace

Matrix parse_matrix_literal(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::exception&) {
        throw ConfigError("invalid matrix literal: " + text);
    }
    if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError("invalid matrix literal: " + text);
    const auto n = static_cast<Eigen::Index>(j.size());
    if (j[0].is_number()) {
        Matrix m = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!j[static_cast<std::size_t>(i)].is_number()) throw ConfigError("invalid matrix literal: " + text);
            m(i, i) = j[static_cast<std::size_t>(i)].get<double>();
        }
        return m;
    }
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw ConfigError("matrix literal must be square: " + text);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!row[static_cast<std::size_t>(k)].is_number()) throw ConfigError("invalid matrix literal: " + text);
            m(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
    }
    return m;
}

// ------------------------------------------------------------------- options

namespace {

struct OptionSpec {
    std::string key;
    std::string type;   // number | integer | string | bool | numbers | strings
    Json value;
    std::string help;
};

std::vector<OptionSpec> common_specs(const std::string& default_out) {
    return {
        {"seed", "integer", 0, "global seed; stages draw from labelled sub-streams"},
        {"threads", "integer", 0, "worker threads (0: NONHYP_THREADS or hardware)"},
        {"out", "string", default_out, "main report path (output directory for 'all')"},
    };
}

std::vector<OptionSpec> stage_specs(const std::string& sub) {
    if (sub == "conditions")
        return {
            {"map", "string", "builtin:model", "map file or builtin:<name>"},
            {"delta", "numbers", Json::array({1e-3, 1e-2}), "delta values to check"},
            {"K", "number", 2.0, "Delta = K delta"},
            {"alpha", "number", 1.0, "alpha of the condition set"},
            {"region", "number", 0.2, "half-width of the neighborhood box"},
            {"epsilon", "number", 0.1, "ball radius for the C1 check"},
            {"samples", "integer", 10000, "samples per sampled set"},
        };
    if (sub == "shadow")
        return {
            {"map", "string", "builtin:model", "map file or builtin:<name>"},
            {"p0", "string", "", "fixed start point \"x1,x2,...\" (random confined starts when empty)"},
            {"steps", "integer", 50, "pseudotrajectory length m"},
            {"d", "numbers", Json::array({1e-5}), "pseudotrajectory noise bounds"},
            {"epsilon", "numbers", Json::array({1e-3}), "shadowing tolerances"},
            {"trials", "integer", 100, "trials per (epsilon, d)"},
            {"noise", "string", "uniform-box", "uniform-box | gaussian-clipped | adversarial-face"},
            {"region", "number", 0.2, "half-width of the neighborhood box"},
            {"delta", "number", 0.01, "delta of the accompanying condition report"},
            {"K", "number", 2.0, "K of the accompanying condition report"},
            {"condition-samples", "integer", 1000, "samples per set for the condition report (0 skips it)"},
        };
    if (sub == "horseshoe")
        return {
            {"system", "string", "builtin", "builtin or a system JSON file"},
            {"words", "strings", Json::array(), "periodic words (empty: all primitive words up to max-word-length)"},
            {"max-word-length", "integer", 5, "word length bound when no words are given"},
            {"auto-k", "bool", false, "tune the iterate count by doubling"},
            {"trials", "integer", 100, "random disk pairs per branch for the contraction check"},
            {"orbits", "integer", 100, "orbits tracked for the inclination bound"},
            {"inclination-steps", "integer", 30, "steps per inclination orbit"},
            {"perturb-sweep", "numbers", Json::array(), "perturbation scales to re-run the pipeline at"},
        };
    if (sub == "tangency")
        return {
            {"B", "string", "0.5", "stable block (matrix literal)"},
            {"C", "string", "2", "center-unstable block (matrix literal)"},
            {"g", "string", "cbrt(zeta)", "unstable curve eta = g(zeta)"},
            {"delta", "string", "xi", "tangency modulus in xi (empty: derived from g)"},
            {"radii", "numbers", Json::array({0.5, 0.4, 0.3, 0.2, 0.1}), "radii of the flatness report"},
            {"working-radius", "number", 0.9, "radius of the working ball"},
            {"samples", "integer", 10000, "check points for the flattening invariants"},
        };
    throw ConfigError("unknown subcommand '" + sub + "'");
}

const std::vector<std::string> kStages = {"conditions", "shadow", "horseshoe", "tangency"};

std::string default_out(const std::string& sub) {
    if (sub == "all") return "results";
    if (sub == "shadow") return "shadow_report.csv";
    return sub + "_report.json";
}

Json coerce(const OptionSpec& spec, const Json& v, const std::string& path) {
    const auto bad = [&] { return ConfigError("invalid value for '" + path + "': expected " + spec.type); };
    if (spec.type == "number") {
        if (!v.is_number()) throw bad();
        return v.get<double>();
    }
    if (spec.type == "integer") {
        if (v.is_number_integer()) {
            if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) throw bad();
            return v.get<std::int64_t>();
        }
        if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>())
            return static_cast<std::int64_t>(v.get<double>());
        throw bad();
    }
    if (spec.type == "string") {
        if (!v.is_string()) throw bad();
        return v;
    }
    if (spec.type == "bool") {
        if (!v.is_boolean()) throw bad();
        return v;
    }
    if (!v.is_array()) throw bad();
    Json out = Json::array();
    for (const auto& e : v) {
        if (spec.type == "numbers" && !e.is_number()) throw bad();
        if (spec.type == "strings" && !e.is_string()) throw bad();
        out.push_back(spec.type == "numbers" ? Json(e.get<double>()) : e);
    }
    return out;
}

Json from_flag_text(const OptionSpec& spec, const std::string& text, const std::string& path) {
    if (spec.type == "number") return parse_double(path, text);
    if (spec.type == "integer") return parse_integer(path, text);
    if (spec.type == "string") return text;
    if (spec.type == "bool") {
        if (text == "true" || text == "1" || text.empty()) return true;
        if (text == "false" || text == "0") return false;
        throw ConfigError("invalid value for '" + path + "': expected bool");
    }
    Json out = Json::array();
    if (text.empty()) return out;
    for (const auto& item : split_list(text)) {
        if (spec.type == "numbers") out.push_back(parse_double(path, item));
        else out.push_back(item);
    }
    return out;
}

void merge_into(Json& target, const std::vector<OptionSpec>& specs, const Json& values, const std::string& prefix) {
    if (!values.is_object()) throw ConfigError("config section '" + prefix + "' must be an object");
    for (const auto& [key, v] : values.items()) {
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        const auto it = std::find_if(specs.begin(), specs.end(), [&](const OptionSpec& s) { return s.key == key; });
        if (it == specs.end()) throw ConfigError("unknown config key '" + path + "'");
        target[key] = coerce(*it, v, path);
    }
}

Json defaults_of(const std::vector<OptionSpec>& specs) {
    Json out = Json::object();
    for (const auto& s : specs) out[s.key] = s.value;
    return out;
}

}  // namespace

Json default_options(const std::string& subcommand) {
    Json out = defaults_of(common_specs(default_out(subcommand)));
    if (subcommand == "all") {
        for (const auto& s : kStages) out[s] = defaults_of(stage_specs(s));
    } else {
        for (const auto& s : stage_specs(subcommand)) out[s.key] = s.value;
    }
    return out;
}

ExperimentConfig resolve_config(const std::string& subcommand, const Json& file_values, const Json& flag_values) {
    ExperimentConfig cfg;
    cfg.subcommand = subcommand;
    cfg.options = default_options(subcommand);
    std::vector<OptionSpec> top = common_specs(default_out(subcommand));
    if (subcommand != "all") {
        const auto stage = stage_specs(subcommand);
        top.insert(top.end(), stage.begin(), stage.end());
    }
    for (const Json* layer : {&file_values, &flag_values}) {
        if (layer->is_null()) continue;
        if (!layer->is_object()) throw ConfigError("config must be a JSON object");
        Json flat = Json::object();
        for (const auto& [key, v] : layer->items()) {
            if (key == "schema_version") continue;
            if (key == "subcommand") {
                if (!v.is_string() || v.get<std::string>() != subcommand)
                    throw ConfigError("config key 'subcommand' does not match '" + subcommand + "'");
                continue;
            }
            if (subcommand == "all" && std::find(kStages.begin(), kStages.end(), key) != kStages.end()) {
                merge_into(cfg.options[key], stage_specs(key), v, key);
                continue;
            }
            flat[key] = v;
        }
        merge_into(cfg.options, top, flat, "");
    }
    if (cfg.options["seed"].get<std::int64_t>() < 0) throw ConfigError("'seed' must be nonnegative");
    if (cfg.options["threads"].get<std::int64_t>() < 0) throw ConfigError("'threads' must be nonnegative");
    if (cfg.options["out"].get<std::string>().empty()) throw ConfigError("'out' must not be empty");
    return cfg;
}

// ------------------------------------------------------------------ manifest

Json RunManifest::to_json() const {
    Json j;
    j["schema_version"] = kSchemaVersion;
    j["tool"] = "nonhyp";
    j["tool_version"] = tool_version;
    j["config"] = config;
    j["seed"] = seed;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at;
    Json st = Json::array();
    for (const auto& s : stages)
        st.push_back({{"name", s.name}, {"status", s.status}, {"message", s.message}, {"exit_code", s.exit_code}});
    j["stages"] = st;
    Json outs = Json::array();
    for (const auto& o : outputs) outs.push_back({{"path", o.path}, {"sha256", o.sha256}, {"bytes", o.bytes}});
    j["outputs"] = outs;
    j["exit_code"] = exit_code;
    return j;
}

RunManifest RunManifest::from_json(const Json& j) {
    RunManifest m;
    try {
        if (j.at("schema_version").get<int>() != kSchemaVersion) throw ConfigError("unsupported manifest schema_version");
        m.tool_version = j.at("tool_version").get<std::string>();
        m.config = j.at("config");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.started_at = j.at("started_at").get<std::string>();
        m.finished_at = j.at("finished_at").get<std::string>();
        for (const auto& s : j.at("stages"))
            m.stages.push_back({s.at("name").get<std::string>(), s.at("status").get<std::string>(),
                                s.at("message").get<std::string>(), s.at("exit_code").get<int>()});
        for (const auto& o : j.at("outputs"))
            m.outputs.push_back({o.at("path").get<std::string>(), o.at("sha256").get<std::string>(),
                                 o.at("bytes").get<std::size_t>()});
        m.exit_code = j.at("exit_code").get<int>();
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

// ----------------------------------------------------------------------- run

namespace {

StageStatus run_stage(const std::string& name, const Json& options, std::uint64_t seed, const fs::path& out,
                      std::vector<OutputFile>& files) {
    StageStatus st;
    st.name = name;
    try {
        StageResult r;
        if (name == "conditions") r = run_conditions_stage(options, seed, out);
        else if (name == "shadow") r = run_shadow_stage(options, seed, out);
        else if (name == "horseshoe") r = run_horseshoe_stage(options, seed, out);
        else if (name == "tangency") r = run_tangency_stage(options, seed, out);
        else throw ConfigError("unknown stage '" + name + "'");
        st.status = r.pass ? "ok" : "failed";
        st.message = r.message;
        st.exit_code = r.pass ? kExitOk : kExitFailure;
        for (auto& f : r.files) files.push_back(std::move(f));
    } catch (const ConfigError& e) {
        st = {name, "error", e.what(), kExitConfig};
    } catch (const ParseError& e) {
        st = {name, "error", e.what(), kExitConfig};
    } catch (const std::exception& e) {
        st = {name, "error", e.what(), kExitFailure};
    }
    return st;
}

fs::path relative_to(const fs::path& file, const fs::path& dir) {
    const fs::path rel = fs::relative(fs::absolute(file), fs::absolute(dir));
    return rel.empty() ? file.filename() : rel;
}

}  // namespace

RunManifest run(const ExperimentConfig& config) {
    const Json& opt = config.options;
    RunManifest m;
    m.config = {{"subcommand", config.subcommand}, {"options", opt}};
    m.seed = opt.at("seed").get<std::uint64_t>();
    m.started_at = utc_now();
    const int threads = static_cast<int>(opt.at("threads").get<std::int64_t>());
    if (threads > 0) set_worker_count(threads);

    const fs::path out = opt.at("out").get<std::string>();
    std::vector<OutputFile> files;
    if (config.subcommand == "all") {
        for (const auto& name : kStages) {
            const fs::path stage_out = out / (name == "shadow" ? "shadow.csv" : name + ".json");
            m.stages.push_back(run_stage(name, opt.at(name), m.seed, stage_out, files));
        }
        m.path = out / "manifest.json";
    } else {
        m.stages.push_back(run_stage(config.subcommand, opt, m.seed, out, files));
        fs::path manifest = out;
        manifest.replace_extension(".manifest.json");
        m.path = manifest;
    }
    if (threads > 0) set_worker_count(0);

    // Single writer: every file goes through the same atomic path in a fixed order.
    const fs::path base = m.path.has_parent_path() ? m.path.parent_path() : fs::path(".");
    for (const auto& f : files) {
        write_atomic(f.path, f.content);
        m.outputs.push_back({relative_to(f.path, base).generic_string(), sha256_hex(f.content), f.content.size()});
    }
    for (const auto& st : m.stages) m.exit_code = std::max(m.exit_code, st.exit_code);
    m.finished_at = utc_now();
    write_atomic(m.path, m.to_json().dump(2) + "\n");
    return m;
}

VerifyReport verify_manifest(const fs::path& manifest) {
    Json j;
    try {
        j = Json::parse(read_file(manifest));
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("manifest is not valid JSON: ") + e.what());
    }
    const RunManifest m = RunManifest::from_json(j);
    const fs::path base = manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
    VerifyReport rep;
    for (const auto& o : m.outputs) {
        const fs::path p = base / o.path;
        if (!fs::exists(p)) {
            rep.missing.push_back(o.path);
            continue;
        }
        if (sha256_hex(read_file(p)) != o.sha256) rep.mismatched.push_back(o.path);
    }
    rep.ok = rep.missing.empty() && rep.mismatched.empty();
    return rep;
}

// ---------------------------------------------------------------------- main

namespace {

struct FlagBinding {
    OptionSpec spec;
    std::string text;
    bool flag_set = false;
    CLI::Option* option = nullptr;
};

void bind_flags(CLI::App* app, const std::vector<OptionSpec>& specs, std::vector<std::unique_ptr<FlagBinding>>& out) {
    for (const auto& s : specs) {
        auto b = std::make_unique<FlagBinding>();
        b->spec = s;
        std::string help = s.help + " (default " + s.value.dump() + ")";
        if (s.type == "bool") b->option = app->add_flag("--" + s.key, b->flag_set, help);
        else b->option = app->add_option("--" + s.key, b->text, help);
        out.push_back(std::move(b));
    }
}

Json collect_flags(const std::vector<std::unique_ptr<FlagBinding>>& bindings) {
    Json out = Json::object();
    for (const auto& b : bindings) {
        if (b->option->count() == 0) continue;
        out[b->spec.key] = b->spec.type == "bool" ? Json(b->flag_set) : from_flag_text(b->spec, b->text, b->spec.key);
    }
    return out;
}

void print_manifest(const RunManifest& m) {
    for (const auto& st : m.stages) {
        std::cout << "stage " << st.name << ": " << st.status;
        if (!st.message.empty()) std::cout << " (" << st.message << ")";
        std::cout << "\n";
    }
    for (const auto& o : m.outputs) std::cout << "wrote " << o.path << "\n";
    std::cout << "manifest " << m.path.generic_string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite shadowing, horseshoes and tangency flattening near nonhyperbolic points"};
    app.require_subcommand(1);
    app.set_version_flag("--version", kToolVersion);

    std::map<std::string, std::vector<std::unique_ptr<FlagBinding>>> bindings;
    std::map<std::string, std::string> config_paths;
    const std::vector<std::pair<std::string, std::string>> subs = {
        {"conditions", "verify the shadowing conditions on a region"},
        {"shadow", "shadow pseudotrajectories by exact orbits"},
        {"horseshoe", "admissible disks, periodic points and inclination bounds"},
        {"tangency", "flatten a quasitransverse tangency"},
        {"all", "run every experiment into one output directory"},
    };
    for (const auto& [name, help] : subs) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_paths[name], "JSON config file; flags override its values");
        auto specs = common_specs(default_out(name));
        if (name != "all") {
            const auto stage = stage_specs(name);
            specs.insert(specs.end(), stage.begin(), stage.end());
        }
        bind_flags(sub, specs, bindings[name]);
    }
    std::string manifest_path;
    CLI::App* verify = app.add_subcommand("verify", "recompute output digests recorded in a manifest");
    verify->add_option("manifest", manifest_path, "manifest file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (verify->parsed()) {
            const VerifyReport rep = verify_manifest(manifest_path);
            for (const auto& p : rep.missing) std::cout << "missing " << p << "\n";
            for (const auto& p : rep.mismatched) std::cout << "digest mismatch " << p << "\n";
            std::cout << (rep.ok ? "all digests match" : "manifest verification failed") << "\n";
            return rep.ok ? kExitOk : kExitFailure;
        }
        for (const auto& [name, help] : subs) {
            if (!app.get_subcommand(name)->parsed()) continue;
            Json file_values;
            if (!config_paths[name].empty()) {
                try {
                    file_values = Json::parse(read_file(config_paths[name]));
                } catch (const Json::exception& e) {
                    throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
                }
            }
            const ExperimentConfig cfg = resolve_config(name, file_values, collect_flags(bindings[name]));
            const RunManifest m = run(cfg);
            print_manifest(m);
            return m.exit_code;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitOk;
}

}  // namespace nonhyp::cli
