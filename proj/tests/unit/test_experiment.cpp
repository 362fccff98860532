#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <map>
#include <algorithm>

#include "mfc/experiment.hpp"

using namespace mfc;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("mfc_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_config(const fs::path& dir, const json& doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string config_error_pointer(const json& doc) {
    try {
        parse_experiment(doc, fs::temp_directory_path());
    } catch (const ConfigError& e) {
        return e.pointer();
    }
    return "no error";
}

const json kSolve = {{"kind", "solve-hjb"},
                     {"model", "LQ-decoupled"},
                     {"solve-hjb",
                      {{"n", 1},
                       {"grid", {{"points", 61}}},
                       {"evaluate", {{{"t", 1.0}, {"x", {1.0}}, {"expect", 0.5}, {"tolerance", 1e-12}}}}}}};

} // namespace

TEST_CASE("schema errors point at the offending key") {
    CHECK(config_error_pointer({{"kind", "nope"}}) == "/kind");
    CHECK(config_error_pointer({{"kind", "verify"}, {"extra", 1}}) == "/extra");
    CHECK(config_error_pointer({{"kind", "verify"}, {"simulate", json::object()}}) == "/simulate");
    auto bad = kSolve;
    bad["solve-hjb"]["grid"]["pointz"] = 3;
    CHECK(config_error_pointer(bad) == "/solve-hjb/grid/pointz");
    bad = kSolve;
    bad["solve-hjb"]["n"] = 0;
    CHECK(config_error_pointer(bad) == "/solve-hjb/n");
    bad = kSolve;
    bad["model"] = {{"registry", "LQ-decoupled"}, {"UT", "m2 +"}};
    CHECK(config_error_pointer(bad) == "/model/UT");
    CHECK(config_error_pointer(
              json::parse(R"({"kind": "verify", "model": "LQ-decoupled", "verify": {"probes": [{"probe": "bogus"}]}})")) ==
          "/verify/probes/0/probe");
    CHECK(config_error_pointer(json::parse(
              R"({"kind": "verify", "model": "LQ-mean-reverting", "verify": {"probes": [{"probe": "martingale", "x0": [0.0]}]}})")) ==
          "/verify/probes/0");
}

TEST_CASE("relative output resolves against the config directory") {
    auto doc = kSolve;
    doc["output"] = "out";
    const auto cfg = parse_experiment(doc, "/some/dir");
    CHECK(cfg.output == fs::path("/some/dir/out"));
}

TEST_CASE("config hash ignores key order") {
    CHECK(config_hash(json::parse(R"({"a":1,"b":2})")) == config_hash(json::parse(R"({"b":2,"a":1})")));
    CHECK(config_hash(json{{"a", 1}}) != config_hash(json{{"a", 2}}));
    CHECK(config_hash(json{{"a", 1}}).size() == 16);
}

TEST_CASE("run command exit codes and artifacts") {
    const auto dir = scratch_dir("run");
    std::ostringstream out, err;

    RunOptions opt;
    opt.config = write_config(dir, kSolve);
    opt.out = dir / "ok";
    CHECK(run_command(opt, out, err) == ExitCode::Pass);
    for (const char* f : {"results.csv", "summary.json", "manifest.json"}) CHECK(fs::exists(dir / "ok" / f));
    CHECK(slurp(dir / "ok" / "results.csv").starts_with("t,x,value\n"));
    const auto manifest = json::parse(slurp(dir / "ok" / "manifest.json"));
    CHECK(manifest.at("config_hash") == config_hash(kSolve));
    CHECK(manifest.at("kind") == "solve-hjb");

    // Reruns are byte-identical.
    opt.out = dir / "again";
    CHECK(run_command(opt, out, err) == ExitCode::Pass);
    CHECK(slurp(dir / "ok" / "results.csv") == slurp(dir / "again" / "results.csv"));

    // A failing expectation is a runtime failure.
    auto failing = kSolve;
    failing["solve-hjb"]["evaluate"][0]["expect"] = 0.7;
    opt.config = write_config(dir, failing);
    opt.out = dir / "fail";
    err.str("");
    CHECK(run_command(opt, out, err) == ExitCode::RuntimeFailure);
    CHECK(err.str().find("probe failed") != std::string::npos);

    // Malformed JSON reports the byte offset.
    {
        std::ofstream(dir / "config.json") << "{\"kind\": ";
    }
    opt.config = dir / "config.json";
    err.str("");
    CHECK(run_command(opt, out, err) == ExitCode::ConfigError);
    CHECK(err.str().find("malformed JSON at byte") != std::string::npos);

    auto bad = kSolve;
    bad["solve-hjb"]["grid"]["points"] = "many";
    opt.config = write_config(dir, bad);
    err.str("");
    CHECK(run_command(opt, out, err) == ExitCode::ConfigError);
    CHECK(err.str().find("/solve-hjb/grid/points") != std::string::npos);

    opt.config = dir / "missing.json";
    CHECK(run_command(opt, out, err) == ExitCode::ConfigError);
}

TEST_CASE("command line seed override changes the recorded seed") {
    const auto dir = scratch_dir("seed");
    const json doc = {{"kind", "simulate"},
                      {"model", "LQ-decoupled"},
                      {"simulate", {{"x0", {0.5}}, {"steps", 10}, {"n_paths", 50}}}};
    RunOptions opt;
    opt.config = write_config(dir, doc);
    opt.out = dir / "a";
    opt.seed = 7;
    std::ostringstream out, err;
    REQUIRE(run_command(opt, out, err) == ExitCode::Pass);
    const auto manifest = json::parse(slurp(dir / "a" / "manifest.json"));
    CHECK(manifest.at("seed") == 7);
}

TEST_CASE("jobs do not change results") {
    const auto dir = scratch_dir("jobs");
    const json doc = {{"kind", "simulate"},
                      {"model", "tanh-interaction"},
                      {"seed", 2},
                      {"simulate", {{"x0", {0.5, -0.5}}, {"steps", 20}, {"n_paths", 300}}}};
    RunOptions opt;
    opt.config = write_config(dir, doc);
    std::ostringstream out, err;
    opt.out = dir / "one";
    opt.jobs = 1;
    REQUIRE(run_command(opt, out, err) == ExitCode::Pass);
    opt.out = dir / "three";
    opt.jobs = 3;
    REQUIRE(run_command(opt, out, err) == ExitCode::Pass);
    CHECK(slurp(dir / "one" / "results.csv") == slurp(dir / "three" / "results.csv"));
}

TEST_CASE("shipped configs validate") {
    for (const auto& entry : fs::directory_iterator(MFC_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        CAPTURE(entry.path().string());
        const auto doc = json::parse(slurp(entry.path()));
        CHECK_NOTHROW(parse_experiment(doc, entry.path().parent_path()));
    }
}

TEST_CASE("registry listing is sorted within each category") {
    const auto listing = registry_listing();
    REQUIRE(listing.is_array());
    std::map<std::string, std::vector<std::string>> by_category;
    for (const auto& row : listing) by_category[row.at("category")].push_back(row.at("name"));
    for (const char* c : {"kind", "model", "functional", "verify-probe", "mollify-probe"}) {
        CHECK(by_category.contains(c));
        CHECK(std::ranges::is_sorted(by_category[c]));
    }
    std::ostringstream os;
    print_registry(os, false);
    CHECK(os.str().find("model LQ-decoupled\n") != std::string::npos);
}
