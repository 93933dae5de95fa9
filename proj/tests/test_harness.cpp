#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hydroctrl/harness.hpp"

using namespace hydroctrl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run(std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "hydroctrl");
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string fresh_dir(const std::string& name) {
    fs::path p = fs::path("test_out") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("config loading, overrides, and key validation") {
    RunConfig cfg = RunConfig::load("", 7, ".", {"grid.n=32", "physics.g=2.5", "flag=true"});
    CHECK(cfg.doc["grid"]["n"].get<int>() == 32);
    CHECK(cfg.doc["physics"]["g"].get<double>() == 2.5);
    CHECK(cfg.doc["flag"].get<bool>() == true);
    CHECK(cfg.seed == 7);

    GridSpec g = grid_from_json(cfg.doc["grid"]);
    CHECK(g.n_modes == 32);
    CHECK(g.infinite_depth());
    PhysParams p = physics_from_json(cfg.doc["physics"]);
    CHECK(p.grav == 2.5);

    nlohmann::json bad = {{"n", 16}, {"bogus", 1}};
    CHECK_THROWS_AS(grid_from_json(bad), std::invalid_argument);
}

TEST_CASE("simulate: zero state exits cleanly with zero norms") {
    std::string out = fresh_dir("sim_zero");
    int code = run({"simulate", "--seed", "1", "--out", out, "--override", "grid.n=16",
                    "--override", "T=0.05", "--override", "dt=0.005"});
    CHECK(code == 0);
    auto summary = nlohmann::json::parse(slurp(out + "/summary.json"));
    CHECK(summary["final_pair_h0"].get<double>() == 0.0);
    CHECK(fs::exists(out + "/trajectory.txt"));
    CHECK(fs::exists(out + "/norms.csv"));
}

TEST_CASE("simulate: missing input file is a config error") {
    std::string out = fresh_dir("sim_missing");
    int code = run({"simulate", "--out", out, "--override", "grid.n=16", "--override",
                    "initial.type=\"file\"", "--override", "initial.path=\"/nonexistent/file\""});
    CHECK(code == 2);
}

TEST_CASE("simulate: guard violation exits with 3") {
    std::string out = fresh_dir("sim_guard");
    int code = run({"simulate", "--out", out, "--override", "grid.n=16", "--override", "T=0.05",
                    "--override", "dt=0.005", "--override", "initial.type=\"modes\"",
                    "--override", "initial.eta=[[2,0.4]]"});
    CHECK(code == 3);
    auto summary = nlohmann::json::parse(slurp(out + "/summary.json"));
    CHECK(summary.contains("violation_time"));
}

TEST_CASE("simulate: dt-halving self-convergence order near 4") {
    std::string out = fresh_dir("sim_order");
    int code = run({"simulate", "--seed", "3", "--out", out, "--override", "grid.n=16",
                    "--override", "T=0.2", "--override", "dt=0.004", "--override",
                    "initial.type=\"random\"", "--override", "initial.amplitude=0.02",
                    "--override", "dt_halving=true"});
    CHECK(code == 0);
    auto summary = nlohmann::json::parse(slurp(out + "/summary.json"));
    double order = summary["self_convergence_order"].get<double>();
    CHECK(order > 3.7);
    CHECK(order < 4.3);
}

TEST_CASE("verify suites pass and reports are deterministic") {
    for (std::string suite : {"shape", "elastic", "adjoint", "ingham"}) {
        std::string out1 = fresh_dir("verify_" + suite + "_1");
        std::string out2 = fresh_dir("verify_" + suite + "_2");
        int c1 = run({"verify", "--suite", suite, "--seed", "11", "--out", out1, "--override",
                      "grid.n=32", "--override", "trials=10"});
        int c2 = run({"verify", "--suite", suite, "--seed", "11", "--out", out2, "--override",
                      "grid.n=32", "--override", "trials=10"});
        INFO(suite);
        CHECK(c1 == 0);
        CHECK(c2 == 0);
        CHECK(slurp(out1 + "/verify_" + suite + ".json") ==
              slurp(out2 + "/verify_" + suite + ".json"));
    }
}

TEST_CASE("verify reduction suite and fault injection") {
    std::string out = fresh_dir("verify_reduction");
    int code = run({"verify", "--suite", "reduction", "--seed", "5", "--out", out, "--override",
                    "grid.n=32", "--override", "T=0.1", "--override", "dt=0.003125",
                    "--override", "amplitude=0.001"});
    CHECK(code == 0);

    std::string out2 = fresh_dir("verify_reduction_fault");
    int code2 = run({"verify", "--suite", "reduction", "--seed", "5", "--out", out2, "--override",
                     "grid.n=32", "--override", "T=0.1", "--override", "dt=0.003125",
                     "--override", "amplitude=0.001", "--override", "fault_injection=true"});
    CHECK(code2 == 1);
    auto rep = nlohmann::json::parse(slurp(out2 + "/verify_reduction.json"));
    CHECK(rep["pass"].get<bool>() == false);
}

TEST_CASE("unknown config keys are rejected with exit 2") {
    std::string out = fresh_dir("badkey");
    int code = run({"simulate", "--out", out, "--override", "grid.n=16", "--override",
                    "no_such_option=1"});
    CHECK(code == 2);
}

TEST_CASE("control command: linear flat case certifies and writes artifacts") {
    std::string out = fresh_dir("ctl_linear");
    int code = run({"control", "--mode", "linear", "--seed", "9", "--out", out, "--override",
                    "grid.n=32", "--override", "T=0.5", "--override", "dt=0.002", "--override",
                    "tolerance=1e-5", "--override", "data.amplitude=0.001"});
    CHECK(code == 0);
    auto rep = nlohmann::json::parse(slurp(out + "/control_result.json"));
    CHECK(rep["certified_error_h0"].get<double>() <= 1e-5);
    CHECK(fs::exists(out + "/control_field.csv"));
}

TEST_CASE("control command: data beyond the smallness guard exit 3") {
    std::string out = fresh_dir("ctl_guard");
    int code = run({"control", "--mode", "nonlinear", "--seed", "9", "--out", out, "--override",
                    "grid.n=16", "--override", "T=0.2", "--override", "dt=0.002", "--override",
                    "data.amplitude=0.5"});
    CHECK(code == 3);
}

TEST_CASE("ingham-sweep writes a monotone report") {
    std::string out = fresh_dir("ingham_sweep");
    int code = run({"ingham-sweep", "--seed", "13", "--out", out, "--override", "T=0.4",
                    "--override", "trials=20", "--override", "n_max_list=[10,20]"});
    CHECK(code == 0);
    auto rep = nlohmann::json::parse(slurp(out + "/ingham_sweep.json"));
    double m10 = rep["rows"][0]["min_ratio"].get<double>();
    double m20 = rep["rows"][1]["min_ratio"].get<double>();
    CHECK(m10 > 0.0);
    CHECK(m20 > 0.0);
    CHECK(m20 <= 1.1 * m10);
}

TEST_CASE("reduce-report emits per-stage diagnostics") {
    std::string out = fresh_dir("reduce_report");
    int code = run({"reduce-report", "--seed", "17", "--out", out, "--override", "grid.n=32",
                    "--override", "T=0.1", "--override", "dt=0.003125", "--override",
                    "amplitude=0.001", "--override", "probe_ks=[4,6,8]"});
    CHECK(code == 0);
    auto rep = nlohmann::json::parse(slurp(out + "/reduce_report.json"));
    CHECK(rep["stages"].size() == 8);
    for (const auto& row : rep["stages"]) {
        CHECK(row["pass"].get<bool>());
        CHECK(row["probes"].size() == 3);
    }
    for (const auto& r : rep["eq_residuals"]) CHECK(r.get<double>() <= 1e-12);
}

TEST_CASE("atomic writes leave no temp files") {
    std::string out = fresh_dir("atomic");
    write_file_atomic(out + "/x.json", "{}\n");
    CHECK(fs::exists(out + "/x.json"));
    CHECK(!fs::exists(out + "/x.json.tmp"));
}

TEST_CASE("thread cap respects the environment variable") {
    CHECK(max_threads() >= 1);
    std::vector<int> hits(8, 0);
    parallel_for(8, [&](size_t i) { hits[i] = static_cast<int>(i) + 1; });
    for (int i = 0; i < 8; ++i) CHECK(hits[static_cast<size_t>(i)] == i + 1);
}
