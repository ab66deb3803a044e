#include "doctest.h"
#include "kolmo/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace kolmo;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("kolmo_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("minimal config gets defaults") {
    const auto cfg = parse_config(R"({"model": "kolmogorov", "T": 0.5, "checks": ["kernel"]})");
    CHECK(cfg.model == "kolmogorov");
    CHECK(cfg.horizon == 0.5);
    CHECK(cfg.checks == std::vector<std::string>{"kernel"});
    CHECK(cfg.seed == 1);
    CHECK(cfg.budgets.paths == Budgets{}.paths);
    CHECK(cfg.budgets.gh_order == Budgets{}.gh_order);
    CHECK(cfg.output == ".");
    CHECK_FALSE(cfg.timing);
    CHECK(cfg.build_spec().n == 2);
}

TEST_CASE("schema violations name the field") {
    const auto unknown_model = error_of(R"({"model": "heston"})");
    CHECK(unknown_model.find("catalog") != std::string::npos);
    CHECK(unknown_model.find("nonlinear-kolmogorov") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "T": 1.5})").find("config.T") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "T": 0})").find("config.T") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "horizon": 1})").find("'horizon'") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "checks": ["kernel", "spectra"]})").find("spectra") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "budgets": {"paths": 0}})").find("budgets.paths") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "budgets": {"path": 10}})").find("'path'") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "seed": -3})").find("config.seed") != std::string::npos);
    CHECK(error_of(R"({"T": 0.5})").find("config.model") != std::string::npos);
    CHECK(error_of(R"({"model": "kolmogorov", "diffusion_modulation": 1.5})").find("diffusion_modulation") !=
          std::string::npos);
}

TEST_CASE("parse errors report line and column") {
    const std::string text = "{\n  \"model\": \"kolmogorov\",\n  \"T\": ,\n}";
    const auto msg = error_of(text);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("column 8") != std::string::npos);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("inline model descriptor") {
    const auto cfg = parse_config(R"({
        "model": {"name": "tilted", "n": 2, "d": 1,
                  "drift": [{"component": 1, "coef": 1.0, "var": 0},
                            {"component": 0, "coef": -0.5, "var": 1, "kind": "sin"}],
                  "diffusion": {"base": [[2.0]], "amplitude": 0.2}},
        "checks": ["flows"]})");
    CHECK(cfg.model == "tilted");
    const auto spec = cfg.build_spec();
    CHECK(spec.n == 2);
    CHECK_FALSE(spec.affine.has_value());
    Vector x(2);
    x << 0.0, 0.5;
    CHECK(eval_drift(spec, 0.0, x)(0) == doctest::Approx(-0.5 * std::sin(0.5)));
    // drift violating the chain dependence
    CHECK(error_of(R"({"model": {"n": 3, "drift": [{"component": 2, "coef": 1.0, "var": 0}]}})")
              .find("config.model") != std::string::npos);
    CHECK(error_of(R"({"model": {"n": 2, "drift": [{"component": 1, "kind": "tan"}]}})").find("kind") !=
          std::string::npos);
}

TEST_CASE("rows pass iff value <= bound") {
    CHECK(make_row("s", "c", "x", 1.0, 2.0, 1, 1).pass);
    CHECK(make_row("s", "c", "x", 2.0, 2.0, 1, 1).pass);
    CHECK_FALSE(make_row("s", "c", "x", 2.5, 2.0, 1, 1).pass);
    CHECK_FALSE(make_row("s", "c", "x", std::numeric_limits<double>::quiet_NaN(), 2.0, 1, 1).pass);
    std::ostringstream os;
    write_report_csv(os, {make_row("s", "c", "a, b", 1.0, 2.0, 3, 4)});
    CHECK(os.str() == "suite,check,statistic,value,bound,pass,sample_size,seed,wall_time\n"
                      "s,c,\"a, b\",1,2,true,3,4,0\n");
}

TEST_CASE("empty checks give an empty successful report") {
    auto cfg = parse_config(R"({"model": "kolmogorov", "checks": []})");
    cfg.output = scratch("empty").string();
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    CHECK(read_file(fs::path(cfg.output) / "report.csv") ==
          "suite,check,statistic,value,bound,pass,sample_size,seed,wall_time\n");
    CHECK(fs::exists(fs::path(cfg.output) / "summary.txt"));
}

TEST_CASE("kernel and flows suites pass on kolmogorov") {
    auto cfg = parse_config(R"({"model": "kolmogorov", "checks": ["flows", "kernel"]})");
    cfg.output = scratch("kernel").string();
    std::ostringstream log;
    CHECK(run_experiment(cfg, log) == 0);
    for (const auto& suite : cfg.checks)
        for (const auto& row : run_suite(cfg, suite)) {
            INFO(row.suite << "/" << row.check << " = " << row.value << " bound " << row.bound);
            CHECK(row.pass);
        }
}

TEST_CASE("reports are deterministic and suites are isolated") {
    const std::string text = R"({"model": "nonlinear-kolmogorov", "T": 0.5, "seed": 9,
        "checks": ["kernel", "montecarlo"], "budgets": {"paths": 400, "steps": 16}})";
    auto cfg = parse_config(text);
    std::ostringstream log;
    cfg.output = scratch("det_a").string();
    run_experiment(cfg, log);
    const auto a = read_file(fs::path(cfg.output) / "report.csv");
    cfg.output = scratch("det_b").string();
    run_experiment(cfg, log);
    const auto b = read_file(fs::path(cfg.output) / "report.csv");
    CHECK(a == b);
    CHECK(a.find(",0\n") != std::string::npos);  // wall time is off

    // A suite that fails (too few paths for the envelope check) leaves the others untouched.
    auto failing = cfg;
    failing.budgets.paths = 3;
    const auto bad = run_suite(failing, "montecarlo");
    CHECK(std::any_of(bad.begin(), bad.end(), [](const ReportRow& r) { return !r.pass; }));
    const auto k1 = run_suite(cfg, "kernel");
    const auto k2 = run_suite(failing, "kernel");
    REQUIRE(k1.size() == k2.size());
    for (std::size_t i = 0; i < k1.size(); ++i) CHECK(k1[i].value == k2[i].value);

    failing.checks = {"montecarlo", "kernel"};
    failing.output = scratch("det_c").string();
    CHECK(run_experiment(failing, log) == 1);
    CHECK(read_file(fs::path(failing.output) / "report.csv").find("kernel,normalization") != std::string::npos);
}

TEST_CASE("command line entry point") {
    const char* exe = std::getenv("KOLMO_CLI");
    if (!exe) {
        MESSAGE("KOLMO_CLI not set; skipping the binary checks");
        return;
    }
    const auto dir = scratch("binary");
    const auto config = dir / "config.json";
    std::ofstream(config) << R"({"model": "brownian", "T": 1.0, "checks": ["montecarlo"]})";
    const auto out = dir / "out";
    const std::string base = std::string(exe) + " run " + config.string() + " --out " + out.string();
    CHECK(std::system((base + " --suite flows --seed 5 > /dev/null").c_str()) == 0);
    const auto report = read_file(out / "report.csv");
    CHECK(report.find("flows,resolvent_determinant") != std::string::npos);
    CHECK(report.find("montecarlo") == std::string::npos);

    std::ofstream(dir / "bad.json") << R"({"model": "kolmogorov", "T": 2})";
    const int rc = std::system((std::string(exe) + " run " + (dir / "bad.json").string() + " 2> /dev/null").c_str());
    CHECK(WEXITSTATUS(rc) == 2);
}
