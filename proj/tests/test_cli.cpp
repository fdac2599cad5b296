#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sbb/io.hpp"

namespace fs = std::filesystem;
using sbb::json;

namespace {

std::string cli_path() {
    const char* p = std::getenv("SBB_CLI");
    REQUIRE(p != nullptr);
    return p;
}

int run_cli(const std::string& args) {
    const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("sbb_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_point_pair(const fs::path& dir) {
    write_file(dir / "mu.csv", "x1,weight\n0,1\n");
    write_file(dir / "nu.csv", "x1,weight\n1,1\n");
    return dir;
}

json make_config(const fs::path& dir, const std::string& command, double beta) {
    return json{{"schema_version", "1"},
                {"command", command},
                {"mu_path", (dir / "mu.csv").string()},
                {"nu_path", (dir / "nu.csv").string()},
                {"beta", beta},
                {"out_dir", (dir / "out").string()}};
}

}  // namespace

TEST_CASE("cli solve on the point pair reproduces the closed form") {
    const auto dir = fresh_dir("solve");
    write_point_pair(dir);
    write_file(dir / "cfg.json", make_config(dir, "solve", 1.0).dump());
    REQUIRE(run_cli("--config " + (dir / "cfg.json").string()) == 0);

    const json sol = json::parse(slurp(dir / "out" / "solution.json"));
    CHECK(sol.at("converged").get<bool>());
    CHECK(sol.at("value").get<double>() ==
          Catch::Approx(0.5 + 0.5 * std::log(2.0)).margin(1e-4));
    CHECK(sol.at("schema_version").get<std::string>() == "1");

    // trace.csv has iterations + 1 data rows
    const std::string trace = slurp(dir / "out" / "trace.csv");
    const auto rows = static_cast<std::size_t>(std::count(trace.begin(), trace.end(), '\n'));
    CHECK(rows == sol.at("iterations").get<std::size_t>() + 2);  // header + n + 1
}

TEST_CASE("cli export is byte-identical across reruns") {
    const auto dir = fresh_dir("determinism");
    write_point_pair(dir);
    json cfg = make_config(dir, "simulate", 1.0);
    cfg["simulate"] =
        json{{"n_paths", 200}, {"n_steps", 200}, {"seed", 7}, {"path_store_limit", 16}};
    write_file(dir / "cfg.json", cfg.dump());

    REQUIRE(run_cli("--config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "a").string()) == 0);
    REQUIRE(run_cli("--config " + (dir / "cfg.json").string() + " --out " +
                    (dir / "b").string()) == 0);
    for (const char* name : {"solution.json", "trace.csv", "ensemble.json", "paths.csv"}) {
        CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
        CHECK(!slurp(dir / "a" / name).empty());
    }
}

TEST_CASE("cli rejects missing input without writing artifacts") {
    const auto dir = fresh_dir("missing");
    json cfg{{"schema_version", "1"},
             {"command", "solve"},
             {"mu_path", (dir / "nope.csv").string()},
             {"nu_path", (dir / "nope.csv").string()},
             {"beta", 1.0},
             {"out_dir", (dir / "out").string()}};
    write_file(dir / "cfg.json", cfg.dump());
    CHECK(run_cli("--config " + (dir / "cfg.json").string()) == 1);
    CHECK(!fs::exists(dir / "out" / "solution.json"));
}

TEST_CASE("cli reports malformed csv rows") {
    const auto dir = fresh_dir("badcsv");
    write_file(dir / "mu.csv", "x1,weight\n0,1\n");
    write_file(dir / "nu.csv", "x1,weight\n1,not_a_number\n");
    write_file(dir / "cfg.json", make_config(dir, "solve", 1.0).dump());
    CHECK(run_cli("--config " + (dir / "cfg.json").string()) == 1);
}

TEST_CASE("cli flags usage errors") {
    const auto dir = fresh_dir("usage");
    write_point_pair(dir);

    // simulate without a seed is rejected
    json cfg = make_config(dir, "simulate", 1.0);
    cfg["simulate"] = json{{"n_paths", 100}, {"n_steps", 150}};
    write_file(dir / "cfg.json", cfg.dump());
    CHECK(run_cli("--config " + (dir / "cfg.json").string()) == 1);

    // limits requires a beta grid, not a scalar beta
    write_file(dir / "cfg2.json", make_config(dir, "limits", 1.0).dump());
    CHECK(run_cli("--config " + (dir / "cfg2.json").string()) == 1);

    // negative beta
    write_file(dir / "cfg3.json", make_config(dir, "solve", -1.0).dump());
    CHECK(run_cli("--config " + (dir / "cfg3.json").string()) == 1);
}

TEST_CASE("cli exit code 2 on non-convergence, artifacts preserved") {
    const auto dir = fresh_dir("noconv");
    write_file(dir / "mu.csv", "x1,weight\n-0.5,0.5\n0.75,0.5\n");
    write_file(dir / "nu.csv", "x1,weight\n-1.1,0.3\n0.2,0.45\n1.3,0.25\n");
    json cfg = make_config(dir, "solve", 0.7);
    cfg["solver"] = json{{"max_outer_iters", 1}, {"tol_outer", 1e-13}};
    write_file(dir / "cfg.json", cfg.dump());
    CHECK(run_cli("--config " + (dir / "cfg.json").string()) == 2);
    const json sol = json::parse(slurp(dir / "out" / "solution.json"));
    CHECK_FALSE(sol.at("converged").get<bool>());
    CHECK(fs::exists(dir / "out" / "trace.csv"));
}

TEST_CASE("cli limits writes one csv row per beta and target") {
    const auto dir = fresh_dir("limits");
    write_point_pair(dir);
    json cfg{{"schema_version", "1"},
             {"command", "limits"},
             {"mu_path", (dir / "mu.csv").string()},
             {"nu_path", (dir / "nu.csv").string()},
             {"beta_grid", {0.5, 1.0, 2.0}},
             {"out_dir", (dir / "out").string()}};
    write_file(dir / "cfg.json", cfg.dump());
    REQUIRE(run_cli("--config " + (dir / "cfg.json").string()) == 0);
    const std::string csv = slurp(dir / "out" / "limit_report.csv");
    const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
    // atomic target: no schrodinger row; 3 betas x 2 targets + header
    CHECK(rows == 3 * 2 + 1);
    const json rep = json::parse(slurp(dir / "out" / "limit_report.json"));
    CHECK(rep.at("monotone_flags").at("value_nondecreasing").get<bool>());
}

TEST_CASE("cli limits with a grid target includes the schrodinger rows") {
    const auto dir = fresh_dir("gridlimits");
    write_file(dir / "mu.csv", "x1,weight\n0,1\n");
    // grid-measure JSON target: 41-cell discretization of a unit Gaussian
    json grid{{"origin", {-5.8536585365853657}},
              {"spacing", {0.29268292682926829}},
              {"shape", {41}},
              {"weights", json::array()}};
    double s = 0.0;
    std::vector<double> w(41);
    for (int i = 0; i < 41; ++i) {
        const double z = -5.8536585365853657 + 0.29268292682926829 * i;
        w[i] = std::exp(-0.5 * z * z);
        s += w[i];
    }
    for (double& x : w) x /= s;
    grid["weights"] = w;
    write_file(dir / "nu.json", grid.dump());

    json cfg{{"schema_version", "1"},
             {"command", "limits"},
             {"mu_path", (dir / "mu.csv").string()},
             {"nu_path", (dir / "nu.json").string()},
             {"beta_grid", {0.5, 1.0}},
             {"out_dir", (dir / "out").string()}};
    write_file(dir / "cfg.json", cfg.dump());
    REQUIRE(run_cli("--config " + (dir / "cfg.json").string()) == 0);
    const json rep = json::parse(slurp(dir / "out" / "limit_report.json"));
    CHECK(rep.at("limit_targets").contains("schrodinger"));
    // centered Gaussian target: everything is near zero
    CHECK(std::abs(rep.at("limit_targets").at("schrodinger").get<double>()) < 1e-2);
    const std::string csv = slurp(dir / "out" / "limit_report.csv");
    const auto rows = static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n'));
    CHECK(rows == 2 * 3 + 1);  // two betas, three targets, one header
}

TEST_CASE("cli beta override wins over the config") {
    const auto dir = fresh_dir("override");
    write_point_pair(dir);
    write_file(dir / "cfg.json", make_config(dir, "solve", 1.0).dump());
    REQUIRE(run_cli("--config " + (dir / "cfg.json").string() + " --beta 10") == 0);
    const json sol = json::parse(slurp(dir / "out" / "solution.json"));
    CHECK(sol.at("beta").get<double>() == 10.0);
    CHECK(sol.at("value").get<double>() ==
          Catch::Approx(0.5 + 0.5 * std::log(11.0)).margin(1e-3));
}
