// Batch front end: solve / simulate / limits / verify driven by a JSON
// config, with artifact export. Exit codes: 0 success, 1 usage or input
// error, 2 non-convergence (partial artifacts are still written).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sbb/io.hpp"
#include "sbb/serialize.hpp"
#include "sbb/verify.hpp"

namespace fs = std::filesystem;
using namespace sbb;

namespace {

struct RunConfig {
    std::string command;
    std::string mu_path, nu_path;
    std::optional<double> beta;
    std::vector<double> beta_grid;
    SolverOptions solver;
    std::size_t n_paths = 1000;
    std::size_t n_steps = 500;
    std::optional<std::uint64_t> sim_seed;
    std::size_t path_store_limit = 256;
    std::string out_dir = ".";
    std::uint64_t seed = 20260810;
};

RunConfig parse_config(const json& j) {
    RunConfig cfg;
    if (j.contains("schema_version") && j.at("schema_version").get<std::string>() != kSchemaVersion)
        throw std::invalid_argument("config: unsupported schema_version");
    cfg.command = j.at("command").get<std::string>();
    if (cfg.command != "solve" && cfg.command != "simulate" && cfg.command != "limits" &&
        cfg.command != "verify")
        throw std::invalid_argument("config: command must be solve|simulate|limits|verify");
    if (j.contains("mu_path")) cfg.mu_path = j.at("mu_path").get<std::string>();
    if (j.contains("nu_path")) cfg.nu_path = j.at("nu_path").get<std::string>();
    if (j.contains("beta")) cfg.beta = j.at("beta").get<double>();
    if (j.contains("beta_grid")) cfg.beta_grid = j.at("beta_grid").get<std::vector<double>>();
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        if (s.contains("tol_inner")) cfg.solver.tol_inner = s.at("tol_inner").get<double>();
        if (s.contains("tol_outer")) cfg.solver.tol_outer = s.at("tol_outer").get<double>();
        if (s.contains("max_inner_iters"))
            cfg.solver.max_inner_iters = s.at("max_inner_iters").get<std::size_t>();
        if (s.contains("max_outer_iters"))
            cfg.solver.max_outer_iters = s.at("max_outer_iters").get<std::size_t>();
        if (s.contains("quad_nodes_1d"))
            cfg.solver.quad.max_nodes_1d = s.at("quad_nodes_1d").get<std::size_t>();
        if (s.contains("quad_nodes_2d"))
            cfg.solver.quad.max_nodes_2d = s.at("quad_nodes_2d").get<std::size_t>();
        if (s.contains("quad_lump_scale"))
            cfg.solver.quad.lump_scale = s.at("quad_lump_scale").get<double>();
    }
    cfg.solver.seed = cfg.seed;
    if (j.contains("simulate")) {
        const auto& s = j.at("simulate");
        if (s.contains("n_paths")) cfg.n_paths = s.at("n_paths").get<std::size_t>();
        if (s.contains("n_steps")) cfg.n_steps = s.at("n_steps").get<std::size_t>();
        if (s.contains("seed")) cfg.sim_seed = s.at("seed").get<std::uint64_t>();
        if (s.contains("path_store_limit"))
            cfg.path_store_limit = s.at("path_store_limit").get<std::size_t>();
    }
    return cfg;
}

void validate(const RunConfig& cfg) {
    if (cfg.command == "verify") return;
    if (cfg.mu_path.empty() || cfg.nu_path.empty())
        throw std::invalid_argument("config: mu_path and nu_path are required");
    for (const auto& p : {cfg.mu_path, cfg.nu_path})
        if (!fs::exists(p)) throw std::invalid_argument(p + ": input file does not exist");
    if (cfg.command == "limits") {
        if (cfg.beta_grid.empty() || cfg.beta)
            throw std::invalid_argument("config: limits needs beta_grid (and no scalar beta)");
        for (double b : cfg.beta_grid)
            if (b <= 0.0) throw std::invalid_argument("config: beta_grid entries must be positive");
    } else {
        if (!cfg.beta || !cfg.beta_grid.empty())
            throw std::invalid_argument("config: " + cfg.command +
                                        " needs a scalar beta (and no beta_grid)");
        if (*cfg.beta <= 0.0) throw std::invalid_argument("config: beta must be positive");
    }
    if (cfg.command == "simulate" && !cfg.sim_seed)
        throw std::invalid_argument(
            "config: simulate requires simulate.seed (no wall-clock entropy)");
    cfg.solver.validate();
}

int run(const RunConfig& cfg) {
    if (cfg.command == "verify") {
        const auto rep = run_verification(cfg.seed);
        fs::create_directories(cfg.out_dir);
        write_json_file((fs::path(cfg.out_dir) / "verify.json").string(),
                        verify_report_to_json(rep));
        for (const auto& c : rep.checks)
            std::cout << (c.pass ? "PASS " : "FAIL ") << c.name
                      << "  max_error=" << format_double(c.max_error)
                      << " tol=" << format_double(c.tolerance) << "\n";
        return rep.all_pass ? 0 : 2;
    }

    const auto mu = load_measure(cfg.mu_path);
    const auto nu = load_measure(cfg.nu_path);
    fs::create_directories(cfg.out_dir);

    if (cfg.command == "limits") {
        if (mu.atoms.size() != 1)
            throw std::invalid_argument("limits: mu must be a single atom (the source point x)");
        const Vec x = mu.atoms.atom_vec(0);
        std::optional<GridMeasure> grid;
        if (nu.is_grid) grid = nu.grid;
        const auto rep = limit_sweep(x, nu.atoms, grid, cfg.beta_grid, cfg.solver);
        write_json_file((fs::path(cfg.out_dir) / "limit_report.json").string(),
                        limit_report_to_json(rep));
        write_limit_csv((fs::path(cfg.out_dir) / "limit_report.csv").string(), rep);
        std::cout << "limits: wrote limit_report.json/.csv\n";
        return 0;
    }

    const auto sol = sb_solve(mu.atoms, nu.atoms, *cfg.beta, cfg.solver);
    write_json_file((fs::path(cfg.out_dir) / "solution.json").string(), solution_to_json(sol));
    write_trace_csv((fs::path(cfg.out_dir) / "trace.csv").string(), sol);
    std::cout << "solve: value=" << format_double(sol.value)
              << " converged=" << (sol.converged ? "true" : "false")
              << " iterations=" << sol.iterations << "\n";

    if (cfg.command == "simulate") {
        if (!sol.converged) return 2;  // partial artifacts already written
        const auto ens = simulate_sb(sol, cfg.n_paths, cfg.n_steps, *cfg.sim_seed,
                                     cfg.path_store_limit);
        write_json_file((fs::path(cfg.out_dir) / "ensemble.json").string(), ensemble_to_json(ens));
        write_paths_csv((fs::path(cfg.out_dir) / "paths.csv").string(), ens);
        const auto est = dynamic_cost_estimate(ens, sol.beta);
        std::cout << "simulate: mean_cost=" << format_double(est.mean)
                  << " std_error=" << format_double(est.std_error) << "\n";
    }
    return sol.converged ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Schrödinger-Bass bridge solver: static weak-transport dual ascent, "
        "coupling recovery, semimartingale simulation, and limit sweeps"};
    app.footer(
        "Config defaults (all overridable in the JSON):\n"
        "  solver.tol_inner        1e-9   sup-norm of the inner dual gradient\n"
        "  solver.tol_outer        1e-8   relative dual gap and alpha movement\n"
        "  solver.max_inner_iters  5000\n"
        "  solver.max_outer_iters  200\n"
        "  solver.quad_nodes_1d    401    base 1D node budget (auto-refined)\n"
        "  solver.quad_nodes_2d    101    per-axis 2D budget\n"
        "  solver.quad_lump_scale  2e-3   marginal-recovery spacing rule; 0 disables\n"
        "  simulate.n_paths        1000\n"
        "  simulate.n_steps        500\n"
        "  simulate.path_store_limit 256  trajectories kept for paths.csv\n"
        "  simulate.seed           (required; no wall-clock entropy)\n"
        "Exit codes: 0 success, 1 usage/input error, 2 non-convergence.");
    std::string config_path;
    std::optional<double> beta_override;
    std::optional<std::uint64_t> seed_override;
    std::optional<std::string> out_override;
    app.add_option("--config", config_path, "JSON run configuration (schema_version 1)")
        ->required();
    app.add_option("--beta", beta_override, "override the config beta");
    app.add_option("--seed", seed_override, "override the config seed (and simulate.seed)");
    app.add_option("--out", out_override, "override the output directory");
    CLI11_PARSE(app, argc, argv);

    try {
        std::ifstream in(config_path);
        if (!in) {
            std::cerr << config_path << ": cannot open config\n";
            return 1;
        }
        json j = json::parse(in);
        RunConfig cfg = parse_config(j);
        if (beta_override) {
            cfg.beta = *beta_override;
            cfg.beta_grid.clear();
        }
        if (seed_override) {
            cfg.seed = *seed_override;
            cfg.solver.seed = *seed_override;
            if (cfg.sim_seed) cfg.sim_seed = *seed_override;
        }
        if (out_override) cfg.out_dir = *out_override;
        validate(cfg);
        return run(cfg);
    } catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const CsvError& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
