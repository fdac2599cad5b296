#pragma once

#include <fstream>
#include <string>

#include "sbb/dynamics.hpp"
#include "sbb/io.hpp"
#include "sbb/limits.hpp"
#include "sbb/solvers.hpp"

namespace sbb {

inline constexpr const char* kSchemaVersion = "1";

inline json to_json(const Potential& f, const std::string& support_ref) {
    return json{{"support_ref", support_ref},
                {"values", f.values},
                {"normalization",
                 f.normalization == Normalization::NuMeanZero ? "nu-mean-zero" : "raw"}};
}

inline json to_json(const Coupling& c) {
    return json{{"rows", c.rows}, {"cols", c.cols}, {"mass", c.mass}};
}

inline json to_json(const WorkCounters& w) {
    return json{{"outer_iterations", w.outer_iterations},
                {"inner_iterations", w.inner_iterations},
                {"prox_iterations", w.prox_iterations},
                {"objective_evaluations", w.objective_evaluations}};
}

inline json solution_to_json(const SBSolution& sol) {
    json j{{"schema_version", kSchemaVersion},
           {"beta", sol.beta},
           {"value", sol.value},
           {"dual_trace", sol.dual_trace},
           {"f_star", to_json(sol.f_star, "nu")},
           {"alpha_star", to_json(sol.alpha_star)},
           {"coupling", to_json(sol.coupling)},
           {"converged", sol.converged},
           {"iterations", sol.iterations},
           {"timings", to_json(sol.work)}};
    if (sol.has_rho) j["rho_star"] = to_json(sol.rho_star);
    return j;
}

inline void write_trace_csv(const std::string& path, const SBSolution& sol) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "iteration,dual_value\n";
    for (std::size_t i = 0; i < sol.dual_trace.size(); ++i)
        out << i << "," << format_double(sol.dual_trace[i]) << "\n";
}

inline json limit_report_to_json(const LimitReport& rep) {
    json targets{{"brenier_strassen", rep.brenier_strassen_target},
                 {"bass_rescaled", rep.bass_rescaled_target}};
    if (rep.has_schrodinger_target) targets["schrodinger"] = rep.schrodinger_target;
    json deviations{{"brenier_strassen", rep.dev_brenier_strassen}, {"bass_rescaled", rep.dev_bass}};
    if (rep.has_schrodinger_target) deviations["schrodinger"] = rep.dev_schrodinger;
    return json{{"schema_version", kSchemaVersion},
                {"beta_grid", rep.beta_grid},
                {"values", rep.values},
                {"limit_targets", targets},
                {"deviations", deviations},
                {"monotone_flags",
                 {{"value_nondecreasing", rep.monotone_value},
                  {"value_over_beta_nonincreasing", rep.monotone_value_over_beta},
                  {"shifted_over_beta_nonincreasing", rep.monotone_shifted_over_beta}}}};
}

// Long format: one row per (beta, target) pair.
inline void write_limit_csv(const std::string& path, const LimitReport& rep) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "beta,value,target,deviation\n";
    for (std::size_t i = 0; i < rep.beta_grid.size(); ++i) {
        const std::string b = format_double(rep.beta_grid[i]);
        const std::string v = format_double(rep.values[i]);
        if (rep.has_schrodinger_target)
            out << b << "," << v << ",schrodinger," << format_double(rep.dev_schrodinger[i])
                << "\n";
        out << b << "," << v << ",brenier_strassen,"
            << format_double(rep.dev_brenier_strassen[i]) << "\n";
        out << b << "," << v << ",bass_rescaled," << format_double(rep.dev_bass[i]) << "\n";
    }
}

inline json ensemble_to_json(const PathEnsemble& ens) {
    const auto est = dynamic_cost_estimate(ens, ens.beta);
    double min_eig = kInf;
    for (double e : ens.min_eig_b) min_eig = std::min(min_eig, e);
    return json{{"schema_version", kSchemaVersion},
                {"beta", ens.beta},
                {"n_paths", ens.n_paths},
                {"n_steps", ens.n_steps},
                {"dim", ens.dim},
                {"stored_paths", ens.stored_paths},
                {"seed", ens.seed},
                {"mean_cost", est.mean},
                {"std_error", est.std_error},
                {"min_volatility_eigenvalue", min_eig}};
}

inline void write_paths_csv(const std::string& path, const PathEnsemble& ens) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "path_id,t";
    for (std::size_t ax = 0; ax < ens.dim; ++ax) out << ",x" << (ax + 1);
    for (std::size_t ax = 0; ax < ens.dim; ++ax) out << ",y" << (ax + 1);
    out << "\n";
    for (std::size_t p = 0; p < ens.stored_paths; ++p)
        for (std::size_t t = 0; t <= ens.n_steps; ++t) {
            out << p << "," << format_double(ens.times[t]);
            for (std::size_t ax = 0; ax < ens.dim; ++ax)
                out << "," << format_double(ens.at_x(p, t, ax));
            for (std::size_t ax = 0; ax < ens.dim; ++ax)
                out << "," << format_double(ens.at_y(p, t, ax));
            out << "\n";
        }
}

}  // namespace sbb
