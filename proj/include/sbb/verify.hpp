#pragma once

#include <string>
#include <vector>

#include "sbb/dynamics.hpp"
#include "sbb/io.hpp"
#include "sbb/limits.hpp"
#include "sbb/oracle.hpp"
#include "sbb/rng.hpp"
#include "sbb/solvers.hpp"

namespace sbb {

// Self-verification: every oracle is compared with the corresponding
// main-path operation on randomized desk instances. Shipped with the
// library so end users can re-run the agreement suite.
struct VerifyCheck {
    std::string name;
    double max_error = 0.0;
    double tolerance = 0.0;
    std::size_t instances = 0;
    bool pass = false;
};

struct VerifyReport {
    std::vector<VerifyCheck> checks;
    bool all_pass = true;
};

namespace detail {

inline DiscreteMeasure verify_random_measure(CounterRng& rng, std::size_t max_atoms) {
    const std::size_t n = 2 + rng.integer(max_atoms - 1);
    std::vector<double> atoms, w;
    for (std::size_t i = 0; i < n; ++i) {
        atoms.push_back(-1.8 + 0.45 * static_cast<double>(i) + rng.uniform(-0.1, 0.1));
        w.push_back(rng.uniform(0.15, 1.0));
    }
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    return DiscreteMeasure(1, std::move(atoms), std::move(w));
}

}  // namespace detail

inline VerifyReport run_verification(std::uint64_t seed = 20260810) {
    VerifyReport rep;
    auto add = [&](std::string name, double err, double tol, std::size_t instances) {
        VerifyCheck c{std::move(name), err, tol, instances, err <= tol};
        rep.all_pass = rep.all_pass && c.pass;
        rep.checks.push_back(std::move(c));
    };

    {  // closed-form single-atom value against the solver
        CounterRng rng(seed + 1);
        double err = 0.0;
        for (int i = 0; i < 6; ++i) {
            const Vec x{rng.uniform(-1.0, 1.0)};
            const Vec m{rng.uniform(-1.0, 1.0)};
            const double beta = std::exp(rng.uniform(-1.5, 1.5));
            const double got = cost_sb(x, DiscreteMeasure::dirac(m), beta);
            err = std::max(err, std::abs(got - sb_single_atom_value(x, m, beta)));
        }
        add("sb_value_vs_gaussian_closed_form", err, 1e-4, 6);
    }

    {  // brute-force mean-constrained minimization against cost_sb
        CounterRng rng(seed + 2);
        double err = 0.0;
        for (int i = 0; i < 6; ++i) {
            const auto rho = detail::verify_random_measure(rng, 4);
            const Vec x{rng.uniform(-0.8, 0.8)};
            const double beta = std::exp(rng.uniform(-0.7, 0.7));
            const double solver = cost_sb(x, rho, beta);
            const auto oracle = brute_force_infconv(x, rho, beta);
            err = std::max(err, std::abs(solver - oracle.value));
        }
        add("sb_value_vs_brute_force_infconv", err, 8e-3, 6);
    }

    {  // gradient of T_beta against central differences
        CounterRng rng(seed + 3);
        const auto nu = detail::verify_random_measure(rng, 5);
        const double beta = 1.2;
        auto f = semiconcave_envelope(q_beta_potential(nu, beta), beta);
        const auto quad = default_quadrature(nu, beta, {});
        const auto table = moreau_at_nodes(f, beta, quad);
        std::vector<Vec> pts;
        for (int i = 0; i < 8; ++i) pts.push_back({rng.uniform(-2.0, 2.0)});
        const double err = finite_diff_check(
            [&](const Vec& y) {
                return t_beta_from_table(table.values, quad, std::span<const double>(y))[0];
            },
            [&](const Vec& y) {
                return t_beta_gradient(table.values, quad, std::span<const double>(y));
            },
            pts);
        add("grad_t_beta_vs_finite_differences", err, 1e-4, 8);
    }

    {  // gradient of the smooth potential u against central differences
        CounterRng rng(seed + 4);
        const auto nu = detail::verify_random_measure(rng, 5);
        const double beta = 0.9;
        auto f = semiconcave_envelope(zero_potential(nu), beta);
        const SmoothPotential u(f, beta, default_quadrature(nu, beta, {}));
        std::vector<Vec> pts;
        for (int i = 0; i < 8; ++i) pts.push_back({rng.uniform(-1.5, 1.5)});
        const double err = finite_diff_check([&](const Vec& x) { return u.eval(x).value; },
                                             [&](const Vec& x) { return u.eval(x).gradient; }, pts);
        add("grad_u_vs_finite_differences", err, 1e-4, 8);
    }

    {  // exact LP against the sorted 1D coupling
        CounterRng rng(seed + 5);
        double err = 0.0;
        for (int i = 0; i < 10; ++i) {
            const auto a = detail::verify_random_measure(rng, 6);
            const auto b = detail::verify_random_measure(rng, 6);
            const auto sorted = wasserstein2_sq_sorted_1d(a, b);
            std::vector<double> cost(a.size() * b.size());
            for (std::size_t r = 0; r < a.size(); ++r)
                for (std::size_t c = 0; c < b.size(); ++c)
                    cost[r * b.size() + c] = sq_dist(a.atom(r), b.atom(c));
            const auto plan = transport_lp(cost, a.size(), b.size(), a.weights(), b.weights());
            double v = 0.0;
            for (std::size_t e = 0; e < cost.size(); ++e) v += plan.mass[e] * cost[e];
            err = std::max(err, std::abs(v - sorted.value));
        }
        add("w2_lp_vs_sorted_coupling", err, 1e-9, 10);
    }

    {  // Sinkhorn against the Gaussian KL closed form
        CounterRng rng(seed + 6);
        double err = 0.0;
        for (int i = 0; i < 4; ++i) {
            const double m = rng.uniform(-1.0, 1.0);
            const auto res =
                sinkhorn_eot(DiscreteMeasure::dirac({0.0}), gaussian_grid({m}, 1.0, 241));
            err = std::max(err, std::abs(res.value - kl_gaussian_vs_unit_1d(m, 1.0, 0.0)));
        }
        add("sinkhorn_vs_gaussian_kl", err, 1.5e-3, 4);
    }

    {  // transform shift identities
        CounterRng rng(seed + 7);
        const auto nu = detail::verify_random_measure(rng, 5);
        const double beta = 1.4, c = 0.83;
        auto f = semiconcave_envelope(zero_potential(nu), beta);
        auto fc = f;
        for (double& v : fc.values) v += c;
        const auto quad = default_quadrature(nu, beta, {});
        std::vector<double> ys{-1.1, 0.0, 0.9};
        const auto t0 = t_beta(f, beta, ys, quad);
        const auto t1 = t_beta(fc, beta, ys, quad);
        const auto m0 = moreau_transform(f, beta, ys);
        const auto m1 = moreau_transform(fc, beta, ys);
        double err = 0.0;
        for (std::size_t q = 0; q < ys.size(); ++q) {
            err = std::max(err, std::abs(t1[q] - (t0[q] - c)));
            err = std::max(err, std::abs(m1.values[q] - (m0.values[q] - c)));
        }
        add("transform_shift_identities", err, 1e-10, 3);
    }

    return rep;
}

inline json verify_report_to_json(const VerifyReport& rep) {
    json checks = json::array();
    for (const auto& c : rep.checks)
        checks.push_back(json{{"name", c.name},
                              {"max_error", c.max_error},
                              {"tolerance", c.tolerance},
                              {"instances", c.instances},
                              {"pass", c.pass}});
    return json{{"schema_version", kSchemaVersion}, {"checks", checks}, {"all_pass", rep.all_pass}};
}

}  // namespace sbb
