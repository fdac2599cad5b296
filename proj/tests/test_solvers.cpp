#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "sbb/oracle.hpp"
#include "sbb/rng.hpp"
#include "sbb/solvers.hpp"

using namespace sbb;

namespace {

// Desk instances: atoms on a jittered lattice so that argmin regions stay
// resolvable by the quadrature (separation >= 0.2).
DiscreteMeasure random_measure_1d(CounterRng& rng, std::size_t max_atoms = 10) {
    const std::size_t n = 2 + rng.integer(max_atoms - 1);
    std::vector<std::size_t> slots(16);
    std::iota(slots.begin(), slots.end(), 0);
    for (std::size_t i = 0; i < slots.size(); ++i)
        std::swap(slots[i], slots[i + rng.integer(slots.size() - i)]);
    std::vector<double> atoms, w;
    for (std::size_t i = 0; i < n; ++i) {
        atoms.push_back(-2.0 + 0.27 * static_cast<double>(slots[i]) + rng.uniform(-0.03, 0.03));
        w.push_back(rng.uniform(0.1, 1.0));
    }
    double s = 0.0;
    for (double x : w) s += x;
    for (double& x : w) x /= s;
    return DiscreteMeasure(1, std::move(atoms), std::move(w));
}

}  // namespace

TEST_CASE("sinkhorn: product coupling against own Gaussian is free") {
    const auto alpha = DiscreteMeasure::dirac({0.0});
    const GridMeasure rho = gaussian_grid({0.0}, 1.0, 241);
    const auto res = sinkhorn_eot(alpha, rho);
    CHECK(res.converged);
    CHECK(std::abs(res.value) <= 1e-3);
}

TEST_CASE("sinkhorn: single source against shifted Gaussian gives m^2/2") {
    const auto alpha = DiscreteMeasure::dirac({0.0});
    const GridMeasure rho = gaussian_grid({1.0}, 1.0, 241);
    const auto res = sinkhorn_eot(alpha, rho);
    CHECK(res.converged);
    CHECK(res.value == Catch::Approx(0.5).margin(1e-3));
}

TEST_CASE("sinkhorn: marginals match inputs within tolerance") {
    CounterRng rng(2);
    const auto alpha = random_measure_1d(rng, 5);
    const GridMeasure rho = gaussian_grid({0.3}, 1.5, 121);
    const auto res = sinkhorn_eot(alpha, rho, 20000, 1e-10);
    CHECK(res.converged);
    const auto rs = res.plan.row_sums();
    const auto cs = res.plan.col_sums();
    for (std::size_t i = 0; i < alpha.size(); ++i)
        CHECK(rs[i] == Catch::Approx(alpha.weight(i)).margin(1e-9));
    for (std::size_t j = 0; j < rho.size(); ++j)
        CHECK(cs[j] == Catch::Approx(rho.weights()[j]).margin(1e-9));
}

TEST_CASE("inner dual: single-atom target has identically zero gradient") {
    const auto nu = DiscreteMeasure::dirac({0.7});
    const auto alpha = DiscreteMeasure::dirac({-0.2});
    const auto quad = default_quadrature(nu, 1.0, {Vec{-0.2}});
    const auto f0 = q_beta_potential(nu, 1.0);
    const auto res = inner_dual_solve(alpha, nu, 1.0, f0, quad);
    CHECK(res.converged);
    CHECK(res.iterations == 0);  // gradient vanishes at any f
    CHECK(res.f.values[0] == Catch::Approx(0.0).margin(1e-12));  // nu-mean-zero
}

TEST_CASE("inner dual: closed-form optimal value for atom-to-atom") {
    // alpha = delta_0, nu = delta_1, beta = 1:
    //   inf_rho { H(rho|gamma_0) + (1/2) W_2^2(rho, delta_1) }
    //   = beta/(2(1+beta)) + log(1+beta)/2 = 1/4 + log(2)/2.
    const auto alpha = DiscreteMeasure::dirac({0.0});
    const auto nu = DiscreteMeasure::dirac({1.0});
    const auto quad = default_quadrature(nu, 1.0, {Vec{0.0}});
    const auto res = inner_dual_solve(alpha, nu, 1.0, zero_potential(nu), quad);
    CHECK(res.converged);
    CHECK(res.objective == Catch::Approx(0.25 + 0.5 * std::log(2.0)).margin(1e-4));
}

TEST_CASE("inner dual: gradient matches finite differences") {
    CounterRng rng(5);
    const double beta = 1.4;
    const auto nu = random_measure_1d(rng, 6);
    const auto alpha = random_measure_1d(rng, 5);
    // The objective is piecewise smooth with kinks wherever an argmin-region
    // boundary crosses a node; a fine verification grid keeps the one-sided
    // jumps below the check margin.
    QuadSpec qs;
    qs.max_nodes_1d = 60001;
    const auto quad = default_quadrature(nu, beta, {}, qs);
    detail::InnerWorkspace ws(alpha, nu, beta, quad);

    std::vector<double> f(nu.size());
    for (double& v : f) v = rng.uniform(-0.5, 0.5);
    std::vector<double> m_buf, grad;
    std::vector<std::size_t> arg_buf;
    ws.eval(alpha, nu, f, &grad, m_buf, arg_buf);

    for (std::size_t j = 0; j < f.size(); ++j) {
        const double h = 1e-5;
        auto fp = f, fm = f;
        fp[j] += h;
        fm[j] -= h;
        const double vp = ws.eval(alpha, nu, fp, nullptr, m_buf, arg_buf);
        const double vm = ws.eval(alpha, nu, fm, nullptr, m_buf, arg_buf);
        CHECK((vp - vm) / (2 * h) == Catch::Approx(grad[j]).margin(1e-5));
    }
}

TEST_CASE("dual objective: shift invariance and the point value") {
    const auto nu = DiscreteMeasure::dirac({0.0});
    const auto mu = DiscreteMeasure::dirac({0.0});
    const auto quad = default_quadrature(nu, 1.0, {Vec{0.0}});
    const auto f0 = zero_potential(nu);
    const double d0 = dual_objective(f0, mu, nu, 1.0, quad);
    CHECK(d0 == Catch::Approx(0.5 * std::log(2.0)).margin(1e-6));

    auto fc = make_potential(nu, {2.3});
    const double dc = dual_objective(fc, mu, nu, 1.0, quad);
    CHECK(dc == Catch::Approx(d0).margin(1e-10));
}

TEST_CASE("dual objective: weak duality against the solved value") {
    CounterRng rng(9);
    const double beta = 1.0;
    const auto mu = random_measure_1d(rng, 4);
    const auto nu = random_measure_1d(rng, 4);
    const auto sol = sb_solve(mu, nu, beta);
    REQUIRE(sol.converged);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> v(nu.size());
        for (double& z : v) z = rng.uniform(-1.0, 1.0);
        auto f = semiconcave_envelope(make_potential(nu, v), beta);
        const double d = dual_objective(f, mu, nu, beta, sol.quad);
        CHECK(d <= sol.value + 1e-6);
    }
}

TEST_CASE("sb_solve: closed-form single-atom pair") {
    const auto mu = DiscreteMeasure::dirac({0.0});
    const auto nu = DiscreteMeasure::dirac({1.0});
    for (double beta : {0.1, 1.0, 10.0}) {
        const auto sol = sb_solve(mu, nu, beta);
        CHECK(sol.converged);
        CHECK(sol.value == Catch::Approx(0.5 + 0.5 * std::log1p(beta)).margin(1e-4));
        // alpha* = delta at y = x + (x - 1)/beta
        REQUIRE(sol.alpha_star.size() == 1);
        CHECK(sol.alpha_star.atom(0)[0] == Catch::Approx(-1.0 / beta).margin(1e-7));
    }
}

TEST_CASE("sb_solve: Gaussian target is nearly free") {
    const auto mu = DiscreteMeasure::dirac({0.0});
    const GridMeasure g = gaussian_grid({0.0}, 1.0, 241);
    const auto sol = sb_solve(mu, g.to_discrete(), 1.0);
    CHECK(sol.converged);
    CHECK(std::abs(sol.value) <= 5e-3);
}

TEST_CASE("sb_solve: dual trace is nondecreasing on random instances") {
    CounterRng rng(31);
    for (int inst = 0; inst < 20; ++inst) {
        const auto mu = random_measure_1d(rng);
        const auto nu = random_measure_1d(rng);
        const double beta = std::exp(rng.uniform(-1.2, 1.2));
        const auto sol = sb_solve(mu, nu, beta);
        for (std::size_t i = 1; i < sol.dual_trace.size(); ++i)
            CHECK(sol.dual_trace[i] >= sol.dual_trace[i - 1] - 1e-9);
    }
}

TEST_CASE("sb_solve: strict ascent while alpha still moves") {
    CounterRng rng(77);
    for (int inst = 0; inst < 6; ++inst) {
        const auto mu = random_measure_1d(rng, 5);
        const auto nu = random_measure_1d(rng, 5);
        const auto sol = sb_solve(mu, nu, 1.0);
        for (std::size_t i = 0; i + 1 < sol.alpha_moves.size(); ++i) {
            if (sol.alpha_moves[i] > 1e-6)
                CHECK(sol.dual_trace[i + 1] - sol.dual_trace[i] > -1e-12);
        }
    }
}

TEST_CASE("sb_solve: fixed-point residual of alpha") {
    CounterRng rng(13);
    const auto mu = random_measure_1d(rng, 4);
    const auto nu = random_measure_1d(rng, 4);
    const auto sol = sb_solve(mu, nu, 2.0);
    REQUIRE(sol.converged);
    // alpha_star is the pushforward of mu under grad u at f_star
    const SmoothPotential u(sol.f_star, sol.beta, sol.quad);
    const auto pushed =
        pushforward(mu, [&](std::span<const double> x) { return u.eval(x).gradient; });
    CHECK(wasserstein2(sol.alpha_star, pushed) <= 1e-8);
}

// f* is pinned only up to the optimal kink facet, whose f-diameter scales
// like node_spacing * beta * atom_gap; compact instances plus a fine grid
// keep that below the 1e-4 agreement tolerance.
TEST_CASE("sb_solve: uniqueness of the normalized dual potential") {
    CounterRng rng(101);
    auto compact_measure = [&](std::size_t max_atoms) {
        const std::size_t n = 2 + rng.integer(max_atoms - 1);
        std::vector<std::size_t> slots(11);
        std::iota(slots.begin(), slots.end(), 0);
        for (std::size_t i = 0; i < slots.size(); ++i)
            std::swap(slots[i], slots[i + rng.integer(slots.size() - i)]);
        std::vector<double> atoms, w;
        for (std::size_t i = 0; i < n; ++i) {
            atoms.push_back(-0.75 + 0.15 * static_cast<double>(slots[i]) +
                            rng.uniform(-0.015, 0.015));
            w.push_back(rng.uniform(0.1, 1.0));
        }
        double s = 0.0;
        for (double x : w) s += x;
        for (double& x : w) x /= s;
        return DiscreteMeasure(1, std::move(atoms), std::move(w));
    };
    for (int inst = 0; inst < 2; ++inst) {
        const auto mu = compact_measure(5);
        const auto nu = compact_measure(5);
        const double beta = std::exp(rng.uniform(-0.22, 0.18));
        SolverOptions opts;
        opts.tol_outer = 1e-10;
        opts.quad.max_nodes_1d = 88001;
        const auto sol_q = sb_solve(mu, nu, beta, opts);
        const auto f_zero = zero_potential(nu);
        const auto sol_0 = sb_solve(mu, nu, beta, opts, &f_zero);
        REQUIRE(sol_q.converged);
        REQUIRE(sol_0.converged);
        double sup = 0.0;
        for (std::size_t j = 0; j < nu.size(); ++j)
            sup = std::max(sup, std::abs(sol_q.f_star.values[j] - sol_0.f_star.values[j]));
        CHECK(sup <= 1e-4);
    }
}

// Coupling convergence to the Schrödinger regime: at beta = 1000 the SB
// plan on fixed finite support approaches the discrete-kernel Sinkhorn
// plan (reference kernel gamma(y - x)), measured as W_2 between the two
// plans viewed as measures on R^2.
TEST_CASE("sb coupling approaches the Sinkhorn plan at large beta") {
    const DiscreteMeasure mu(1, {-0.8, -0.1, 0.6}, {0.35, 0.4, 0.25});
    const DiscreteMeasure nu(1, {-1.0, -0.3, 0.2, 0.8, 1.4}, {0.2, 0.25, 0.2, 0.2, 0.15});
    SolverOptions opts;
    opts.quad.lump_scale = 1e-3;
    const auto sol = sb_solve(mu, nu, 1000.0, opts);
    REQUIRE(sol.converged);

    // discrete-kernel Sinkhorn plan between the atom sets
    const std::size_t n = mu.size(), m = nu.size();
    std::vector<double> logK(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            logK[i * m + j] = -0.5 * sq_dist(mu.atom(i), nu.atom(j));
    std::vector<double> lu(n, 0.0), lv(m, 0.0);
    for (int it = 0; it < 5000; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -kInf;
            for (std::size_t j = 0; j < m; ++j) mx = std::max(mx, logK[i * m + j] + lv[j]);
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += std::exp(logK[i * m + j] + lv[j] - mx);
            lu[i] = std::log(mu.weight(i)) - (mx + std::log(s));
        }
        for (std::size_t j = 0; j < m; ++j) {
            double mx = -kInf;
            for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, logK[i * m + j] + lu[i]);
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += std::exp(logK[i * m + j] + lu[i] - mx);
            lv[j] = std::log(nu.weight(j)) - (mx + std::log(s));
        }
    }

    // both plans as 2D discrete measures on the product support
    std::vector<double> pts;
    std::vector<double> w_sb, w_sk;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
            pts.push_back(mu.atom(i)[0]);
            pts.push_back(nu.atom(j)[0]);
            w_sb.push_back(std::max(0.0, sol.coupling.at(i, j)));
            w_sk.push_back(std::exp(lu[i] + logK[i * m + j] + lv[j]));
        }
    auto normalize = [](std::vector<double>& w) {
        double s = 0.0;
        for (double x : w) s += x;
        for (double& x : w) x /= s;
    };
    normalize(w_sb);
    normalize(w_sk);
    const DiscreteMeasure plan_sb(2, pts, w_sb);
    const DiscreteMeasure plan_sk(2, std::move(pts), w_sk);
    CHECK(wasserstein2(plan_sb, plan_sk) <= 5e-2);
}

TEST_CASE("recover_coupling: single-atom pair has one unit entry") {
    const auto mu = DiscreteMeasure::dirac({0.0});
    const auto nu = DiscreteMeasure::dirac({1.0});
    const auto sol = sb_solve(mu, nu, 1.0);
    REQUIRE(sol.converged);
    REQUIRE(sol.coupling.rows == 1);
    REQUIRE(sol.coupling.cols == 1);
    CHECK(sol.coupling.at(0, 0) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("recover_coupling: marginals") {
    CounterRng rng(55);
    const auto mu = random_measure_1d(rng, 4);
    const auto nu = random_measure_1d(rng, 4);
    const auto sol = sb_solve(mu, nu, 1.0);
    REQUIRE(sol.converged);
    const auto& pi = sol.coupling;
    // rows sum to mu exactly (construction)
    const auto rs = pi.row_sums();
    for (std::size_t i = 0; i < mu.size(); ++i)
        CHECK(rs[i] == Catch::Approx(mu.weight(i)).margin(1e-12));
    for (double m : pi.mass) CHECK(m >= 0.0);
    // columns reach nu within quadrature error (total variation)
    const auto cs = pi.col_sums();
    double tv = 0.0;
    for (std::size_t j = 0; j < nu.size(); ++j) tv += std::abs(cs[j] - nu.weight(j));
    CHECK(0.5 * tv <= 1e-3);
    // rejected for unconverged solutions
    SBSolution bad = sol;
    bad.converged = false;
    CHECK_THROWS(recover_coupling(bad, mu, nu, 1.0, sol.quad));
}

TEST_CASE("complementary slackness at convergence") {
    CounterRng rng(555);
    for (int inst = 0; inst < 3; ++inst) {
        const auto mu = random_measure_1d(rng, 4);
        const auto nu = random_measure_1d(rng, 4);
        const double beta = 1.0;
        const auto sol = sb_solve(mu, nu, beta);
        REQUIRE(sol.converged);
        REQUIRE(sol.has_rho);

        // V_EOT(alpha*, rho*) = int -q_beta box(-f*) drho* + int T_beta[f*] dalpha*
        const auto sink = sinkhorn_eot(sol.alpha_star, sol.rho_star, 40000, 1e-11);
        REQUIRE(sink.converged);
        const auto rho_atoms = sol.rho_star.to_discrete();
        const auto m_rho =
            moreau_transform(sol.f_star, beta, std::span<const double>(rho_atoms.atoms_flat()));
        double lhs1 = 0.0;
        for (std::size_t k = 0; k < rho_atoms.size(); ++k)
            lhs1 -= rho_atoms.weight(k) * m_rho.values[k];
        const auto t_alpha = t_beta(sol.f_star, beta,
                                    std::span<const double>(sol.alpha_star.atoms_flat()), sol.quad);
        for (std::size_t i = 0; i < sol.alpha_star.size(); ++i)
            lhs1 += sol.alpha_star.weight(i) * t_alpha[i];
        CHECK(std::abs(sink.value - lhs1) <= 1e-4);

        // (beta/2) W_2^2(rho*, nu) = int q_beta box(-f*) drho* + int f* dnu
        const double w2 = wasserstein2_sq(rho_atoms, nu).value;
        double rhs2 = 0.0;
        for (std::size_t k = 0; k < rho_atoms.size(); ++k)
            rhs2 += rho_atoms.weight(k) * m_rho.values[k];
        for (std::size_t j = 0; j < nu.size(); ++j)
            rhs2 += nu.weight(j) * sol.f_star.values[j];
        CHECK(std::abs(0.5 * beta * w2 - rhs2) <= 1e-4);
    }
}

TEST_CASE("sb_solve in two dimensions via the tensor grid") {
    const auto mu = DiscreteMeasure::dirac({0.0, 0.0});
    const auto nu = DiscreteMeasure::dirac({1.0, 0.5});
    const auto sol = sb_solve(mu, nu, 1.0);
    CHECK(sol.converged);
    CHECK(sol.value == Catch::Approx(0.5 * 1.25 + std::log(2.0)).margin(1e-6));
    // grad u(x) = x + (x - m)/beta componentwise
    REQUIRE(sol.alpha_star.size() == 1);
    CHECK(sol.alpha_star.atom(0)[0] == Catch::Approx(-1.0).margin(1e-6));
    CHECK(sol.alpha_star.atom(0)[1] == Catch::Approx(-0.5).margin(1e-6));
}

TEST_CASE("sb_solve: product 2D instance separates across axes") {
    // nu_2 = nu_x (x) delta_0 in the y-axis: entropy and squared transport
    // both separate, so the 2D value is the 1D value plus the cost of
    // pinning a Brownian coordinate to a point, log(1+beta)/2.
    const double beta = 1.0;
    const auto mu1 = DiscreteMeasure::dirac({0.0});
    const DiscreteMeasure nu1(1, {-1.0, 1.0}, {0.5, 0.5});
    const auto sol1 = sb_solve(mu1, nu1, beta);

    const auto mu2 = DiscreteMeasure::dirac({0.0, 0.0});
    const DiscreteMeasure nu2(2, {-1.0, 0.0, 1.0, 0.0}, {0.5, 0.5});
    const auto sol2 = sb_solve(mu2, nu2, beta);

    REQUIRE(sol1.converged);
    REQUIRE(sol2.converged);
    CHECK(sol2.value ==
          Catch::Approx(sol1.value + 0.5 * std::log1p(beta)).margin(5e-3));
}

TEST_CASE("sb_solve in three dimensions via Monte Carlo nodes (best effort)") {
    const auto mu = DiscreteMeasure::dirac({0.0, 0.0, 0.0});
    const auto nu = DiscreteMeasure::dirac({1.0, 0.5, -0.5});
    const auto sol = sb_solve(mu, nu, 1.0);
    CHECK(sol.converged);
    CHECK(sol.value == Catch::Approx(0.5 * 1.5 + 1.5 * std::log(2.0)).margin(1e-2));
}

TEST_CASE("solver options validation") {
    SolverOptions bad;
    bad.tol_inner = -1.0;
    CHECK_THROWS(bad.validate());
    CHECK_THROWS(sb_solve(DiscreteMeasure::dirac({0.0}), DiscreteMeasure::dirac({1.0}), -1.0));
}
