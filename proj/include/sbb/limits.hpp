#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "sbb/exact_ot.hpp"
#include "sbb/measures.hpp"
#include "sbb/solvers.hpp"

namespace sbb {

// ---------------------------------------------------------------------------
// Pointwise cost C_SB^beta(x, rho) = sb_solve(delta_x, rho, beta).value.
// ---------------------------------------------------------------------------
inline double cost_sb(const Vec& x, const DiscreteMeasure& rho, double beta,
                      const SolverOptions& opts = {}) {
    return sb_solve(DiscreteMeasure::dirac(x), rho, beta, opts).value;
}

// ---------------------------------------------------------------------------
// beta-sweep against the three limiting regimes.
// ---------------------------------------------------------------------------
struct LimitReport {
    Vec beta_grid;
    std::vector<double> values;  // C_SB^beta per beta

    bool has_schrodinger_target = false;
    double schrodinger_target = 0.0;      // H(rho | gamma_x), grid rho only
    double brenier_strassen_target = 0.0; // |x - mean(rho)|^2 / 2
    double bass_rescaled_target = 0.0;    // W_2^2(gamma_{mean(rho)}, rho) / 2

    std::vector<double> dev_schrodinger;      // |C - H|
    std::vector<double> dev_brenier_strassen; // |C - bs|
    std::vector<double> dev_bass;             // |(C - bs)/beta - bass|

    bool monotone_value = false;            // beta -> C nondecreasing
    bool monotone_value_over_beta = false;  // beta -> C/beta nonincreasing
    bool monotone_shifted_over_beta = false;  // beta -> (C - bs)/beta nonincreasing
};

inline LimitReport limit_sweep(const Vec& x, const DiscreteMeasure& rho_atoms,
                               const std::optional<GridMeasure>& rho_grid, const Vec& beta_grid,
                               const SolverOptions& opts = {},
                               std::size_t gaussian_target_cells = 241) {
    check(!beta_grid.empty(), "limit_sweep: empty beta grid");
    for (double b : beta_grid) check(b > 0.0, "limit_sweep: beta must be positive");
    Vec betas = beta_grid;
    std::sort(betas.begin(), betas.end());

    LimitReport rep;
    rep.beta_grid = betas;
    for (double b : betas) rep.values.push_back(cost_sb(x, rho_atoms, b, opts));

    const Vec rho_bar = barycenter(rho_atoms);
    rep.brenier_strassen_target =
        0.5 * sq_dist(std::span<const double>(x), std::span<const double>(rho_bar));
    if (rho_grid) {
        rep.has_schrodinger_target = true;
        rep.schrodinger_target = relative_entropy_gaussian(*rho_grid, x, 1.0);
    }
    const GridMeasure gauss = gaussian_grid(rho_bar, 1.0, gaussian_target_cells);
    rep.bass_rescaled_target = 0.5 * wasserstein2_sq(gauss.to_discrete(), rho_atoms).value;

    const double tol = 1e-6;
    rep.monotone_value = true;
    rep.monotone_value_over_beta = true;
    rep.monotone_shifted_over_beta = true;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        const double c = rep.values[i];
        if (rep.has_schrodinger_target)
            rep.dev_schrodinger.push_back(std::abs(c - rep.schrodinger_target));
        rep.dev_brenier_strassen.push_back(std::abs(c - rep.brenier_strassen_target));
        rep.dev_bass.push_back(std::abs((c - rep.brenier_strassen_target) / betas[i] -
                                        rep.bass_rescaled_target));
        if (i > 0) {
            const double cp = rep.values[i - 1], bp = betas[i - 1], b = betas[i];
            if (c < cp - tol) rep.monotone_value = false;
            if (c / b > cp / bp + tol) rep.monotone_value_over_beta = false;
            const double s = (c - rep.brenier_strassen_target) / b;
            const double sp = (cp - rep.brenier_strassen_target) / bp;
            if (s > sp + tol) rep.monotone_shifted_over_beta = false;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Brenier-Strassen problem
//   min over couplings pi of sum_i mu_i |x_i - bar(pi_{x_i})|^2 / 2
// as a convex quadratic over the transport polytope, solved by pairwise
// Frank-Wolfe with exact line search; the linear oracle is the exact OT
// solver on the gradient costs (m_i - x_i) . y_j.
// ---------------------------------------------------------------------------
struct BrenierStrassenResult {
    double value = 0.0;
    Coupling coupling;
    double fw_gap = 0.0;
    bool converged = false;
    std::size_t iterations = 0;
};

inline BrenierStrassenResult brenier_strassen_solve(const DiscreteMeasure& mu,
                                                    const DiscreteMeasure& nu,
                                                    double gap_tol = 1e-6,
                                                    std::size_t max_iters = 10000) {
    check(mu.dim() == nu.dim(), "brenier_strassen_solve: dimension mismatch");
    const std::size_t n = mu.size(), m = nu.size(), d = mu.dim();
    check(n * m <= kW2LpEntryCap, "brenier_strassen_solve: instance exceeds LP size cap");

    // Conditional means scaled by weights: s_i = sum_j pi_ij y_j.
    auto cond_sums = [&](const std::vector<double>& pi, std::vector<double>& s) {
        s.assign(n * d, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < m; ++j) {
                const double p = pi[i * m + j];
                if (p == 0.0) continue;
                const auto y = nu.atom(j);
                for (std::size_t ax = 0; ax < d; ++ax) s[i * d + ax] += p * y[ax];
            }
    };
    auto objective = [&](const std::vector<double>& s) {
        double v = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = mu.weight(i);
            if (w <= 0.0) continue;
            const auto x = mu.atom(i);
            for (std::size_t ax = 0; ax < d; ++ax) {
                const double diff = x[ax] - s[i * d + ax] / w;
                v += 0.5 * w * diff * diff;
            }
        }
        return v;
    };
    // Gradient wrt pi_ij: (m_i - x_i) . y_j.
    auto gradient_cost = [&](const std::vector<double>& s, std::vector<double>& c) {
        c.assign(n * m, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            const double w = mu.weight(i);
            if (w <= 0.0) continue;
            const auto x = mu.atom(i);
            for (std::size_t j = 0; j < m; ++j) {
                const auto y = nu.atom(j);
                double g = 0.0;
                for (std::size_t ax = 0; ax < d; ++ax) g += (s[i * d + ax] / w - x[ax]) * y[ax];
                c[i * m + j] = g;
            }
        }
    };

    // Initial vertex: optimal plan for the plain quadratic cost.
    std::vector<double> c0(n * m);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) c0[i * m + j] = 0.5 * sq_dist(mu.atom(i), nu.atom(j));
    Coupling v0 = transport_lp(c0, n, m, mu.weights(), nu.weights());

    std::vector<std::vector<double>> vertices{v0.mass};
    std::vector<double> lambdas{1.0};
    std::vector<double> pi = v0.mass;

    std::vector<double> s, cost, s_dir;
    BrenierStrassenResult out;
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        cond_sums(pi, s);
        gradient_cost(s, cost);
        Coupling fw = transport_lp(cost, n, m, mu.weights(), nu.weights());

        double gap = 0.0;
        for (std::size_t e = 0; e < n * m; ++e) gap += (pi[e] - fw.mass[e]) * cost[e];
        out.fw_gap = gap;
        if (gap <= gap_tol) {
            out.converged = true;
            break;
        }

        // Away vertex: active vertex with the largest gradient inner product.
        std::size_t away = 0;
        double away_val = -kInf;
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            double ip = 0.0;
            for (std::size_t e = 0; e < n * m; ++e) ip += vertices[v][e] * cost[e];
            if (ip > away_val) {
                away_val = ip;
                away = v;
            }
        }

        // Pairwise direction: mass moves from the away vertex to the FW vertex.
        const double t_max = lambdas[away];
        std::vector<double> dir(n * m);
        for (std::size_t e = 0; e < n * m; ++e) dir[e] = fw.mass[e] - vertices[away][e];

        cond_sums(dir, s_dir);
        double lin = 0.0, quad = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double w = mu.weight(i);
            if (w <= 0.0) continue;
            const auto x = mu.atom(i);
            for (std::size_t ax = 0; ax < d; ++ax) {
                const double mi = s[i * d + ax] / w;
                const double dm = s_dir[i * d + ax] / w;
                lin += w * (mi - x[ax]) * dm;
                quad += 0.5 * w * dm * dm;
            }
        }
        double t = t_max;
        if (quad > 0.0) t = std::clamp(-lin / (2.0 * quad), 0.0, t_max);
        if (t <= 0.0) t = std::min(1e-12, t_max);

        for (std::size_t e = 0; e < n * m; ++e) pi[e] += t * dir[e];
        lambdas[away] -= t;
        bool found = false;
        for (std::size_t v = 0; v < vertices.size(); ++v) {
            if (v != away && vertices[v] == fw.mass) {
                lambdas[v] += t;
                found = true;
                break;
            }
        }
        if (!found) {
            vertices.push_back(fw.mass);
            lambdas.push_back(t);
        }
        if (lambdas[away] <= 1e-15) {
            vertices.erase(vertices.begin() + static_cast<std::ptrdiff_t>(away));
            lambdas.erase(lambdas.begin() + static_cast<std::ptrdiff_t>(away));
        }
    }
    out.iterations = it;
    cond_sums(pi, s);
    out.value = objective(s);
    out.coupling.rows = n;
    out.coupling.cols = m;
    out.coupling.mass = std::move(pi);
    return out;
}

// ---------------------------------------------------------------------------
// Bass system residuals. Given the gradient map of the convex conjugate v*
// (for the SB dual at parameter beta: grad v*(z) = the Moreau argmin atom),
// the Bass measure implied by v is alpha_v = (grad (v* . gamma)^*)_# mu,
// computed by inverting the monotone map w -> (grad v* * gamma)(w).
//   res1 = W_2( (grad v*)_# (alpha * gamma), nu )
//   res2 = W_2( alpha, alpha_v )
// With alpha omitted, alpha = alpha_v and res2 = 0; passing the alpha of a
// rescaled SB solution turns res2 into the SB-vs-Bass measure discrepancy.
// ---------------------------------------------------------------------------
struct BassResidual {
    double res1 = 0.0;
    double res2 = 0.0;
    DiscreteMeasure alpha_implied;
};

inline BassResidual bass_residual(const std::function<Vec(const Vec&)>& grad_v_star,
                                  const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                  const QuadratureGrid& quad,
                                  const std::optional<DiscreteMeasure>& alpha = std::nullopt) {
    const std::size_t d = quad.dim;
    check(mu.dim() == d && nu.dim() == d, "bass_residual: dimension mismatch");
    const std::size_t K = quad.size();

    // grad v* at the quadrature nodes, shared by both residuals.
    std::vector<double> gv(K * d);
    for (std::size_t k = 0; k < K; ++k) {
        const auto z = quad.node(k);
        const Vec g = grad_v_star(Vec(z.begin(), z.end()));
        for (std::size_t ax = 0; ax < d; ++ax) gv[k * d + ax] = g[ax];
    }

    // (grad v* * gamma)(w) by direct convolution weights.
    auto smoothed_grad = [&](const Vec& w) {
        Vec out(d, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const double g = quad.weights[k] *
                             std::exp(log_gaussian_density(quad.node(k), std::span<const double>(w), 1.0));
            for (std::size_t ax = 0; ax < d; ++ax) out[ax] += g * gv[k * d + ax];
        }
        return out;
    };

    // Invert w -> (grad v* * gamma)(w) = x: monotone bisection in 1D,
    // damped monotone fixed point otherwise.
    auto invert = [&](std::span<const double> x) {
        if (d == 1) {
            double lo = quad.nodes.front(), hi = quad.nodes.back();
            for (int grow = 0; grow < 60 && smoothed_grad({lo})[0] > x[0]; ++grow) lo -= 1.0;
            for (int grow = 0; grow < 60 && smoothed_grad({hi})[0] < x[0]; ++grow) hi += 1.0;
            for (int iter = 0; iter < 200; ++iter) {
                const double mid = 0.5 * (lo + hi);
                if (smoothed_grad({mid})[0] < x[0])
                    lo = mid;
                else
                    hi = mid;
            }
            return Vec{0.5 * (lo + hi)};
        }
        Vec w(x.begin(), x.end());
        double tau = 0.5;
        Vec g = smoothed_grad(w);
        auto err = [&](const Vec& gg) {
            double e = 0.0;
            for (std::size_t ax = 0; ax < d; ++ax) e += (gg[ax] - x[ax]) * (gg[ax] - x[ax]);
            return e;
        };
        double e = err(g);
        for (int iter = 0; iter < 400 && e > 1e-20; ++iter) {
            Vec trial(d);
            for (std::size_t ax = 0; ax < d; ++ax) trial[ax] = w[ax] - tau * (g[ax] - x[ax]);
            const Vec gt = smoothed_grad(trial);
            if (err(gt) < e) {
                w = trial;
                g = gt;
                e = err(g);
                tau = std::min(2.0, tau * 1.3);
            } else {
                tau *= 0.5;
            }
        }
        return w;
    };

    std::vector<Vec> alpha_points(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) alpha_points[i] = invert(mu.atom(i));
    const DiscreteMeasure alpha_implied =
        make_merged_discrete(mu.dim(), alpha_points, mu.weights());

    const DiscreteMeasure& alpha_used = alpha ? *alpha : alpha_implied;

    // alpha * gamma on the quadrature nodes, pushed through grad v*.
    std::vector<double> ag(K);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        double dens = 0.0;
        for (std::size_t i = 0; i < alpha_used.size(); ++i)
            dens += alpha_used.weight(i) *
                    std::exp(log_gaussian_density(quad.node(k), alpha_used.atom(i), 1.0));
        ag[k] = quad.weights[k] * dens;
        s += ag[k];
    }
    std::vector<Vec> img_pts;
    std::vector<double> img_w;
    for (std::size_t k = 0; k < K; ++k) {
        if (ag[k] <= 0.0) continue;
        img_w.push_back(ag[k] / s);
        img_pts.emplace_back(gv.begin() + static_cast<std::ptrdiff_t>(k * d),
                             gv.begin() + static_cast<std::ptrdiff_t>((k + 1) * d));
    }
    const DiscreteMeasure terminal = make_merged_discrete(d, img_pts, img_w);

    BassResidual out;
    out.res1 = wasserstein2(terminal, nu);
    out.res2 = alpha ? wasserstein2(alpha_used, alpha_implied) : 0.0;
    out.alpha_implied = alpha_implied;
    return out;
}

// grad v*(z) for the SB dual potential f on discrete nu: the Moreau argmin
// atom with the lowest-index tie rule.
inline std::function<Vec(const Vec&)> grad_v_star_from_potential(Potential f, double beta) {
    return [f = std::move(f), beta](const Vec& z) {
        const auto mr = moreau_transform(f, beta, std::span<const double>(z));
        return f.support.atom_vec(mr.argmin[0]);
    };
}

}  // namespace sbb
