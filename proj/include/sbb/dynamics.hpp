#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "sbb/measures.hpp"
#include "sbb/rng.hpp"
#include "sbb/solvers.hpp"
#include "sbb/transforms.hpp"

namespace sbb {

// Simulated ensemble of the optimal semimartingale pair (X, Y). Full
// trajectories are kept for the first `stored_paths` paths (memory bound);
// per-path cost samples, endpoints, and martingale increments cover all
// paths.
struct PathEnsemble {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::size_t dim = 0;
    std::size_t stored_paths = 0;
    double beta = 0.0;
    std::uint64_t seed = 0;

    std::vector<double> times;    // n_steps + 1 points on [0, 1]
    std::vector<double> x_paths;  // stored_paths x (n_steps + 1) x dim
    std::vector<double> y_paths;  // same layout
    std::vector<double> cost_samples;  // n_paths
    std::vector<double> x0, y0, x1, y1;          // n_paths x dim
    std::vector<double> martingale_drift;        // n_paths x dim: a(T-) - a(0)
    std::vector<double> min_eig_b;               // n_paths: min eigenvalue of b_t seen

    double at_x(std::size_t p, std::size_t t, std::size_t ax) const {
        return x_paths[(p * (n_steps + 1) + t) * dim + ax];
    }
    double at_y(std::size_t p, std::size_t t, std::size_t ax) const {
        return y_paths[(p * (n_steps + 1) + t) * dim + ax];
    }
};

namespace detail {

// Smallest eigenvalue of a small symmetric matrix (d <= 3 closed forms,
// Jacobi fallback), used only for monitoring positive definiteness of b_t.
inline double min_symmetric_eigenvalue(const std::vector<double>& a, std::size_t d) {
    if (d == 1) return a[0];
    if (d == 2) {
        const double tr = a[0] + a[3];
        const double det = a[0] * a[3] - a[1] * a[2];
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        return 0.5 * tr - disc;
    }
    std::vector<double> m = a;
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) off += m[p * d + q] * m[p * d + q];
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p)
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = m[p * d + q];
                if (std::abs(apq) < 1e-18) continue;
                const double theta = 0.5 * (m[q * d + q] - m[p * d + p]) / apq;
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t r = 0; r < d; ++r) {
                    const double mrp = m[r * d + p], mrq = m[r * d + q];
                    m[r * d + p] = c * mrp - s * mrq;
                    m[r * d + q] = s * mrp + c * mrq;
                }
                for (std::size_t r = 0; r < d; ++r) {
                    const double mpr = m[p * d + r], mqr = m[q * d + r];
                    m[p * d + r] = c * mpr - s * mqr;
                    m[q * d + r] = s * mpr + c * mqr;
                }
            }
    }
    double mn = m[0];
    for (std::size_t p = 1; p < d; ++p) mn = std::min(mn, m[p * d + p]);
    return mn;
}

// Tilted moments restricted to nodes within `radius` of w along each axis
// (tensor grids); exact full loop otherwise. sigma2 is the bridge variance.
struct DriftStats {
    Vec mean;
    std::vector<double> cov;
    double log_mass = -kInf;
};

inline DriftStats windowed_stats(const QuadratureGrid& quad, std::span<const double> m_table,
                                 std::span<const double> w, double sigma2) {
    const std::size_t d = quad.dim;
    DriftStats st;
    st.mean.assign(d, 0.0);
    st.cov.assign(d * d, 0.0);

    std::size_t k_lo = 0, k_hi = quad.size();
    if (quad.kind == QuadratureGrid::Kind::TensorTrapezoid && d == 1) {
        const double radius = 9.0 * std::sqrt(sigma2);
        const double h = quad.spacing[0];
        const double lo = quad.origin[0];
        const auto n = static_cast<double>(quad.shape[0]);
        double a = std::floor((w[0] - radius - lo) / h);
        double b = std::ceil((w[0] + radius - lo) / h) + 1.0;
        k_lo = static_cast<std::size_t>(std::clamp(a, 0.0, n));
        k_hi = static_cast<std::size_t>(std::clamp(b, 0.0, n));
        if (k_lo >= k_hi) {  // window off the grid: fall back to nearest edge
            k_lo = (w[0] < lo) ? 0 : quad.size() - 1;
            k_hi = k_lo + 1;
        }
    }

    double mx = -kInf;
    std::vector<double> l(k_hi - k_lo);
    for (std::size_t k = k_lo; k < k_hi; ++k) {
        l[k - k_lo] = std::log(quad.weights[k]) - m_table[k] -
                      0.5 * sq_dist(w, quad.node(k)) / sigma2;
        mx = std::max(mx, l[k - k_lo]);
    }
    if (mx == -kInf) throw EmptyMassError();
    double s = 0.0;
    for (std::size_t k = k_lo; k < k_hi; ++k) {
        const double p = std::exp(l[k - k_lo] - mx);
        l[k - k_lo] = p;
        s += p;
        const auto z = quad.node(k);
        for (std::size_t ax = 0; ax < d; ++ax) st.mean[ax] += p * z[ax];
    }
    for (std::size_t ax = 0; ax < d; ++ax) st.mean[ax] /= s;
    for (std::size_t k = k_lo; k < k_hi; ++k) {
        const auto z = quad.node(k);
        const double p = l[k - k_lo];
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c)
                st.cov[r * d + c] += p * (z[r] - st.mean[r]) * (z[c] - st.mean[c]);
    }
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = r; c < d; ++c) {
            st.cov[r * d + c] /= s;
            st.cov[c * d + r] = st.cov[r * d + c];
        }
    st.log_mass = mx + std::log(s);
    return st;
}

}  // namespace detail

// Euler-Maruyama simulation of the Schrödinger-Bass system:
//   dY = grad log g_t(Y) dt + dB,          Y_0 = grad u(X_0),
//   dX = grad log g_t(Y) dt + b_t dB,      b_t = I + (1/beta) hess log g_t(Y),
// with g_t = exp(-q_beta box(-f)) * gamma_{0;1-t} up to normalization. The
// final step applies the exact terminal map X_1 = grad v*(Y_1) (the Moreau
// argmin atom) instead of integrating through the t -> 1 kernel singularity.
inline PathEnsemble simulate_sb(const SBSolution& sol, std::size_t n_paths, std::size_t n_steps,
                                std::uint64_t seed, std::size_t path_store_limit = 256) {
    check(sol.converged, "simulate_sb: solution did not converge");
    const DiscreteMeasure& mu = sol.mu;
    check(n_steps >= 100, "simulate_sb: need at least 100 time steps");
    check(n_paths >= 1, "simulate_sb: need at least one path");

    const double beta = sol.beta;
    const Potential& f = sol.f_star;
    const std::size_t d = f.support.dim();

    // Drift evaluations need value accuracy, not the lump-resolved grid the
    // solver used for marginal recovery; a dedicated coarser grid keeps the
    // per-step tilted-moment loops short.
    QuadSpec sim_spec;
    sim_spec.lump_scale = 0.0;
    std::vector<Vec> extras;
    for (std::size_t i = 0; i < mu.size(); ++i) extras.push_back(mu.atom_vec(i));
    for (std::size_t i = 0; i < sol.alpha_star.size(); ++i)
        extras.push_back(sol.alpha_star.atom_vec(i));
    const QuadratureGrid quad = default_quadrature(f.support, beta, extras, sim_spec);
    const auto table = moreau_at_nodes(f, beta, quad);

    // One proximal solve per distinct mu atom for Y_0 = grad u(X_0).
    std::vector<Vec> y0_of_atom(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i)
        y0_of_atom[i] = prox_envelope(table.values, quad, beta, mu.atom(i)).y;
    std::vector<double> mu_cdf(mu.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        acc += mu.weight(i);
        mu_cdf[i] = acc;
    }

    PathEnsemble ens;
    ens.n_paths = n_paths;
    ens.n_steps = n_steps;
    ens.dim = d;
    ens.stored_paths = std::min<std::size_t>(n_paths, path_store_limit);
    ens.beta = beta;
    ens.seed = seed;
    const double dt = 1.0 / static_cast<double>(n_steps);
    ens.times.resize(n_steps + 1);
    for (std::size_t k = 0; k <= n_steps; ++k) ens.times[k] = dt * static_cast<double>(k);
    ens.x_paths.assign(ens.stored_paths * (n_steps + 1) * d, 0.0);
    ens.y_paths.assign(ens.stored_paths * (n_steps + 1) * d, 0.0);
    ens.cost_samples.assign(n_paths, 0.0);
    ens.x0.assign(n_paths * d, 0.0);
    ens.y0.assign(n_paths * d, 0.0);
    ens.x1.assign(n_paths * d, 0.0);
    ens.y1.assign(n_paths * d, 0.0);
    ens.martingale_drift.assign(n_paths * d, 0.0);
    ens.min_eig_b.assign(n_paths, kInf);

    auto run_path = [&](std::size_t p) {
        // Even/odd first counter word separates the atom-selection stream
        // from the Brownian-increment stream.
        const double u01 = counter_uniform(seed, 2 * p, 0, 0);
        std::size_t atom = 0;
        while (atom + 1 < mu.size() && u01 > mu_cdf[atom]) ++atom;

        Vec x = mu.atom_vec(atom);
        Vec y = y0_of_atom[atom];
        for (std::size_t ax = 0; ax < d; ++ax) {
            ens.x0[p * d + ax] = x[ax];
            ens.y0[p * d + ax] = y[ax];
        }
        const bool store = p < ens.stored_paths;
        auto record = [&](std::size_t t) {
            if (!store) return;
            for (std::size_t ax = 0; ax < d; ++ax) {
                ens.x_paths[(p * (n_steps + 1) + t) * d + ax] = x[ax];
                ens.y_paths[(p * (n_steps + 1) + t) * d + ax] = y[ax];
            }
        };
        record(0);

        double cost = 0.0, min_eig = kInf;
        Vec a_first(d, 0.0), a_last(d, 0.0);
        std::vector<double> b(d * d);
        for (std::size_t k = 0; k < n_steps; ++k) {
            const double sigma2 = 1.0 - ens.times[k];
            const auto st = detail::windowed_stats(quad, table.values, y, sigma2);
            Vec a(d);
            for (std::size_t ax = 0; ax < d; ++ax) a[ax] = (st.mean[ax] - y[ax]) / sigma2;
            // b = I + (1/beta) (Cov/sigma^4 - I/sigma^2)
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = 0; c < d; ++c) {
                    double h = st.cov[r * d + c] / (sigma2 * sigma2);
                    if (r == c) h -= 1.0 / sigma2;
                    b[r * d + c] = (r == c ? 1.0 : 0.0) + h / beta;
                }
            min_eig = std::min(min_eig, detail::min_symmetric_eigenvalue(b, d));

            double bi2 = 0.0, a2 = 0.0;
            for (std::size_t r = 0; r < d; ++r) {
                a2 += a[r] * a[r];
                for (std::size_t c = 0; c < d; ++c) {
                    const double e = b[r * d + c] - (r == c ? 1.0 : 0.0);
                    bi2 += e * e;
                }
            }
            cost += (0.5 * a2 + 0.5 * beta * bi2) * dt;
            if (k == 0) a_first = a;
            a_last = a;

            Vec db(d);
            for (std::size_t ax = 0; ax < d; ++ax)
                db[ax] = std::sqrt(dt) * counter_normal(seed, 2 * p + 1, k, ax);
            for (std::size_t r = 0; r < d; ++r) {
                double bdb = 0.0;
                for (std::size_t c = 0; c < d; ++c) bdb += b[r * d + c] * db[c];
                x[r] += a[r] * dt + bdb;
                y[r] += a[r] * dt + db[r];
            }
            record(k + 1);
        }
        // Exact terminal map.
        const auto mr = moreau_transform(f, beta, std::span<const double>(y));
        const Vec x1 = f.support.atom_vec(mr.argmin[0]);
        for (std::size_t ax = 0; ax < d; ++ax) {
            ens.x1[p * d + ax] = x1[ax];
            ens.y1[p * d + ax] = y[ax];
            ens.martingale_drift[p * d + ax] = a_last[ax] - a_first[ax];
        }
        if (store)
            for (std::size_t ax = 0; ax < d; ++ax)
                ens.x_paths[(p * (n_steps + 1) + n_steps) * d + ax] = x1[ax];
        ens.cost_samples[p] = cost;
        ens.min_eig_b[p] = min_eig;
    };

    const std::size_t n_threads =
        std::min<std::size_t>(std::max(1u, std::thread::hardware_concurrency()), 16);
    if (n_threads <= 1 || n_paths < 64) {
        for (std::size_t p = 0; p < n_paths; ++p) run_path(p);
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t)
            pool.emplace_back([&, t] {
                for (std::size_t p = t; p < n_paths; p += n_threads) run_path(p);
            });
        for (auto& th : pool) th.join();
    }
    return ens;
}

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Left-point Riemann sums of (|a|^2/2 + beta |b - I|_HS^2 / 2) were
// accumulated per path during simulation; this reduces them.
inline CostEstimate dynamic_cost_estimate(const PathEnsemble& ens, double beta) {
    check(std::abs(beta - ens.beta) <= 1e-12, "dynamic_cost_estimate: beta mismatch with ensemble");
    const auto n = static_cast<double>(ens.cost_samples.size());
    CostEstimate est;
    for (double c : ens.cost_samples) est.mean += c;
    est.mean /= n;
    double var = 0.0;
    for (double c : ens.cost_samples) var += (c - est.mean) * (c - est.mean);
    var /= std::max(1.0, n - 1.0);
    est.std_error = std::sqrt(var / n);
    return est;
}

// Value function of the associated control problem at time t in [0, 1]:
//   psi_t(x) = inf_y { q_beta(x - y) + log(exp(-q_beta box(-f)) * gamma_{1-t})(y) },
// evaluated by the proximal solver with bridge variance 1 - t. At t = 1 the
// kernel degenerates and psi_1 is the terminal datum itself, evaluated as
// the double Moreau transform minimized over the quadrature nodes.
inline std::vector<double> potential_at_time(const Potential& f, double beta, double t,
                                             std::span<const double> queries_flat,
                                             const QuadratureGrid& quad) {
    check(beta > 0.0, "potential_at_time: beta must be positive");
    check(t >= 0.0 && t <= 1.0, "potential_at_time: t must lie in [0, 1]");
    const std::size_t d = quad.dim;
    const std::size_t nq = queries_flat.size() / d;
    const auto table = moreau_at_nodes(f, beta, quad);
    std::vector<double> out(nq);
    if (t == 1.0) {
        for (std::size_t q = 0; q < nq; ++q) {
            const auto x = queries_flat.subspan(q * d, d);
            double best = kInf;
            for (std::size_t k = 0; k < quad.size(); ++k)
                best = std::min(best,
                                0.5 * beta * sq_dist(x, quad.node(k)) - table.values[k]);
            out[q] = best;
        }
        return out;
    }
    const double sigma2 = 1.0 - t;
    for (std::size_t q = 0; q < nq; ++q) {
        const auto pr =
            prox_envelope(table.values, quad, beta, queries_flat.subspan(q * d, d), sigma2);
        out[q] = pr.envelope;
    }
    return out;
}

}  // namespace sbb
