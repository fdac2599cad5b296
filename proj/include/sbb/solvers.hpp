#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <vector>

#include "sbb/exact_ot.hpp"
#include "sbb/measures.hpp"
#include "sbb/quadrature.hpp"
#include "sbb/transforms.hpp"
#include "sbb/vec.hpp"

namespace sbb {

struct SolverOptions {
    double tol_inner = 1e-9;          // sup-norm of the inner dual gradient
    double tol_outer = 1e-8;          // relative dual gap and alpha movement
    std::size_t max_inner_iters = 5000;
    std::size_t max_outer_iters = 200;
    QuadSpec quad;
    std::uint64_t seed = 0;

    void validate() const {
        check(tol_inner > 0.0 && tol_outer > 0.0, "SolverOptions: tolerances must be positive");
        check(max_inner_iters > 0 && max_outer_iters > 0, "SolverOptions: iteration caps must be positive");
    }
};

// Deterministic work counters; these stand in for wall-clock timings so that
// exported artifacts stay byte-identical across runs.
struct WorkCounters {
    std::size_t outer_iterations = 0;
    std::size_t inner_iterations = 0;
    std::size_t prox_iterations = 0;
    std::size_t objective_evaluations = 0;
};

// ---------------------------------------------------------------------------
// Entropic optimal transport (Sinkhorn) between a discrete measure and an
// absolutely continuous grid measure:
//   V_EOT(alpha, rho) = inf_pi sum_i alpha_i H(pi_{x_i} | gamma_{x_i}),
// kernel K_ij = gamma(z_j - x_i) * vol_j, iterated in log domain.
// ---------------------------------------------------------------------------
struct SinkhornResult {
    double value = 0.0;
    Coupling plan;
    std::vector<double> log_u, log_v;
    bool converged = false;
    std::size_t iterations = 0;
};

inline SinkhornResult sinkhorn_eot(const DiscreteMeasure& alpha, const GridMeasure& rho,
                                   std::size_t max_iters = 20000, double tol = 1e-10) {
    check(alpha.dim() == rho.dim(), "sinkhorn_eot: dimension mismatch");
    const std::size_t n = alpha.size();
    const std::size_t m = rho.size();
    const double log_vol = std::log(rho.cell_volume());

    std::vector<double> logK(n * m, -kInf);
    std::vector<std::size_t> active;  // cells with positive mass
    for (std::size_t j = 0; j < m; ++j)
        if (rho.weights()[j] > 0.0) active.push_back(j);
    check(!active.empty(), "sinkhorn_eot: target has no mass");
    std::vector<Vec> centers(m);
    for (std::size_t j : active) centers[j] = rho.cell_center(j);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j : active)
            logK[i * m + j] = log_vol + log_gaussian_density(std::span<const double>(centers[j]),
                                                             alpha.atom(i), 1.0);

    std::vector<double> la(n), lb(m, -kInf);
    for (std::size_t i = 0; i < n; ++i)
        la[i] = alpha.weight(i) > 0.0 ? std::log(alpha.weight(i)) : -kInf;
    for (std::size_t j : active) lb[j] = std::log(rho.weights()[j]);

    std::vector<double> lu(n, 0.0), lv(m, 0.0);
    auto lse = [](std::span<const double> vals) {
        double mx = -kInf;
        for (double v : vals) mx = std::max(mx, v);
        if (mx == -kInf) return -kInf;
        double s = 0.0;
        for (double v : vals) s += std::exp(v - mx);
        return mx + std::log(s);
    };

    SinkhornResult res;
    std::vector<double> tmp(std::max(n, m));
    double row_err = kInf;
    std::size_t it = 0;
    for (; it < max_iters; ++it) {
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t c = 0;
            for (std::size_t j : active) tmp[c++] = logK[i * m + j] + lv[j];
            lu[i] = la[i] - lse(std::span<const double>(tmp.data(), c));
        }
        for (std::size_t j : active) {
            for (std::size_t i = 0; i < n; ++i) tmp[i] = logK[i * m + j] + lu[i];
            lv[j] = lb[j] - lse(std::span<const double>(tmp.data(), n));
        }
        // After the v-update the column marginals are exact; check the rows.
        row_err = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            std::size_t c = 0;
            for (std::size_t j : active) tmp[c++] = logK[i * m + j] + lv[j];
            const double ri = std::exp(lu[i] + lse(std::span<const double>(tmp.data(), c)));
            row_err += std::abs(ri - alpha.weight(i));
        }
        if (row_err <= tol) {
            res.converged = true;
            ++it;
            break;
        }
    }
    res.iterations = it;

    res.plan.rows = n;
    res.plan.cols = m;
    res.plan.mass.assign(n * m, 0.0);
    res.value = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (la[i] == -kInf) continue;
        for (std::size_t j : active) {
            const double lp = lu[i] + logK[i * m + j] + lv[j];
            const double p = std::exp(lp);
            res.plan.mass[i * m + j] = p;
            if (p > 0.0) res.value += p * (lu[i] + lv[j] - la[i]);
        }
    }
    res.log_u = std::move(lu);
    res.log_v = std::move(lv);
    return res;
}

// ---------------------------------------------------------------------------
// Inner dual problem of Algorithm 1, step "dual optimizer of
// V_EOT box W_beta(alpha, nu)":
//   maximize D(f) = sum_j f_j nu_j + sum_i alpha_i T_beta[f](a_i)
// by monotone backtracking gradient ascent. The gradient is
//   nu_j - sum_i alpha_i w_ij with w_ij the tilted quadrature mass of the
// Moreau argmin region of atom j under source point a_i, which is the exact
// gradient of the quadrature-discretized objective away from argmin ties.
// ---------------------------------------------------------------------------
struct InnerResult {
    Potential f;
    bool converged = false;
    std::size_t iterations = 0;
    double grad_inf_norm = 0.0;
    double objective = 0.0;
};

namespace detail {

struct InnerWorkspace {
    // c_kj = (beta/2)|z_k - y_j|^2, lg_ik = log q_k + log gamma(a_i - z_k)
    std::vector<double> c;   // K x J
    std::vector<double> lg;  // n x K
    std::size_t K = 0, J = 0, n = 0;

    InnerWorkspace(const DiscreteMeasure& alpha, const DiscreteMeasure& nu, double beta,
                   const QuadratureGrid& quad) {
        K = quad.size();
        J = nu.size();
        n = alpha.size();
        const std::size_t d = quad.dim;
        const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi);
        c.resize(K * J);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < J; ++j)
                c[k * J + j] = 0.5 * beta * sq_dist(quad.node(k), nu.atom(j));
        lg.resize(n * K);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < K; ++k)
                lg[i * K + k] = std::log(quad.weights[k]) -
                                0.5 * sq_dist(alpha.atom(i), quad.node(k)) + log_norm;
    }

    void moreau(const std::vector<double>& f, std::vector<double>& m,
                std::vector<std::size_t>* arg) const {
        m.resize(K);
        if (arg) arg->resize(K);
        for (std::size_t k = 0; k < K; ++k) {
            double best = kInf;
            std::size_t bj = 0;
            const double* ck = c.data() + k * J;
            for (std::size_t j = 0; j < J; ++j) {
                const double v = ck[j] - f[j];
                if (v < best) {
                    best = v;
                    bj = j;
                }
            }
            m[k] = best;
            if (arg) (*arg)[k] = bj;
        }
    }

    // Returns the objective; when grad != nullptr also fills the gradient,
    // and when hess != nullptr the J x J Hessian sum_i alpha_i (w w^T - diag w).
    double eval(const DiscreteMeasure& alpha, const DiscreteMeasure& nu,
                const std::vector<double>& f, std::vector<double>* grad,
                std::vector<double>& m_buf, std::vector<std::size_t>& arg_buf,
                std::vector<double>* hess = nullptr) const {
        moreau(f, m_buf, grad ? &arg_buf : nullptr);
        double obj = 0.0;
        for (std::size_t j = 0; j < J; ++j) obj += f[j] * nu.weight(j);
        if (grad) grad->assign(J, 0.0);
        if (hess) hess->assign(J * J, 0.0);
        std::vector<double> l(K), w(hess || grad ? J : 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* lgi = lg.data() + i * K;
            double mx = -kInf;
            for (std::size_t k = 0; k < K; ++k) {
                l[k] = lgi[k] - m_buf[k];
                mx = std::max(mx, l[k]);
            }
            if (mx == -kInf) throw EmptyMassError();
            double s = 0.0;
            for (std::size_t k = 0; k < K; ++k) {
                l[k] = std::exp(l[k] - mx);
                s += l[k];
            }
            obj += alpha.weight(i) * (-(mx + std::log(s)));  // + alpha_i T(a_i)
            if (grad) {
                std::fill(w.begin(), w.end(), 0.0);
                for (std::size_t k = 0; k < K; ++k) w[arg_buf[k]] += l[k] / s;
                const double ai = alpha.weight(i);
                for (std::size_t j = 0; j < J; ++j) (*grad)[j] -= ai * w[j];
                if (hess) {
                    for (std::size_t r = 0; r < J; ++r) {
                        if (w[r] == 0.0) continue;
                        double* hrow = hess->data() + r * J;
                        for (std::size_t c = 0; c < J; ++c) hrow[c] += ai * w[r] * w[c];
                        hrow[r] -= ai * w[r];
                    }
                }
            }
        }
        if (grad)
            for (std::size_t j = 0; j < J; ++j) (*grad)[j] += nu.weight(j);
        return obj;
    }
};

}  // namespace detail

namespace detail {

// Ascent direction (-H + lambda I)^{-1} g for the concave Hessian H, via
// dense Cholesky; falls back to the raw gradient when the solve degenerates.
inline std::vector<double> newton_ascent_direction(std::vector<double> H,
                                                   const std::vector<double>& g, double lambda) {
    const std::size_t J = g.size();
    for (std::size_t r = 0; r < J; ++r)
        for (std::size_t c = 0; c < J; ++c) {
            H[r * J + c] = -H[r * J + c];
            if (r == c) H[r * J + c] += lambda;
        }
    std::vector<double> L(J * J, 0.0);
    for (std::size_t r = 0; r < J; ++r)
        for (std::size_t c = 0; c <= r; ++c) {
            double s = H[r * J + c];
            for (std::size_t k = 0; k < c; ++k) s -= L[r * J + k] * L[c * J + k];
            if (r == c) {
                if (s <= 0.0) return g;  // fallback: plain gradient
                L[r * J + r] = std::sqrt(s);
            } else {
                L[r * J + c] = s / L[c * J + c];
            }
        }
    std::vector<double> d = g;
    for (std::size_t r = 0; r < J; ++r) {
        for (std::size_t k = 0; k < r; ++k) d[r] -= L[r * J + k] * d[k];
        d[r] /= L[r * J + r];
    }
    for (std::size_t r = J; r-- > 0;) {
        for (std::size_t k = r + 1; k < J; ++k) d[r] -= L[k * J + r] * d[k];
        d[r] /= L[r * J + r];
    }
    double ip = 0.0;
    for (std::size_t j = 0; j < J; ++j) ip += d[j] * g[j];
    if (!(ip > 0.0)) return g;
    return d;
}

}  // namespace detail

// Monotone backtracking ascent with a Newton preconditioner built from the
// exact concave Hessian of the discretized objective. Plain gradient steps
// stall on the argmin-region kinks when the target has many atoms; the
// preconditioned direction traverses each smooth piece in O(1) steps while
// the Armijo line search keeps the iteration monotone.
inline InnerResult inner_dual_solve(const DiscreteMeasure& alpha, const DiscreteMeasure& nu,
                                    double beta, const Potential& f_init,
                                    const QuadratureGrid& quad, const SolverOptions& opts = {},
                                    WorkCounters* wc = nullptr) {
    opts.validate();
    check(beta > 0.0, "inner_dual_solve: beta must be positive");
    check(f_init.values.size() == nu.size(), "inner_dual_solve: f_init does not index nu");
    detail::InnerWorkspace ws(alpha, nu, beta, quad);

    std::vector<double> f = f_init.values;
    std::vector<double> grad, hess, m_buf, trial;
    std::vector<std::size_t> arg_buf;

    // Tightening pre-pass: raise every f_j to its touch level
    // min_k (c_kj - m_k). The Moreau table is unchanged, int f dnu can only
    // grow, and atoms stranded with empty argmin regions (e.g. from the
    // q_beta start on dense targets) become active immediately.
    ws.moreau(f, m_buf, nullptr);
    for (std::size_t j = 0; j < ws.J; ++j) {
        double touch = kInf;
        for (std::size_t k = 0; k < ws.K; ++k) touch = std::min(touch, ws.c[k * ws.J + j] - m_buf[k]);
        f[j] = std::max(f[j], touch);
    }

    double obj = ws.eval(alpha, nu, f, &grad, m_buf, arg_buf, &hess);
    if (wc) ++wc->objective_evaluations;

    double hscale = 1e-12;
    for (std::size_t j = 0; j < ws.J; ++j) hscale = std::max(hscale, -hess[j * ws.J + j]);
    double lambda = 1e-6 * hscale;

    InnerResult out;
    std::size_t it = 0;
    for (; it < opts.max_inner_iters; ++it) {
        double gn = 0.0;
        for (double g : grad) gn = std::max(gn, std::abs(g));
        out.grad_inf_norm = gn;
        if (gn <= opts.tol_inner) {
            out.converged = true;
            break;
        }
        bool accepted = false;
        trial.resize(f.size());
        for (int boost = 0; boost < 4 && !accepted; ++boost) {
            const std::vector<double> dir = detail::newton_ascent_direction(hess, grad, lambda);
            double slope = 0.0;
            for (std::size_t j = 0; j < f.size(); ++j) slope += dir[j] * grad[j];
            double step = 1.0;
            for (int half = 0; half < 24; ++half) {
                for (std::size_t j = 0; j < f.size(); ++j) trial[j] = f[j] + step * dir[j];
                const double tv = ws.eval(alpha, nu, trial, nullptr, m_buf, arg_buf);
                if (wc) ++wc->objective_evaluations;
                if (tv >= obj + 1e-4 * step * slope) {
                    accepted = tv > obj + 1e-15 * (1.0 + std::abs(obj));
                    f.swap(trial);
                    obj = tv;
                    if (half == 0)
                        lambda = std::max(lambda / 3.0, 1e-10 * hscale);
                    else
                        lambda = std::min(lambda * std::pow(2.0, half), 1e8 * hscale);
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) lambda = std::min(lambda * 100.0, 1e8 * hscale);
        }
        if (!accepted) break;  // progress below floating-point resolution
        obj = ws.eval(alpha, nu, f, &grad, m_buf, arg_buf, &hess);
        if (wc) ++wc->objective_evaluations;
        for (std::size_t j = 0; j < ws.J; ++j) hscale = std::max(hscale, -hess[j * ws.J + j]);
    }
    if (wc) wc->inner_iterations += it;
    out.iterations = it;
    if (!out.converged) {
        double gn = 0.0;
        for (double g : grad) gn = std::max(gn, std::abs(g));
        out.grad_inf_norm = gn;
        out.converged = gn <= opts.tol_inner;
    }
    out.objective = obj;
    out.f = make_potential(nu, std::move(f));
    normalize_nu_mean_zero(out.f);
    return out;
}

// ---------------------------------------------------------------------------
// Dual objective D_beta[f] = int f dnu - int q_beta box (-T_beta[f]) dmu,
// the Moreau term being the continuous envelope evaluated by the proximal
// solver (so D_beta[f] = int f dnu - beta int (q_1 - u) dmu).
// ---------------------------------------------------------------------------
inline double dual_objective(const Potential& f, const DiscreteMeasure& mu,
                             const DiscreteMeasure& nu, double beta, const QuadratureGrid& quad,
                             WorkCounters* wc = nullptr) {
    check(f.values.size() == nu.size(), "dual_objective: f does not index nu");
    const auto table = moreau_at_nodes(f, beta, quad);
    double d = 0.0;
    for (std::size_t j = 0; j < nu.size(); ++j) d += f.values[j] * nu.weight(j);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto pr = prox_envelope(table.values, quad, beta, mu.atom(i), 1.0, 1e-10, 500,
                                      wc ? &wc->prox_iterations : nullptr);
        d -= mu.weight(i) * pr.envelope;
    }
    return d;
}

// ---------------------------------------------------------------------------
// The Schrödinger-Bass solution bundle and the outer loop (Algorithm 1).
// ---------------------------------------------------------------------------
struct SBSolution {
    double beta = 0.0;
    double value = 0.0;
    DiscreteMeasure mu;  // the source measure the solve was run on
    Potential f_star;
    DiscreteMeasure alpha_star;
    bool has_rho = false;
    GridMeasure rho_star;
    std::vector<double> dual_trace;
    std::vector<double> alpha_moves;  // W_2(alpha_i, alpha_{i+1}) per outer step
    Coupling coupling;
    bool converged = false;
    std::size_t iterations = 0;
    QuadratureGrid quad;
    WorkCounters work;
};

namespace detail {

struct ProxPush {
    DiscreteMeasure alpha;
    std::vector<Vec> y;          // prox point per mu atom
    double mu_envelope = 0.0;    // int q_beta box (-T[f]) dmu
};

inline ProxPush prox_push(const DiscreteMeasure& mu, const std::vector<double>& m_table,
                          const QuadratureGrid& quad, double beta, WorkCounters* wc) {
    ProxPush out;
    out.y.resize(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto pr = prox_envelope(m_table, quad, beta, mu.atom(i), 1.0, 1e-10, 500,
                                      wc ? &wc->prox_iterations : nullptr);
        out.y[i] = pr.y;
        out.mu_envelope += mu.weight(i) * pr.envelope;
    }
    out.alpha = make_merged_discrete(mu.dim(), out.y, mu.weights());
    return out;
}

}  // namespace detail

inline Coupling recover_coupling(const SBSolution& sol, const DiscreteMeasure& mu,
                                 const DiscreteMeasure& nu, double beta,
                                 const QuadratureGrid& quad) {
    check(sol.converged, "recover_coupling: solution did not converge");
    const auto table = moreau_at_nodes(sol.f_star, beta, quad);
    Coupling pi;
    pi.rows = mu.size();
    pi.cols = nu.size();
    pi.mass.assign(mu.size() * nu.size(), 0.0);
    std::vector<double> probs;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        const auto pr = prox_envelope(table.values, quad, beta, mu.atom(i));
        tilted_stats(quad, table.values, std::span<const double>(pr.y), 1.0, false, &probs);
        for (std::size_t k = 0; k < quad.size(); ++k)
            pi.mass[i * nu.size() + table.argmin[k]] += mu.weight(i) * probs[k];
    }
    return pi;
}

inline SBSolution sb_solve(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double beta,
                           const SolverOptions& opts = {},
                           const Potential* f_init = nullptr) {
    opts.validate();
    check(beta > 0.0, "sb_solve: beta must be positive");
    check(mu.dim() == nu.dim(), "sb_solve: dimension mismatch");

    SBSolution sol;
    sol.beta = beta;
    sol.mu = mu;

    // Quadrature box: target support plus the proximal targets of the first
    // iteration, x + (x - mean(nu)) / beta, which set the scale for small beta.
    const Vec nu_bar = barycenter(nu);
    QuadSpec quad_spec = opts.quad;
    if (opts.seed != 0) quad_spec.mc_seed = opts.seed;  // d > 2 Monte Carlo nodes
    std::vector<Vec> extra;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        Vec x = mu.atom_vec(i);
        extra.push_back(x);
        Vec y(x.size());
        for (std::size_t ax = 0; ax < x.size(); ++ax)
            y[ax] = x[ax] + (x[ax] - nu_bar[ax]) / beta;
        extra.push_back(y);
    }
    sol.quad = default_quadrature(nu, beta, extra, quad_spec);

    // Default start: q_beta on supp(nu) for desk-scale targets. On dense
    // targets the q_beta Moreau transform is won by the extreme atoms alone,
    // which strands the inner ascent; the zero potential (beta-semiconcave)
    // starts with every Voronoi region active instead.
    Potential f = f_init       ? make_potential(nu, f_init->values)
                  : nu.size() <= 40 ? q_beta_potential(nu, beta)
                                    : zero_potential(nu);
    if (f_init) f = semiconcave_envelope(f, beta);  // project arbitrary starts
    normalize_nu_mean_zero(f);

    auto trace_value = [&](const detail::ProxPush& push) {
        double d = -push.mu_envelope;
        for (std::size_t j = 0; j < nu.size(); ++j) d += f.values[j] * nu.weight(j);
        return d;
    };

    auto table = moreau_at_nodes(f, beta, sol.quad);
    auto push = detail::prox_push(mu, table.values, sol.quad, beta, &sol.work);
    double dual_prev = trace_value(push);
    sol.dual_trace.push_back(dual_prev);

    std::size_t it = 0;
    for (; it < opts.max_outer_iters; ++it) {
        const auto inner = inner_dual_solve(push.alpha, nu, beta, f, sol.quad, opts, &sol.work);
        f = inner.f;

        table = moreau_at_nodes(f, beta, sol.quad);
        auto push_next = detail::prox_push(mu, table.values, sol.quad, beta, &sol.work);
        const double dual = trace_value(push_next);
        sol.dual_trace.push_back(dual);

        const double move = wasserstein2(push.alpha, push_next.alpha);
        sol.alpha_moves.push_back(move);
        push = std::move(push_next);

        if (std::abs(dual - dual_prev) <= opts.tol_outer * (1.0 + std::abs(dual)) &&
            move <= opts.tol_outer) {
            sol.converged = true;
            dual_prev = dual;
            ++it;
            break;
        }
        dual_prev = dual;
    }
    sol.iterations = it;
    sol.work.outer_iterations = it;
    sol.value = dual_prev;
    sol.f_star = f;
    sol.alpha_star = push.alpha;

    // rho_star = sum_i mu_i chi_{y_i} materialized on the quadrature nodes.
    if (sol.quad.kind == QuadratureGrid::Kind::TensorTrapezoid) {
        std::vector<double> rho_w(sol.quad.size(), 0.0);
        std::vector<double> probs;
        for (std::size_t i = 0; i < mu.size(); ++i) {
            tilted_stats(sol.quad, table.values, std::span<const double>(push.y[i]), 1.0, false,
                         &probs);
            for (std::size_t k = 0; k < sol.quad.size(); ++k)
                rho_w[k] += mu.weight(i) * probs[k];
        }
        double s = 0.0;
        for (double w : rho_w) s += w;
        for (double& w : rho_w) w /= s;
        sol.rho_star = GridMeasure(sol.quad.origin, sol.quad.spacing, sol.quad.shape, rho_w);
        sol.has_rho = true;
    }

    if (sol.converged) sol.coupling = recover_coupling(sol, mu, nu, beta, sol.quad);
    return sol;
}

}  // namespace sbb
