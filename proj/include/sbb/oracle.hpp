#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "sbb/exact_ot.hpp"
#include "sbb/measures.hpp"
#include "sbb/vec.hpp"

namespace sbb {

struct OracleResult {
    double value = 0.0;
    std::vector<double> minimizer;  // kappa weights on the oracle grid
    std::vector<double> grid;       // the grid nodes (1D)
    std::string method;
    std::size_t resolution = 0;
};

// ---------------------------------------------------------------------------
// Gaussian closed forms used as independent test references.
// ---------------------------------------------------------------------------

// W_2^2(N(m1, s1^2), N(m2, s2^2)) = (m1 - m2)^2 + (s1 - s2)^2 in 1D
// (no 1/2 convention, matching wasserstein2_sq).
inline double w2sq_gaussians_1d(double m1, double var1, double m2, double var2) {
    check(var1 > 0.0 && var2 > 0.0, "w2sq_gaussians_1d: variance must be positive");
    const double ds = std::sqrt(var1) - std::sqrt(var2);
    return (m1 - m2) * (m1 - m2) + ds * ds;
}

// KL(N(m, s^2) || N(y, 1)) = ((m - y)^2 + s^2 - 1 - log s^2) / 2.
inline double kl_gaussian_vs_unit_1d(double m, double var, double y) {
    check(var > 0.0, "kl_gaussian_vs_unit_1d: variance must be positive");
    return 0.5 * ((m - y) * (m - y) + var - 1.0 - std::log(var));
}

// C_SB^beta(x, delta_m) = |x - m|^2 / 2 + (d/2) log(1 + beta): the
// one-parameter Gaussian reduction of the mean-constrained representation,
// optimal kappa = N((x + beta m)/(1+beta) shifted to mean m, 1/(1+beta)).
inline double sb_single_atom_value(const Vec& x, const Vec& m, double beta) {
    check(beta > 0.0, "sb_single_atom_value: beta must be positive");
    check(x.size() == m.size(), "sb_single_atom_value: dimension mismatch");
    return 0.5 * sq_dist(std::span<const double>(x), std::span<const double>(m)) +
           0.5 * static_cast<double>(x.size()) * std::log1p(beta);
}

inline double gaussian_closed_form(const std::string& kind, const std::vector<double>& params) {
    if (kind == "w2sq_gaussians_1d") {
        check(params.size() == 4, "gaussian_closed_form: w2sq needs (m1,var1,m2,var2)");
        return w2sq_gaussians_1d(params[0], params[1], params[2], params[3]);
    }
    if (kind == "kl_gaussian_vs_unit_1d") {
        check(params.size() == 3, "gaussian_closed_form: kl needs (m,var,y)");
        return kl_gaussian_vs_unit_1d(params[0], params[1], params[2]);
    }
    if (kind == "sb_single_atom") {
        check(params.size() >= 3 && params.size() % 2 == 1,
              "gaussian_closed_form: sb needs (x..., m..., beta)");
        const std::size_t d = params.size() / 2;
        Vec x(params.begin(), params.begin() + d);
        Vec m(params.begin() + d, params.begin() + 2 * d);
        return sb_single_atom_value(x, m, params.back());
    }
    throw std::invalid_argument("gaussian_closed_form: unknown kind '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Central-difference gradient validation.
// ---------------------------------------------------------------------------

inline double finite_diff_check(const std::function<double(const Vec&)>& fn,
                                const std::function<Vec(const Vec&)>& grad_fn,
                                const std::vector<Vec>& points, double step = 1e-4) {
    double worst = 0.0;
    for (const auto& p : points) {
        const Vec g = grad_fn(p);
        for (std::size_t ax = 0; ax < p.size(); ++ax) {
            Vec hi = p, lo = p;
            hi[ax] += step;
            lo[ax] -= step;
            const double fd = (fn(hi) - fn(lo)) / (2.0 * step);
            worst = std::max(worst, std::abs(fd - g[ax]));
        }
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Brute-force mean-constrained inf-convolution (1D):
//   inf { H(kappa | gamma_x) + (beta/2) W_2^2(kappa, eta) : mean(kappa) = mean(eta) }
// over kappa on a fixed grid. Projected gradient on the transport-plan
// parametrization with a ramped penalty on the mean constraint, then an
// exponential-tilt polish that restores the mean exactly. The result is a
// feasible upper bound converging to C_SB^beta under grid refinement.
// ---------------------------------------------------------------------------

// Euclidean projection of v onto the simplex scaled to total mass s.
inline void project_simplex(std::vector<double>& v, double s) {
    const std::size_t n = v.size();
    std::vector<double> u(v);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, theta = 0.0;
    std::size_t rho = 0;
    for (std::size_t i = 0; i < n; ++i) {
        css += u[i];
        const double t = (css - s) / static_cast<double>(i + 1);
        if (u[i] - t > 0.0) {
            rho = i + 1;
            theta = t;
        }
    }
    (void)rho;
    for (double& x : v) x = std::max(0.0, x - theta);
}

struct BruteForceGrid {
    double lo = 0.0, hi = 0.0;
    std::size_t cells = 201;
};

inline OracleResult brute_force_infconv(const Vec& x, const DiscreteMeasure& eta, double beta,
                                        BruteForceGrid spec = {}) {
    check(x.size() == 1 && eta.dim() == 1, "brute_force_infconv: 1D only");
    check(beta > 0.0, "brute_force_infconv: beta must be positive");
    check(spec.cells >= 11 && spec.cells <= 201, "brute_force_infconv: grid must be 11..201 cells");

    if (spec.lo == 0.0 && spec.hi == 0.0) {
        double lo = x[0], hi = x[0];
        for (std::size_t j = 0; j < eta.size(); ++j) {
            lo = std::min(lo, eta.atom(j)[0]);
            hi = std::max(hi, eta.atom(j)[0]);
        }
        spec.lo = lo - 6.0;
        spec.hi = hi + 6.0;
    }

    const std::size_t K = spec.cells;
    const std::size_t J = eta.size();
    const double h = (spec.hi - spec.lo) / static_cast<double>(K - 1);
    std::vector<double> z(K);
    for (std::size_t k = 0; k < K; ++k) z[k] = spec.lo + h * static_cast<double>(k);

    // log reference mass per cell: vol * gamma_x(z_k)
    std::vector<double> log_ref(K);
    for (std::size_t k = 0; k < K; ++k)
        log_ref[k] = std::log(h) + log_gaussian_density(z[k], x[0], 1.0);

    std::vector<double> cost(K * J);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < J; ++j) {
            const double dz = z[k] - eta.atom(j)[0];
            cost[k * J + j] = 0.5 * beta * dz * dz;
        }

    const double eta_mean = barycenter(eta)[0];

    // Plan P with column sums eta_j; kappa = row sums.
    std::vector<double> P(K * J);
    for (std::size_t k = 0; k < K; ++k)
        for (std::size_t j = 0; j < J; ++j)
            P[k * J + j] = eta.weight(j) / static_cast<double>(K);

    std::vector<double> kappa(K), grad(K * J), col(K);
    auto row_sums = [&]() {
        std::fill(kappa.begin(), kappa.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < J; ++j) kappa[k] += P[k * J + j];
    };
    auto objective = [&](double lambda) {
        row_sums();
        double F = 0.0, mean = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            if (kappa[k] > 0.0) F += kappa[k] * (std::log(kappa[k]) - log_ref[k]);
            mean += kappa[k] * z[k];
        }
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t j = 0; j < J; ++j) F += P[k * J + j] * cost[k * J + j];
        const double dm = mean - eta_mean;
        return F + lambda * dm * dm;
    };

    // Mirror descent (exponentiated gradient) per column simplex: the
    // multiplicative update matches the entropic geometry of the objective
    // and never strands mass at zero.
    for (double lambda : {1e2, 1e3, 1e4, 1e5}) {
        double step = 1.0;
        double val = objective(lambda);
        for (std::size_t it = 0; it < 3000; ++it) {
            row_sums();
            double mean = 0.0;
            for (std::size_t k = 0; k < K; ++k) mean += kappa[k] * z[k];
            const double dm = mean - eta_mean;
            for (std::size_t k = 0; k < K; ++k) {
                const double ge = (kappa[k] > 0.0 ? std::log(kappa[k]) : -700.0) - log_ref[k] +
                                  1.0 + 2.0 * lambda * dm * z[k];
                for (std::size_t j = 0; j < J; ++j) grad[k * J + j] = ge + cost[k * J + j];
            }
            bool accepted = false;
            std::vector<double> saved = P;
            for (int half = 0; half < 50 && !accepted; ++half) {
                for (std::size_t j = 0; j < J; ++j) {
                    double mx = -1e300;
                    for (std::size_t k = 0; k < K; ++k) {
                        const double lk =
                            (saved[k * J + j] > 0.0 ? std::log(saved[k * J + j]) : -745.0) -
                            step * grad[k * J + j];
                        col[k] = lk;
                        mx = std::max(mx, lk);
                    }
                    double s = 0.0;
                    for (std::size_t k = 0; k < K; ++k) {
                        col[k] = std::exp(col[k] - mx);
                        s += col[k];
                    }
                    for (std::size_t k = 0; k < K; ++k) P[k * J + j] = eta.weight(j) * col[k] / s;
                }
                const double tv = objective(lambda);
                if (tv < val - 1e-13) {
                    val = tv;
                    accepted = true;
                } else {
                    step *= 0.5;
                }
            }
            if (!accepted) {
                P = std::move(saved);
                break;
            }
            step = std::min(1.0, step * 1.5);
        }
    }

    // Exponential tilt kappa <- kappa e^{theta z} / Z to restore the mean
    // exactly, then report the exact objective of the tilted measure.
    row_sums();
    double theta = 0.0;
    for (int it = 0; it < 100; ++it) {
        double s0 = 0.0, s1 = 0.0, s2 = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double w = kappa[k] * std::exp(theta * z[k]);
            s0 += w;
            s1 += w * z[k];
            s2 += w * z[k] * z[k];
        }
        const double mean = s1 / s0;
        const double var = s2 / s0 - mean * mean;
        const double f = mean - eta_mean;
        if (std::abs(f) < 1e-13 || var < 1e-15) break;
        theta -= f / var;
    }
    double s0 = 0.0, tilted_mean = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        kappa[k] *= std::exp(theta * z[k]);
        s0 += kappa[k];
        tilted_mean += kappa[k] * z[k];
    }
    if (std::abs(tilted_mean / s0 - eta_mean) > 1e-9)
        throw std::runtime_error("brute_force_infconv: mean constraint not restored");
    std::vector<double> katoms;
    std::vector<double> kweights;
    for (std::size_t k = 0; k < K; ++k) {
        kappa[k] /= s0;
        if (kappa[k] > 0.0) {
            katoms.push_back(z[k]);
            kweights.push_back(kappa[k]);
        }
    }
    const double ksum = std::accumulate(kweights.begin(), kweights.end(), 0.0);
    for (double& w : kweights) w /= ksum;

    double H = 0.0;
    std::size_t idx = 0;
    for (std::size_t k = 0; k < K; ++k) {
        if (kappa[k] <= 0.0) continue;
        H += kweights[idx] * (std::log(kweights[idx]) - log_ref[k]);
        ++idx;
    }
    const DiscreteMeasure kmeas(1, std::move(katoms), std::move(kweights));
    const double w2 = wasserstein2_sq(kmeas, eta).value;

    // Report the exact value of the piecewise-constant measure, not the
    // midpoint approximation: the cell average of -log gamma_x exceeds the
    // center value by h^2/24, and spreading each cell's mass adds h^2/12 of
    // within-cell variance to the squared transport cost. With these terms
    // the feasible sets nest under aligned refinement and the value cannot
    // go up.
    OracleResult res;
    res.value = H + h * h / 24.0 + 0.5 * beta * (w2 + h * h / 12.0);
    res.minimizer = kappa;
    res.grid = z;
    res.method = "pgd-plan-penalty-tilt";
    res.resolution = K;
    return res;
}

}  // namespace sbb
