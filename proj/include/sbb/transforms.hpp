#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "sbb/measures.hpp"
#include "sbb/quadrature.hpp"
#include "sbb/vec.hpp"

namespace sbb {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

class EmptyMassError : public std::runtime_error {
public:
    EmptyMassError() : std::runtime_error("gaussian_log_conv: integrand has no mass") {}
};

class ProximalFailure : public std::runtime_error {
public:
    ProximalFailure() : std::runtime_error("proximal solver did not reach tolerance") {}
};

enum class Normalization { Raw, NuMeanZero };

// Real vector indexed by the atoms of a measure. "NuMeanZero" declares the
// gauge sum_j w_j f_j = 0 used to pin the dual potential.
struct Potential {
    DiscreteMeasure support;
    std::vector<double> values;
    Normalization normalization = Normalization::Raw;

    void validate() const {
        check(values.size() == support.size(), "Potential: value count mismatch");
        double mean = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            check(std::isfinite(values[j]), "Potential: values must be finite");
            mean += support.weight(j) * values[j];
        }
        if (normalization == Normalization::NuMeanZero)
            check(std::abs(mean) <= 1e-10, "Potential: nu-mean-zero gauge violated");
    }
};

inline Potential make_potential(DiscreteMeasure support, std::vector<double> values,
                                Normalization norm = Normalization::Raw) {
    Potential f{std::move(support), std::move(values), norm};
    f.validate();
    return f;
}

inline Potential zero_potential(DiscreteMeasure support) {
    const std::size_t n = support.size();
    return make_potential(std::move(support), std::vector<double>(n, 0.0),
                          Normalization::NuMeanZero);
}

// q_beta potential on the support atoms, the textbook initialization.
inline Potential q_beta_potential(DiscreteMeasure support, double beta) {
    std::vector<double> v(support.size());
    for (std::size_t j = 0; j < support.size(); ++j) v[j] = 0.5 * beta * sq_norm(support.atom(j));
    return make_potential(std::move(support), std::move(v));
}

inline void normalize_nu_mean_zero(Potential& f) {
    double mean = 0.0;
    for (std::size_t j = 0; j < f.values.size(); ++j) mean += f.support.weight(j) * f.values[j];
    for (double& v : f.values) v -= mean;
    f.normalization = Normalization::NuMeanZero;
}

struct MoreauResult {
    std::vector<double> values;
    std::vector<std::size_t> argmin;
};

// (q_beta box (-f))(x) = min_j { (beta/2)|x - y_j|^2 - f_j }, ties resolved
// to the lowest index for deterministic subgradients.
inline MoreauResult moreau_transform(const Potential& f, double beta,
                                     std::span<const double> queries_flat) {
    check(beta > 0.0, "moreau_transform: beta must be positive");
    const std::size_t d = f.support.dim();
    check(queries_flat.size() % d == 0, "moreau_transform: query size mismatch");
    const std::size_t nq = queries_flat.size() / d;
    MoreauResult out;
    out.values.resize(nq);
    out.argmin.resize(nq);
    for (std::size_t q = 0; q < nq; ++q) {
        const auto x = queries_flat.subspan(q * d, d);
        double best = kInf;
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < f.support.size(); ++j) {
            const double v = 0.5 * beta * sq_dist(x, f.support.atom(j)) - f.values[j];
            if (v < best) {
                best = v;
                best_j = j;
            }
        }
        out.values[q] = best;
        out.argmin[q] = best_j;
    }
    return out;
}

inline MoreauResult moreau_at_nodes(const Potential& f, double beta, const QuadratureGrid& quad) {
    return moreau_transform(f, beta, std::span<const double>(quad.nodes));
}

// log((e^h) * gamma_{0;variance})(x) via log-sum-exp over quadrature nodes.
// h may contain -inf entries (zero mass there); an all-(-inf) integrand is
// an error.
inline std::vector<double> gaussian_log_conv(std::span<const double> h_at_nodes, double variance,
                                             std::span<const double> queries_flat,
                                             const QuadratureGrid& quad) {
    check(variance > 0.0, "gaussian_log_conv: variance must be positive");
    check(h_at_nodes.size() == quad.size(), "gaussian_log_conv: node value count mismatch");
    const std::size_t d = quad.dim;
    const std::size_t nq = queries_flat.size() / d;
    check(queries_flat.size() == nq * d, "gaussian_log_conv: query size mismatch");
    const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * variance);

    std::vector<double> lw(quad.size());
    for (std::size_t k = 0; k < quad.size(); ++k)
        lw[k] = std::log(quad.weights[k]) + h_at_nodes[k];

    std::vector<double> out(nq);
    std::vector<double> l(quad.size());
    for (std::size_t q = 0; q < nq; ++q) {
        const auto x = queries_flat.subspan(q * d, d);
        double m = -kInf;
        for (std::size_t k = 0; k < quad.size(); ++k) {
            l[k] = lw[k] - 0.5 * sq_dist(x, quad.node(k)) / variance;
            m = std::max(m, l[k]);
        }
        if (m == -kInf) throw EmptyMassError();
        double s = 0.0;
        for (std::size_t k = 0; k < quad.size(); ++k) s += std::exp(l[k] - m);
        out[q] = m + std::log(s) + log_norm;
    }
    return out;
}

// Statistics of the tilted density p(z_k) ~ q_k e^{-m_k} gamma_{0;var}(y - z_k):
// total log-mass (so T = -log_mass), mean, and optionally the symmetrized
// covariance. This single kernel backs T_beta values, gradients, Hessians of
// log g, and the coupling recovery.
struct TiltedStats {
    double log_mass = -kInf;
    Vec mean;
    std::vector<double> cov;  // d x d when requested
};

inline TiltedStats tilted_stats(const QuadratureGrid& quad, std::span<const double> m_at_nodes,
                                std::span<const double> y, double variance, bool want_cov = false,
                                std::vector<double>* probs_out = nullptr) {
    const std::size_t d = quad.dim;
    const std::size_t K = quad.size();
    const double log_norm = -0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * variance);
    std::vector<double> l(K);
    double mx = -kInf;
    for (std::size_t k = 0; k < K; ++k) {
        l[k] = std::log(quad.weights[k]) - m_at_nodes[k] - 0.5 * sq_dist(y, quad.node(k)) / variance;
        mx = std::max(mx, l[k]);
    }
    if (mx == -kInf) throw EmptyMassError();
    TiltedStats st;
    st.mean.assign(d, 0.0);
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        const double p = std::exp(l[k] - mx);
        l[k] = p;  // reuse as unnormalized probability
        s += p;
        const auto z = quad.node(k);
        for (std::size_t ax = 0; ax < d; ++ax) st.mean[ax] += p * z[ax];
    }
    for (std::size_t ax = 0; ax < d; ++ax) st.mean[ax] /= s;
    st.log_mass = mx + std::log(s) + log_norm;
    if (want_cov) {
        st.cov.assign(d * d, 0.0);
        for (std::size_t k = 0; k < K; ++k) {
            const auto z = quad.node(k);
            for (std::size_t r = 0; r < d; ++r)
                for (std::size_t c = r; c < d; ++c)
                    st.cov[r * d + c] += l[k] * (z[r] - st.mean[r]) * (z[c] - st.mean[c]);
        }
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = r; c < d; ++c) {
                st.cov[r * d + c] /= s;
                st.cov[c * d + r] = st.cov[r * d + c];
            }
    }
    if (probs_out) {
        probs_out->resize(K);
        for (std::size_t k = 0; k < K; ++k) (*probs_out)[k] = l[k] / s;
    }
    return st;
}

// T_beta[f](y) = -log(exp(-q_beta box (-f)) * gamma_{0;variance})(y).
// The canonical operator uses variance 1; the time-dependent variant of
// the value-function representation uses variance 1 - t.
inline std::vector<double> t_beta_from_table(std::span<const double> m_at_nodes,
                                             const QuadratureGrid& quad,
                                             std::span<const double> queries_flat,
                                             double variance = 1.0) {
    std::vector<double> neg_m(m_at_nodes.size());
    for (std::size_t k = 0; k < m_at_nodes.size(); ++k) neg_m[k] = -m_at_nodes[k];
    auto lc = gaussian_log_conv(neg_m, variance, queries_flat, quad);
    for (double& v : lc) v = -v;
    return lc;
}

inline std::vector<double> t_beta(const Potential& f, double beta,
                                  std::span<const double> queries_flat, const QuadratureGrid& quad,
                                  double variance = 1.0) {
    const auto table = moreau_at_nodes(f, beta, quad);
    return t_beta_from_table(table.values, quad, queries_flat, variance);
}

// grad T(y) = (y - E[Z]) / variance with E the tilted mean.
inline Vec t_beta_gradient(std::span<const double> m_at_nodes, const QuadratureGrid& quad,
                           std::span<const double> y, double variance = 1.0) {
    const auto st = tilted_stats(quad, m_at_nodes, y, variance);
    Vec g(quad.dim);
    for (std::size_t ax = 0; ax < quad.dim; ++ax) g[ax] = (y[ax] - st.mean[ax]) / variance;
    return g;
}

struct ProxResult {
    Vec y;            // minimizer of (beta/2)|x-y|^2 - T(y)
    double envelope;  // minimal value, i.e. (q_beta box (-T))(x)
    double t_at_y;    // T(y)
    std::size_t iterations = 0;
};

namespace detail {

// Solve H s = g for small SPD H (d x d) by Cholesky with a diagonal guard.
inline Vec solve_spd(std::vector<double> H, Vec g) {
    const std::size_t d = g.size();
    for (std::size_t r = 0; r < d; ++r) H[r * d + r] += 1e-12;
    std::vector<double> L(d * d, 0.0);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c <= r; ++c) {
            double s = H[r * d + c];
            for (std::size_t k = 0; k < c; ++k) s -= L[r * d + k] * L[c * d + k];
            if (r == c)
                L[r * d + r] = std::sqrt(std::max(s, 1e-14));
            else
                L[r * d + c] = s / L[c * d + c];
        }
    }
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t k = 0; k < r; ++k) g[r] -= L[r * d + k] * g[k];
        g[r] /= L[r * d + r];
    }
    for (std::size_t r = d; r-- > 0;) {
        for (std::size_t k = r + 1; k < d; ++k) g[r] -= L[k * d + r] * g[k];
        g[r] /= L[r * d + r];
    }
    return g;
}

}  // namespace detail

// Damped Newton iteration for the strongly convex proximal problem
//   min_y (beta/2)|x - y|^2 - T(y),
// initialized at y = x. Gradient and Hessian come from the tilted moments:
//   grad = beta(y - x) + (E[Z] - y)/var,
//   hess = (beta - 1/var) I + Cov[Z]/var^2,
// and steps are accepted on gradient-norm decrease, which stays resolvable
// in floating point all the way down to the 1e-10 residual contract.
inline ProxResult prox_envelope(std::span<const double> m_at_nodes, const QuadratureGrid& quad,
                                double beta, std::span<const double> x, double variance = 1.0,
                                double tol = 1e-10, std::size_t max_iters = 500,
                                std::size_t* iter_counter = nullptr) {
    const std::size_t d = quad.dim;
    Vec y(x.begin(), x.end());

    auto gradient = [&](const Vec& yy, const TiltedStats& st) {
        Vec g(d);
        for (std::size_t ax = 0; ax < d; ++ax)
            g[ax] = beta * (yy[ax] - x[ax]) + (st.mean[ax] - yy[ax]) / variance;
        return g;
    };
    auto norm = [](const Vec& v) { return std::sqrt(sq_norm(std::span<const double>(v))); };

    TiltedStats st = tilted_stats(quad, m_at_nodes, y, variance, true);
    Vec g = gradient(y, st);
    double gn = norm(g);
    std::size_t it = 0;
    for (; it < max_iters && gn > tol; ++it) {
        std::vector<double> H = st.cov;
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < d; ++c) {
                H[r * d + c] /= variance * variance;
                if (r == c) H[r * d + c] += beta - 1.0 / variance;
            }
        const Vec dir = detail::solve_spd(std::move(H), g);
        double step = 1.0;
        bool accepted = false;
        for (int half = 0; half < 60; ++half) {
            Vec trial(d);
            for (std::size_t ax = 0; ax < d; ++ax) trial[ax] = y[ax] - step * dir[ax];
            TiltedStats tst = tilted_stats(quad, m_at_nodes, trial, variance, true);
            Vec tg = gradient(trial, tst);
            const double tgn = norm(tg);
            if (tgn <= (1.0 - 1e-4 * step) * gn) {
                y = std::move(trial);
                st = std::move(tst);
                g = std::move(tg);
                gn = tgn;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;  // at the floating-point floor; residual check decides
    }
    if (iter_counter) *iter_counter += it;
    if (gn > tol) throw ProximalFailure();

    ProxResult out;
    out.t_at_y = -st.log_mass;
    out.envelope = 0.5 * beta * sq_dist(x, std::span<const double>(y)) + st.log_mass;
    out.y = std::move(y);
    out.iterations = it;
    return out;
}

// Double Moreau transform g = (f^{C_W})^{C_W} evaluated on a lattice over
// co(supp f) padded by 3/sqrt(beta). Always g >= f; equality on the atoms
// characterizes beta-semiconcave data.
inline Potential semiconcave_envelope(const Potential& f, double beta,
                                      std::size_t nodes_per_axis = 0) {
    check(beta > 0.0, "semiconcave_envelope: beta must be positive");
    const std::size_t d = f.support.dim();
    if (nodes_per_axis == 0) nodes_per_axis = (d == 1) ? 401 : 101;
    Vec lo(d, kInf), hi(d, -kInf);
    for (std::size_t j = 0; j < f.support.size(); ++j) {
        const auto y = f.support.atom(j);
        for (std::size_t ax = 0; ax < d; ++ax) {
            lo[ax] = std::min(lo[ax], y[ax]);
            hi[ax] = std::max(hi[ax], y[ax]);
        }
    }
    const double pad = 3.0 / std::sqrt(beta);
    for (std::size_t ax = 0; ax < d; ++ax) {
        lo[ax] -= pad;
        hi[ax] += pad;
    }
    const auto lattice = tensor_trapezoid(lo, hi, std::vector<std::size_t>(d, nodes_per_axis));
    const auto m = moreau_transform(f, beta, std::span<const double>(lattice.nodes));

    std::vector<double> g(f.support.size(), kInf);
    for (std::size_t k = 0; k < lattice.size(); ++k) {
        const auto x = lattice.node(k);
        for (std::size_t j = 0; j < f.support.size(); ++j) {
            const double v = 0.5 * beta * sq_dist(x, f.support.atom(j)) - m.values[k];
            g[j] = std::min(g[j], v);
        }
    }
    return make_potential(f.support, std::move(g));
}

// u = q_1 - (1/beta) q_beta box (-T_beta[f]): convex, (1+beta)/beta-smooth.
// The evaluator returns u(x) and grad u(x), the proximal point itself.
class SmoothPotential {
public:
    SmoothPotential(Potential f, double beta, QuadratureGrid quad)
        : f_(std::move(f)), beta_(beta), quad_(std::move(quad)) {
        check(beta_ > 0.0, "SmoothPotential: beta must be positive");
        m_ = moreau_at_nodes(f_, beta_, quad_).values;
    }

    struct Eval {
        double value;
        Vec gradient;
        double t_at_gradient;
        std::size_t prox_iterations;
    };

    Eval eval(std::span<const double> x) const {
        const auto pr = prox_envelope(m_, quad_, beta_, x);
        Eval e;
        e.value = 0.5 * sq_norm(x) - pr.envelope / beta_;
        e.gradient = pr.y;
        e.t_at_gradient = pr.t_at_y;
        e.prox_iterations = pr.iterations;
        return e;
    }

    double value(const Vec& x) const { return eval(x).value; }
    Vec gradient(const Vec& x) const { return eval(x).gradient; }

    const Potential& base_potential() const { return f_; }
    double beta() const { return beta_; }
    const QuadratureGrid& quadrature() const { return quad_; }
    const std::vector<double>& moreau_table() const { return m_; }

private:
    Potential f_;
    double beta_;
    QuadratureGrid quad_;
    std::vector<double> m_;
};

inline SmoothPotential smooth_potential(Potential f, double beta, QuadratureGrid quad) {
    return SmoothPotential(std::move(f), beta, std::move(quad));
}

}  // namespace sbb
