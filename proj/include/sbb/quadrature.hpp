#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "sbb/measures.hpp"
#include "sbb/rng.hpp"
#include "sbb/vec.hpp"

namespace sbb {

// Nodes and weights for integrals against Lebesgue measure. Tensor
// trapezoid rules keep their axis structure so grid measures can be
// materialized on the same nodes; Monte Carlo nodes are the d > 2 fallback.
struct QuadratureGrid {
    enum class Kind { TensorTrapezoid, MonteCarlo };

    std::size_t dim = 0;
    Kind kind = Kind::TensorTrapezoid;
    std::vector<double> nodes;    // flat K x dim
    std::vector<double> weights;  // K, positive

    // Tensor structure (valid for Kind::TensorTrapezoid).
    Vec origin, spacing;
    std::vector<std::size_t> shape;

    std::size_t size() const { return weights.size(); }
    std::span<const double> node(std::size_t k) const { return row(nodes, k, dim); }
};

struct QuadSpec {
    std::size_t max_nodes_1d = 401;
    std::size_t max_nodes_2d = 101;  // per axis
    double gaussian_pad = 6.0;       // reference Gaussian spread
    std::size_t mc_nodes = 100000;
    std::uint64_t mc_seed = 20260810;
    // Lump-resolution scale for desk-size targets (<= 60 atoms): node
    // spacing <= lump_scale / sqrt(1+beta) so that per-node mass lumps do
    // not dominate recovered marginals. 0 disables the rule (simulation
    // grids want value accuracy only).
    double lump_scale = 2e-3;
};

inline constexpr double kInfGap = 1e300;

inline QuadratureGrid tensor_trapezoid(const Vec& lo, const Vec& hi,
                                       const std::vector<std::size_t>& nodes_per_axis) {
    const std::size_t d = lo.size();
    check(d >= 1 && hi.size() == d && nodes_per_axis.size() == d, "tensor_trapezoid: bad box");
    QuadratureGrid q;
    q.dim = d;
    q.kind = QuadratureGrid::Kind::TensorTrapezoid;
    q.origin.resize(d);
    q.spacing.resize(d);
    q.shape = nodes_per_axis;
    std::size_t total = 1;
    for (std::size_t ax = 0; ax < d; ++ax) {
        check(hi[ax] > lo[ax] && nodes_per_axis[ax] >= 2, "tensor_trapezoid: bad axis");
        q.origin[ax] = lo[ax];
        q.spacing[ax] = (hi[ax] - lo[ax]) / static_cast<double>(nodes_per_axis[ax] - 1);
        total *= nodes_per_axis[ax];
    }
    q.nodes.resize(total * d);
    q.weights.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
        std::size_t rem = k;
        double w = 1.0;
        for (std::size_t ax = d; ax-- > 0;) {
            const std::size_t idx = rem % q.shape[ax];
            rem /= q.shape[ax];
            q.nodes[k * d + ax] = q.origin[ax] + static_cast<double>(idx) * q.spacing[ax];
            w *= q.spacing[ax] * ((idx == 0 || idx + 1 == q.shape[ax]) ? 0.5 : 1.0);
        }
        q.weights[k] = w;
    }
    return q;
}

// Importance-sampled nodes for d > 2 (best effort): proposal is a uniform
// mixture of unit-ish Gaussians at the given centers.
inline QuadratureGrid monte_carlo_grid(const std::vector<Vec>& centers, double proposal_var,
                                       std::size_t n_nodes, std::uint64_t seed) {
    check(!centers.empty(), "monte_carlo_grid: no proposal centers");
    const std::size_t d = centers.front().size();
    QuadratureGrid q;
    q.dim = d;
    q.kind = QuadratureGrid::Kind::MonteCarlo;
    q.nodes.resize(n_nodes * d);
    q.weights.resize(n_nodes);
    const double logJ = std::log(static_cast<double>(centers.size()));
    for (std::size_t k = 0; k < n_nodes; ++k) {
        const std::size_t c = counter_hash(seed, 0, k, 0) % centers.size();
        for (std::size_t ax = 0; ax < d; ++ax)
            q.nodes[k * d + ax] =
                centers[c][ax] + std::sqrt(proposal_var) * counter_normal(seed, 1, k, ax);
        double lq = -std::numeric_limits<double>::infinity();
        for (const auto& ctr : centers) {
            const double lg = log_gaussian_density(q.node(k), std::span<const double>(ctr), proposal_var);
            lq = std::max(lq, lg);
        }
        double s = 0.0;
        for (const auto& ctr : centers)
            s += std::exp(log_gaussian_density(q.node(k), std::span<const double>(ctr), proposal_var) - lq);
        const double log_prop = lq + std::log(s) - logJ;
        q.weights[k] = std::exp(-log_prop) / static_cast<double>(n_nodes);
    }
    return q;
}

// Default carrier for the Gaussian convolutions: a box covering the target
// support together with any extra points the solver will query (proximal
// targets), padded by the reference Gaussian spread plus the Moreau spread
// 3/sqrt(beta).
inline QuadratureGrid default_quadrature(const DiscreteMeasure& nu, double beta,
                                         const std::vector<Vec>& extra_points,
                                         const QuadSpec& spec = {}) {
    check(beta > 0.0, "default_quadrature: beta must be positive");
    const std::size_t d = nu.dim();
    Vec lo(d, std::numeric_limits<double>::infinity());
    Vec hi(d, -std::numeric_limits<double>::infinity());
    auto absorb = [&](std::span<const double> p) {
        for (std::size_t ax = 0; ax < d; ++ax) {
            lo[ax] = std::min(lo[ax], p[ax]);
            hi[ax] = std::max(hi[ax], p[ax]);
        }
    };
    for (std::size_t j = 0; j < nu.size(); ++j) absorb(nu.atom(j));
    for (const auto& p : extra_points) absorb(std::span<const double>(p));
    const double pad = spec.gaussian_pad + 3.0 / std::sqrt(beta);
    for (std::size_t ax = 0; ax < d; ++ax) {
        lo[ax] -= pad;
        hi[ax] += pad;
    }
    if (d == 1) {
        // Node spacing must resolve three scales: the atom gaps (argmin
        // region boundaries), the tilted spikes of width 1/sqrt(1+beta) at
        // large beta, and, for desk-scale targets, the per-node mass lumps
        // that bound the recovered-marginal accuracy. The budget is capped;
        // callers may raise the base via QuadSpec.
        const std::size_t base = spec.max_nodes_1d;
        const std::size_t cap = std::max<std::size_t>(16001, base);
        const double width = hi[0] - lo[0];
        double spacing = width / static_cast<double>(base - 1);
        std::vector<double> xs(nu.size());
        for (std::size_t j = 0; j < nu.size(); ++j) xs[j] = nu.atom(j)[0];
        std::sort(xs.begin(), xs.end());
        double gap = kInfGap;
        for (std::size_t j = 1; j < xs.size(); ++j) gap = std::min(gap, xs[j] - xs[j - 1]);
        // Atoms closer than the tilt width 1/sqrt(1+beta) fuse into one blob;
        // refining below a third of that width buys nothing.
        spacing = std::min(spacing, std::max(gap / 8.0, 1.0 / (3.0 * std::sqrt(1.0 + beta))));
        spacing = std::min(spacing, 0.25 / std::sqrt(1.0 + beta));
        if (spec.lump_scale > 0.0 && nu.size() <= 60)
            spacing = std::min(spacing, spec.lump_scale / std::sqrt(1.0 + beta));
        const auto wanted = static_cast<std::size_t>(std::ceil(width / spacing)) + 1;
        return tensor_trapezoid(lo, hi, {std::clamp(wanted, base, cap)});
    }
    if (d == 2) {
        return tensor_trapezoid(lo, hi, std::vector<std::size_t>(d, spec.max_nodes_2d));
    }
    std::vector<Vec> centers;
    for (std::size_t j = 0; j < nu.size(); ++j) centers.push_back(nu.atom_vec(j));
    for (const auto& p : extra_points) centers.push_back(p);
    return monte_carlo_grid(centers, 1.0 + 3.0 / beta, spec.mc_nodes, spec.mc_seed);
}

}  // namespace sbb
