#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "sbb/measures.hpp"
#include "sbb/vec.hpp"

namespace sbb {

// Exact solver for the transportation problem
//   min sum_ij P_ij c_ij   s.t.  P >= 0, row sums = a, col sums = b,
// by the transportation simplex (tree basis + MODI potentials). Intended
// for desk-scale instances; the W_2 facade below enforces a size cap.
class TransportSimplex {
public:
    static Coupling solve(const std::vector<double>& cost, std::size_t m, std::size_t n,
                          const std::vector<double>& a, const std::vector<double>& b) {
        TransportSimplex s(cost, m, n, a, b);
        s.run();
        Coupling plan;
        plan.rows = m;
        plan.cols = n;
        plan.mass.assign(m * n, 0.0);
        for (std::size_t e = 0; e < s.basis_.size(); ++e) {
            const auto& cell = s.basis_[e];
            if (cell.flow > 0.0) plan.mass[cell.i * n + cell.j] = cell.flow;
        }
        return plan;
    }

private:
    struct Cell {
        std::size_t i, j;
        double flow;
    };

    TransportSimplex(const std::vector<double>& cost, std::size_t m, std::size_t n,
                     const std::vector<double>& a, const std::vector<double>& b)
        : c_(cost), m_(m), n_(n) {
        check(a.size() == m && b.size() == n && cost.size() == m * n,
              "TransportSimplex: size mismatch");
        const double sa = std::accumulate(a.begin(), a.end(), 0.0);
        const double sb = std::accumulate(b.begin(), b.end(), 0.0);
        check(std::abs(sa - sb) <= 1e-9, "TransportSimplex: unbalanced marginals");
        northwest_init(a, b);
        double scale = 1.0;
        for (double x : c_) scale = std::max(scale, std::abs(x));
        tol_ = 1e-11 * scale;
    }

    void northwest_init(std::vector<double> a, std::vector<double> b) {
        std::size_t i = 0, j = 0;
        while (true) {
            const double f = std::min(a[i], b[j]);
            basis_.push_back({i, j, f});
            a[i] -= f;
            b[j] -= f;
            if (i + 1 == m_ && j + 1 == n_) break;
            // Advance exactly one index per step; ties leave a degenerate
            // basic cell so the basis keeps m + n - 1 edges.
            if (a[i] <= b[j] && i + 1 < m_)
                ++i;
            else
                ++j;
        }
    }

    void compute_potentials(std::vector<double>& u, std::vector<double>& v) const {
        const double unset = std::numeric_limits<double>::quiet_NaN();
        u.assign(m_, unset);
        v.assign(n_, unset);
        std::vector<std::vector<std::size_t>> row_edges(m_), col_edges(n_);
        for (std::size_t e = 0; e < basis_.size(); ++e) {
            row_edges[basis_[e].i].push_back(e);
            col_edges[basis_[e].j].push_back(e);
        }
        // The basis is a spanning tree; propagate u_i + v_j = c_ij from u_0 = 0.
        std::vector<std::pair<bool, std::size_t>> stack;  // (is_row, index)
        u[0] = 0.0;
        stack.push_back({true, 0});
        while (!stack.empty()) {
            auto [is_row, idx] = stack.back();
            stack.pop_back();
            if (is_row) {
                for (std::size_t e : row_edges[idx]) {
                    const std::size_t j = basis_[e].j;
                    if (std::isnan(v[j])) {
                        v[j] = c_[idx * n_ + j] - u[idx];
                        stack.push_back({false, j});
                    }
                }
            } else {
                for (std::size_t e : col_edges[idx]) {
                    const std::size_t i = basis_[e].i;
                    if (std::isnan(u[i])) {
                        u[i] = c_[i * n_ + idx] - v[idx];
                        stack.push_back({true, i});
                    }
                }
            }
        }
    }

    // Unique path i* -> j* through the tree; returns basis edge indices.
    bool find_path(std::size_t i_star, std::size_t j_star, std::vector<std::size_t>& path) const {
        std::vector<std::vector<std::size_t>> row_edges(m_), col_edges(n_);
        for (std::size_t e = 0; e < basis_.size(); ++e) {
            row_edges[basis_[e].i].push_back(e);
            col_edges[basis_[e].j].push_back(e);
        }
        std::vector<std::size_t> parent_edge(m_ + n_, SIZE_MAX);
        std::vector<char> seen(m_ + n_, 0);
        std::vector<std::size_t> stack;  // node ids: rows [0,m), cols m + j
        seen[i_star] = 1;
        stack.push_back(i_star);
        while (!stack.empty()) {
            const std::size_t node = stack.back();
            stack.pop_back();
            if (node < m_) {
                for (std::size_t e : row_edges[node]) {
                    const std::size_t other = m_ + basis_[e].j;
                    if (!seen[other]) {
                        seen[other] = 1;
                        parent_edge[other] = e;
                        stack.push_back(other);
                    }
                }
            } else {
                for (std::size_t e : col_edges[node - m_]) {
                    const std::size_t other = basis_[e].i;
                    if (!seen[other]) {
                        seen[other] = 1;
                        parent_edge[other] = e;
                        stack.push_back(other);
                    }
                }
            }
        }
        const std::size_t target = m_ + j_star;
        if (!seen[target]) return false;
        path.clear();
        std::size_t node = target;
        while (node != i_star) {
            const std::size_t e = parent_edge[node];
            path.push_back(e);
            const std::size_t i = basis_[e].i, j = m_ + basis_[e].j;
            node = (node == j) ? i : j;
        }
        std::reverse(path.begin(), path.end());
        return true;
    }

    void run() {
        const std::size_t max_iters = 200 * (m_ * n_ + 16);
        for (std::size_t iter = 0; iter < max_iters; ++iter) {
            std::vector<double> u, v;
            compute_potentials(u, v);
            // Entering cell: most negative reduced cost; Bland (lowest index)
            // every 64th iteration to rule out cycling on degenerate bases.
            const bool bland = (iter % 64) == 63;
            double best = -tol_;
            std::size_t bi = SIZE_MAX, bj = SIZE_MAX;
            for (std::size_t i = 0; i < m_ && (bi == SIZE_MAX || !bland); ++i) {
                for (std::size_t j = 0; j < n_; ++j) {
                    const double r = c_[i * n_ + j] - u[i] - v[j];
                    if (r < best) {
                        best = r;
                        bi = i;
                        bj = j;
                        if (bland) break;
                    }
                }
            }
            if (bi == SIZE_MAX) return;  // optimal

            std::vector<std::size_t> path;
            if (!find_path(bi, bj, path)) throw std::logic_error("TransportSimplex: broken basis");
            // Path alternates row->col (gains flow has sign -) starting from
            // the entering cell which gains. Edges leaving a row node carry -,
            // edges leaving a col node carry +.
            double theta = std::numeric_limits<double>::infinity();
            std::size_t leave = SIZE_MAX;
            for (std::size_t k = 0; k < path.size(); k += 2) {
                const double f = basis_[path[k]].flow;
                if (f < theta) {
                    theta = f;
                    leave = path[k];
                }
            }
            if (leave == SIZE_MAX) throw std::logic_error("TransportSimplex: no leaving edge");
            for (std::size_t k = 0; k < path.size(); ++k) {
                if (k % 2 == 0)
                    basis_[path[k]].flow -= theta;
                else
                    basis_[path[k]].flow += theta;
            }
            basis_[leave] = {bi, bj, theta};
        }
        throw std::runtime_error("TransportSimplex: iteration cap reached");
    }

    const std::vector<double>& c_;
    std::size_t m_, n_;
    std::vector<Cell> basis_;
    double tol_ = 1e-11;
};

// min_P sum P_ij cost_ij over the transport polytope; arbitrary dense costs.
inline Coupling transport_lp(const std::vector<double>& cost, std::size_t m, std::size_t n,
                             const std::vector<double>& a, const std::vector<double>& b) {
    return TransportSimplex::solve(cost, m, n, a, b);
}

struct W2Result {
    double value = 0.0;  // min of sum pi_ij |x_i - y_j|^2 (no 1/2 inside)
    Coupling plan;
};

// Monotone (sorted) coupling: exact in one dimension for the squared cost.
inline W2Result wasserstein2_sq_sorted_1d(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    std::vector<std::size_t> ia(a.size()), ib(b.size());
    std::iota(ia.begin(), ia.end(), 0);
    std::iota(ib.begin(), ib.end(), 0);
    std::sort(ia.begin(), ia.end(),
              [&](std::size_t l, std::size_t r) { return a.atom(l)[0] < a.atom(r)[0]; });
    std::sort(ib.begin(), ib.end(),
              [&](std::size_t l, std::size_t r) { return b.atom(l)[0] < b.atom(r)[0]; });

    W2Result res;
    res.plan.rows = a.size();
    res.plan.cols = b.size();
    res.plan.mass.assign(a.size() * b.size(), 0.0);

    std::size_t p = 0, q = 0;
    double ra = a.weight(ia[0]), rb = b.weight(ib[0]);
    while (true) {
        const double take = std::min(ra, rb);
        if (take > 0.0) {
            const std::size_t i = ia[p], j = ib[q];
            res.plan.at(i, j) += take;
            const double d = a.atom(i)[0] - b.atom(j)[0];
            res.value += take * d * d;
        }
        if (ra <= rb) {
            rb -= ra;
            if (++p == a.size()) break;
            ra = a.weight(ia[p]);
        } else {
            ra -= rb;
            if (++q == b.size()) break;
            rb = b.weight(ib[q]);
        }
    }
    return res;
}

inline constexpr std::size_t kW2LpEntryCap = 50000;

// Exact quadratic Wasserstein distance between finite-support measures.
// Convention: W_2^2 = min of the plain squared distance (no 1/2 factor).
// d = 1 uses the sorted quantile coupling; d >= 2 an exact LP at desk scale.
inline W2Result wasserstein2_sq(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    check(a.dim() == b.dim(), "wasserstein2_sq: dimension mismatch");
    check(a.size() > 0 && b.size() > 0, "wasserstein2_sq: empty support");
    if (a.dim() == 1) return wasserstein2_sq_sorted_1d(a, b);
    check(a.size() * b.size() <= kW2LpEntryCap, "wasserstein2_sq: instance exceeds LP size cap");
    std::vector<double> cost(a.size() * b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            cost[i * b.size() + j] = sq_dist(a.atom(i), b.atom(j));
    W2Result res;
    res.plan = transport_lp(cost, a.size(), b.size(), a.weights(), b.weights());
    res.value = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            res.value += res.plan.at(i, j) * cost[i * b.size() + j];
    return res;
}

inline W2Result wasserstein2_sq(const GridMeasure& a, const DiscreteMeasure& b) {
    return wasserstein2_sq(a.to_discrete(), b);
}
inline W2Result wasserstein2_sq(const DiscreteMeasure& a, const GridMeasure& b) {
    return wasserstein2_sq(a, b.to_discrete());
}
inline W2Result wasserstein2_sq(const GridMeasure& a, const GridMeasure& b) {
    return wasserstein2_sq(a.to_discrete(), b.to_discrete());
}

inline double wasserstein2(const DiscreteMeasure& a, const DiscreteMeasure& b) {
    return std::sqrt(std::max(0.0, wasserstein2_sq(a, b).value));
}

}  // namespace sbb
