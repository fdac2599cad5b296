#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbb/vec.hpp"

namespace sbb {

inline constexpr double kWeightSumTolDiscrete = 1e-12;
inline constexpr double kWeightSumTolGrid = 1e-10;
inline constexpr double kCouplingMarginalTol = 1e-9;
inline constexpr double kAtomMergeTol = 1e-12;

// Thrown by relative_entropy_gaussian when the input has atoms: relative
// entropy against an absolutely continuous reference is infinite.
class InfiniteEntropyError : public std::runtime_error {
public:
    InfiniteEntropyError() : std::runtime_error("relative entropy is infinite for atomic input") {}
};

inline double log_gaussian_density(std::span<const double> z, std::span<const double> mean,
                                   double variance) {
    const double d = static_cast<double>(z.size());
    return -0.5 * sq_dist(z, mean) / variance -
           0.5 * d * std::log(2.0 * std::numbers::pi * variance);
}

inline double log_gaussian_density(double z, double mean, double variance) {
    const double dz = z - mean;
    return -0.5 * dz * dz / variance - 0.5 * std::log(2.0 * std::numbers::pi * variance);
}

// Weighted atoms in R^d. Weights sum to one; atoms are pairwise distinct.
class DiscreteMeasure {
public:
    DiscreteMeasure() = default;

    DiscreteMeasure(std::size_t dim, std::vector<double> atoms_flat, std::vector<double> weights)
        : dim_(dim), atoms_(std::move(atoms_flat)), weights_(std::move(weights)) {
        validate();
    }

    static DiscreteMeasure from_points(const std::vector<Vec>& pts, std::vector<double> weights) {
        check(!pts.empty(), "DiscreteMeasure: empty support");
        const std::size_t d = pts.front().size();
        std::vector<double> flat;
        flat.reserve(pts.size() * d);
        for (const auto& p : pts) {
            check(p.size() == d, "DiscreteMeasure: inconsistent dimension across atoms");
            flat.insert(flat.end(), p.begin(), p.end());
        }
        return DiscreteMeasure(d, std::move(flat), std::move(weights));
    }

    static DiscreteMeasure dirac(const Vec& x) {
        return DiscreteMeasure(x.size(), x, {1.0});
    }

    // Uniform weights on the given 1D atoms.
    static DiscreteMeasure uniform_1d(std::vector<double> atoms) {
        const std::size_t n = atoms.size();
        return DiscreteMeasure(1, std::move(atoms),
                               std::vector<double>(n, 1.0 / static_cast<double>(n)));
    }

    std::size_t dim() const { return dim_; }
    std::size_t size() const { return weights_.size(); }
    std::span<const double> atom(std::size_t i) const { return row(atoms_, i, dim_); }
    const std::vector<double>& atoms_flat() const { return atoms_; }
    const std::vector<double>& weights() const { return weights_; }
    double weight(std::size_t i) const { return weights_[i]; }

    Vec atom_vec(std::size_t i) const {
        auto a = atom(i);
        return Vec(a.begin(), a.end());
    }

private:
    void validate() const {
        check(dim_ > 0, "DiscreteMeasure: dimension must be positive");
        check(!weights_.empty(), "DiscreteMeasure: empty support");
        check(atoms_.size() == weights_.size() * dim_, "DiscreteMeasure: atom/weight size mismatch");
        double s = 0.0;
        for (double w : weights_) {
            check(w >= 0.0, "DiscreteMeasure: negative weight");
            s += w;
        }
        check(std::abs(s - 1.0) <= kWeightSumTolDiscrete, "DiscreteMeasure: weights must sum to 1");
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = i + 1; j < size(); ++j)
                check(inf_dist(atom(i), atom(j)) > kAtomMergeTol,
                      "DiscreteMeasure: atoms must be pairwise distinct");
    }

    std::size_t dim_ = 0;
    std::vector<double> atoms_;   // row-major n x dim
    std::vector<double> weights_;
};

// Probability mass on a regular grid of cells; origin is the center of the
// first cell, so cell centers are origin + index * spacing per axis.
class GridMeasure {
public:
    GridMeasure() = default;

    GridMeasure(Vec origin, Vec spacing, std::vector<std::size_t> shape, std::vector<double> weights)
        : origin_(std::move(origin)), spacing_(std::move(spacing)), shape_(std::move(shape)),
          weights_(std::move(weights)) {
        validate();
    }

    std::size_t dim() const { return origin_.size(); }
    const Vec& origin() const { return origin_; }
    const Vec& spacing() const { return spacing_; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    const std::vector<double>& weights() const { return weights_; }
    std::size_t size() const { return weights_.size(); }

    double cell_volume() const {
        double v = 1.0;
        for (double h : spacing_) v *= h;
        return v;
    }

    Vec cell_center(std::size_t flat_index) const {
        Vec z(dim());
        std::size_t rem = flat_index;
        for (std::size_t ax = dim(); ax-- > 0;) {
            const std::size_t idx = rem % shape_[ax];
            rem /= shape_[ax];
            z[ax] = origin_[ax] + static_cast<double>(idx) * spacing_[ax];
        }
        return z;
    }

    // Atoms at cell centers; zero-mass cells are dropped.
    DiscreteMeasure to_discrete() const {
        std::vector<double> flat, w;
        for (std::size_t i = 0; i < size(); ++i) {
            if (weights_[i] <= 0.0) continue;
            const Vec z = cell_center(i);
            flat.insert(flat.end(), z.begin(), z.end());
            w.push_back(weights_[i]);
        }
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& x : w) x /= s;
        return DiscreteMeasure(dim(), std::move(flat), std::move(w));
    }

private:
    void validate() const {
        check(!origin_.empty(), "GridMeasure: dimension must be positive");
        check(spacing_.size() == dim() && shape_.size() == dim(), "GridMeasure: axis count mismatch");
        std::size_t n = 1;
        for (std::size_t ax = 0; ax < dim(); ++ax) {
            check(spacing_[ax] > 0.0, "GridMeasure: spacing must be positive");
            check(shape_[ax] > 0, "GridMeasure: empty axis");
            n *= shape_[ax];
        }
        check(weights_.size() == n, "GridMeasure: weight count does not match shape");
        double s = 0.0;
        for (double w : weights_) {
            check(w >= 0.0, "GridMeasure: negative weight");
            s += w;
        }
        check(std::abs(s - 1.0) <= kWeightSumTolGrid, "GridMeasure: weights must sum to 1");
        check(std::isfinite(cell_volume()) && cell_volume() > 0.0, "GridMeasure: bad cell volume");
    }

    Vec origin_;
    Vec spacing_;
    std::vector<std::size_t> shape_;
    std::vector<double> weights_;
};

// Transport plan between two finite-support measures. Row i corresponds to
// the i-th atom of the row marginal, column j to the j-th atom of the
// column marginal; mass is stored dense, row-major.
struct Coupling {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> mass;  // rows x cols, row-major

    double& at(std::size_t i, std::size_t j) { return mass[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return mass[i * cols + j]; }

    std::vector<double> row_sums() const {
        std::vector<double> s(rows, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) s[i] += at(i, j);
        return s;
    }
    std::vector<double> col_sums() const {
        std::vector<double> s(cols, 0.0);
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cols; ++j) s[j] += at(i, j);
        return s;
    }

    void validate_marginals(const std::vector<double>& row_w, const std::vector<double>& col_w,
                            double tol = kCouplingMarginalTol) const {
        check(row_w.size() == rows && col_w.size() == cols, "Coupling: marginal size mismatch");
        for (double m : mass) check(m >= -1e-15, "Coupling: negative mass");
        const auto rs = row_sums();
        const auto cs = col_sums();
        for (std::size_t i = 0; i < rows; ++i)
            check(std::abs(rs[i] - row_w[i]) <= tol, "Coupling: row marginal violated");
        for (std::size_t j = 0; j < cols; ++j)
            check(std::abs(cs[j] - col_w[j]) <= tol, "Coupling: column marginal violated");
    }
};

inline Vec barycenter(const DiscreteMeasure& a) {
    Vec m(a.dim(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto x = a.atom(i);
        for (std::size_t k = 0; k < a.dim(); ++k) m[k] += a.weight(i) * x[k];
    }
    return m;
}

inline Vec barycenter(const GridMeasure& a) { return barycenter(a.to_discrete()); }

inline double second_moment(const DiscreteMeasure& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.weight(i) * sq_norm(a.atom(i));
    return s;
}

// Sum over cells of w * log((w/vol) / gaussian(mean, variance)), with
// 0 log 0 = 0. Atomic inputs are rejected: the entropy is infinite.
inline double relative_entropy_gaussian(const GridMeasure& rho, const Vec& mean, double variance) {
    check(variance > 0.0, "relative_entropy_gaussian: variance must be positive");
    check(mean.size() == rho.dim(), "relative_entropy_gaussian: dimension mismatch");
    const double vol = rho.cell_volume();
    double h = 0.0;
    for (std::size_t i = 0; i < rho.size(); ++i) {
        const double w = rho.weights()[i];
        if (w <= 0.0) continue;
        const Vec z = rho.cell_center(i);
        h += w * (std::log(w / vol) - log_gaussian_density(z, mean, variance));
    }
    return h;
}

inline double relative_entropy_gaussian(const DiscreteMeasure&, const Vec&, double) {
    throw InfiniteEntropyError();
}

// Sorts points lexicographically and merges those within kAtomMergeTol in
// the max norm, accumulating their weights.
inline DiscreteMeasure make_merged_discrete(std::size_t d, const std::vector<Vec>& points,
                                            const std::vector<double>& weights) {
    const std::size_t n = points.size();
    check(n > 0 && weights.size() == n, "make_merged_discrete: empty or mismatched input");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
        return std::lexicographical_compare(points[i].begin(), points[i].end(),
                                            points[j].begin(), points[j].end());
    });
    std::vector<double> flat, w;
    for (std::size_t r = 0; r < n; ++r) {
        const Vec& z = points[order[r]];
        const double wi = weights[order[r]];
        bool merged = false;
        if (!w.empty()) {
            std::span<const double> last(flat.data() + flat.size() - d, d);
            if (inf_dist(last, z) <= kAtomMergeTol) {
                w.back() += wi;
                merged = true;
            }
        }
        if (!merged) {
            flat.insert(flat.end(), z.begin(), z.end());
            w.push_back(wi);
        }
    }
    return DiscreteMeasure(d, std::move(flat), std::move(w));
}

// Images of the atoms under `map`, merging images that collide within
// kAtomMergeTol in the max norm.
inline DiscreteMeasure pushforward(const DiscreteMeasure& a,
                                   const std::function<Vec(std::span<const double>)>& map) {
    const std::size_t n = a.size();
    std::vector<Vec> images(n);
    for (std::size_t i = 0; i < n; ++i) {
        images[i] = map(a.atom(i));
        check(images[i].size() == images[0].size(), "pushforward: inconsistent image dimension");
    }
    return make_merged_discrete(images[0].size(), images, a.weights());
}

inline DiscreteMeasure pushforward(const DiscreteMeasure& a,
                                   const std::function<double(double)>& map_1d) {
    check(a.dim() == 1, "pushforward: 1D map on a multi-dimensional measure");
    return pushforward(a, [&](std::span<const double> x) { return Vec{map_1d(x[0])}; });
}

// Grid discretization of the Gaussian with mean m and covariance
// variance * I. Truncated at mean +- 6 sqrt(variance) per axis (tail mass
// below 1e-8), then renormalized.
inline GridMeasure gaussian_grid(const Vec& mean, double variance, std::size_t cells_per_axis) {
    check(variance > 0.0, "gaussian_grid: variance must be positive");
    check(cells_per_axis >= 3, "gaussian_grid: need at least 3 cells per axis");
    const std::size_t d = mean.size();
    check(d >= 1 && d <= 2, "gaussian_grid: tensor grids supported for d <= 2");
    const double sigma = std::sqrt(variance);
    Vec origin(d), spacing(d);
    std::vector<std::size_t> shape(d, cells_per_axis);
    for (std::size_t ax = 0; ax < d; ++ax) {
        const double lo = mean[ax] - 6.0 * sigma;
        const double hi = mean[ax] + 6.0 * sigma;
        spacing[ax] = (hi - lo) / static_cast<double>(cells_per_axis);
        origin[ax] = lo + 0.5 * spacing[ax];
    }
    std::size_t n = 1;
    for (std::size_t ax = 0; ax < d; ++ax) n *= shape[ax];
    GridMeasure tmp(origin, spacing, shape, std::vector<double>(n, 1.0 / static_cast<double>(n)));
    std::vector<double> w(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec z = tmp.cell_center(i);
        w[i] = std::exp(log_gaussian_density(z, mean, variance));
        s += w[i];
    }
    for (double& x : w) x /= s;
    return GridMeasure(origin, spacing, shape, std::move(w));
}

}  // namespace sbb
