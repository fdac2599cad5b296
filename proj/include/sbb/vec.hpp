#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace sbb {

// Points in R^d are plain coordinate vectors. Bulk data (atom lists,
// quadrature nodes) is stored flat, row-major, and accessed through spans.
using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sq_norm(std::span<const double> a) { return dot(a, a); }

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

inline double inf_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s = std::max(s, std::abs(a[i] - b[i]));
    return s;
}

// View of row i in a flat row-major (n x d) buffer.
inline std::span<const double> row(const std::vector<double>& flat, std::size_t i, std::size_t d) {
    return std::span<const double>(flat.data() + i * d, d);
}

inline std::span<double> row(std::vector<double>& flat, std::size_t i, std::size_t d) {
    return std::span<double>(flat.data() + i * d, d);
}

inline void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace sbb
