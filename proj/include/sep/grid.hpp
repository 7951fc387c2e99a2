#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace sep {

/// Uniform spatial mesh x_j = j / sqrt(N) between two absorbing boundaries.
///
/// Level indices run over the closed range [j_lo, j_hi]; the walk starts at
/// j_star and moves +-1 per step, so a site (j, t) is reachable only when
/// |j - j_star| <= t and (j - j_star) has the parity of t.
struct Grid {
    int n = 0;       // refinement parameter, time step is 1/n
    int j_lo = 0;    // lower boundary index
    int j_hi = 0;    // upper boundary index
    int j_star = 0;  // start index

    int levels() const { return j_hi - j_lo; }
    int num_sites() const { return j_hi - j_lo + 1; }

    double sqrt_n() const { return std::sqrt(static_cast<double>(n)); }
    double x(int j) const { return static_cast<double>(j) / sqrt_n(); }

    /// Array index of level j in dense per-level storage.
    int index(int j) const { return j - j_lo; }

    bool contains(int j) const { return j >= j_lo && j <= j_hi; }
    bool interior(int j) const { return j > j_lo && j < j_hi; }

    bool same_parity(int j, int t) const {
        return ((j - j_star) - t) % 2 == 0;
    }
    bool reachable(int j, int t) const {
        return contains(j) && t >= std::abs(j - j_star) && same_parity(j, t);
    }
};

/// Builds the mesh for a spatial window (x_lower, x_upper) containing 0.
/// Boundary indices are floor(x * sqrt(N)); the start level is j = 0, so
/// |x(j_star)| = 0 <= 1/sqrt(N).
inline Grid build_grid(double x_lower, double x_upper, int n) {
    if (n < 1) throw std::invalid_argument("build_grid: N must be >= 1");
    if (!(x_lower < 0.0 && 0.0 < x_upper))
        throw std::invalid_argument("build_grid: need x_lower < 0 < x_upper");
    Grid g;
    g.n = n;
    const double root = std::sqrt(static_cast<double>(n));
    g.j_lo = static_cast<int>(std::floor(x_lower * root));
    g.j_hi = static_cast<int>(std::floor(x_upper * root));
    g.j_star = 0;
    if (g.levels() < 2)
        throw std::invalid_argument("build_grid: degenerate grid, fewer than 3 levels");
    return g;
}

/// Mesh described by its level count alone (used by the survival walk, where
/// only the lattice matters). The start sits at the centre, N = L^2.
inline Grid grid_for_levels(int num_levels) {
    if (num_levels < 2)
        throw std::invalid_argument("grid_for_levels: need at least 2 levels");
    Grid g;
    g.n = num_levels * num_levels;
    g.j_lo = -(num_levels / 2);
    g.j_hi = num_levels - num_levels / 2;
    g.j_star = 0;
    return g;
}

}  // namespace sep
