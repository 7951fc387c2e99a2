#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sep/grid.hpp"

namespace sep {

namespace tol {
inline constexpr double mass_sum = 1e-12;      // measure mass budget
inline constexpr double mean_scale = 1e-10;    // mean tolerance per sqrt(N)
inline constexpr double potential_neg = 1e-10; // negative potential => not embeddable
inline constexpr double zero = 1e-10;          // p/q > 0 classification threshold
}  // namespace tol

/// Probability measure supported on grid levels.
struct AtomicMeasure {
    Grid grid;
    std::vector<double> mass;  // dense over [j_lo, j_hi]

    double operator()(int j) const { return mass[grid.index(j)]; }

    double total_mass() const {
        double s = 0.0;
        for (double m : mass) s += m;
        return s;
    }
    double mean() const {
        double s = 0.0;
        for (int j = grid.j_lo; j <= grid.j_hi; ++j) s += grid.x(j) * mass[grid.index(j)];
        return s;
    }
    double second_moment() const {
        double s = 0.0;
        for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
            const double xj = grid.x(j);
            s += xj * xj * mass[grid.index(j)];
        }
        return s;
    }

    bool is_point_mass_at_start() const {
        for (int j = grid.j_lo; j <= grid.j_hi; ++j)
            if (j != grid.j_star && mass[grid.index(j)] > tol::mass_sum) return false;
        return true;
    }

    void validate() const {
        if (static_cast<int>(mass.size()) != grid.num_sites())
            throw std::invalid_argument("AtomicMeasure: mass array does not match grid");
        for (double m : mass)
            if (m < -tol::mass_sum) throw std::invalid_argument("AtomicMeasure: negative mass");
        if (std::abs(total_mass() - 1.0) > tol::mass_sum)
            throw std::invalid_argument("AtomicMeasure: masses do not sum to 1");
    }

    /// Embedding needs the mean at the start level; projection alone does not.
    void require_centered() const {
        if (std::abs(mean() - grid.x(grid.j_star)) > tol::mean_scale * grid.sqrt_n())
            throw std::invalid_argument("AtomicMeasure: mean differs from start level");
    }
};

/// Rescaled potential U_j = sqrt(N) (sum_i |x_i - x_j| mu_i - |x_star - x_j|),
/// the expected visit-count budget per interior level. Vanishes at both
/// boundaries and is concave in j between atoms of mu.
struct PotentialArray {
    Grid grid;
    std::vector<double> u;  // dense over [j_lo, j_hi], boundary entries 0

    double operator()(int j) const { return u[grid.index(j)]; }
};

/// Projects a finite list of (position, mass) atoms onto the grid. An
/// off-grid atom is split over the two neighbouring levels with the unique
/// weights that preserve its mean, so total mass and mean are kept exactly.
inline AtomicMeasure project_measure(const std::vector<std::pair<double, double>>& spec,
                                     const Grid& grid) {
    AtomicMeasure mu;
    mu.grid = grid;
    mu.mass.assign(grid.num_sites(), 0.0);
    const double root = grid.sqrt_n();
    for (const auto& [pos, w] : spec) {
        if (w < 0.0) throw std::invalid_argument("project_measure: negative mass");
        if (w == 0.0) continue;
        const double y = pos * root;  // position in level units
        double lo_f = std::floor(y);
        int j0 = static_cast<int>(lo_f);
        double frac = y - lo_f;
        // snap to an exact level when the position is one
        if (frac < 1e-12) {
            frac = 0.0;
        } else if (frac > 1.0 - 1e-12) {
            j0 += 1;
            frac = 0.0;
        }
        if (j0 < grid.j_lo || j0 + (frac > 0.0 ? 1 : 0) > grid.j_hi)
            throw std::invalid_argument("project_measure: atom outside grid support");
        if (frac == 0.0) {
            mu.mass[grid.index(j0)] += w;
        } else {
            mu.mass[grid.index(j0)] += w * (1.0 - frac);
            mu.mass[grid.index(j0 + 1)] += w * frac;
        }
    }
    mu.validate();
    return mu;
}

/// Potential of mu on the grid. Throws when some U_j is below -tol, which
/// means mu is not embeddable from the start level; values in [-tol, 0) are
/// clamped to zero.
inline PotentialArray potential(const AtomicMeasure& mu, const Grid& grid) {
    PotentialArray pa;
    pa.grid = grid;
    pa.u.assign(grid.num_sites(), 0.0);
    const double root = grid.sqrt_n();
    const double x_star = grid.x(grid.j_star);
    for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
        const double xj = grid.x(j);
        double e_abs = 0.0;
        for (int i = grid.j_lo; i <= grid.j_hi; ++i) {
            const double mi = mu.mass[grid.index(i)];
            if (mi != 0.0) e_abs += std::abs(grid.x(i) - xj) * mi;
        }
        double uj = root * (e_abs - std::abs(x_star - xj));
        if (uj < -tol::potential_neg)
            throw std::invalid_argument(
                "potential: negative value at level " + std::to_string(j) +
                ", measure not reachable from the start");
        pa.u[grid.index(j)] = uj < 0.0 ? 0.0 : uj;
    }
    return pa;
}

}  // namespace sep
