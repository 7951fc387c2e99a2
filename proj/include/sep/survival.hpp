#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sep/grid.hpp"

namespace sep {

/// Occupation probabilities pi(j, t) of the walk that is absorbed at the
/// boundaries and never stopped inside. The slice mass decays like rho^t
/// with rho = cos(pi/L), and within a parity class the profile approaches
/// the sine eigenvector m_j.
///
/// Slices are rescaled once their mass drops below 1e-280; `log_scale[t]`
/// holds the natural log of the applied factor, so the true value is
/// pi_scaled(j,t) * exp(-log_scale[t]).
struct SurvivalTable {
    Grid grid;
    int t_max = 0;
    std::vector<double> pi_scaled;  // dense (levels+1) x (t_max+1)
    std::vector<double> log_scale;  // per-slice rescaling, >= 0
    double rho = 0.0;
    std::vector<double> m;  // sine eigenvector per level

    int idx(int j, int t) const { return grid.index(j) * (t_max + 1) + t; }

    /// True probability; underflows to 0 for very late times.
    double pi(int j, int t) const {
        return pi_scaled[idx(j, t)] * std::exp(-log_scale[t]);
    }
    double log_pi(int j, int t) const {
        const double v = pi_scaled[idx(j, t)];
        if (v <= 0.0) return -std::numeric_limits<double>::infinity();
        return std::log(v) - log_scale[t];
    }
    double slice_mass_scaled(int t) const {
        double s = 0.0;
        for (int j = grid.j_lo; j <= grid.j_hi; ++j) s += pi_scaled[idx(j, t)];
        return s;
    }
    double slice_mass(int t) const { return slice_mass_scaled(t) * std::exp(-log_scale[t]); }

    /// Expected visit count sum_t pi(j, t) including the start visit.
    double visit_count(int j) const {
        double s = 0.0;
        for (int t = 0; t <= t_max; ++t) s += pi(j, t);
        return s;
    }
};

/// Forward recursion pi(j,t) = (pi(j-1,t-1) + pi(j+1,t-1)) / 2 on the open
/// interval (lo, hi), absorbing outside, started from pi(j_star, 0) = 1.
inline SurvivalTable compute_pi_on(const Grid& grid, int t_max, int lo, int hi) {
    if (t_max < 0) throw std::invalid_argument("compute_pi: horizon must be >= 0");
    SurvivalTable tab;
    tab.grid = grid;
    tab.t_max = t_max;
    tab.pi_scaled.assign(static_cast<std::size_t>(grid.num_sites()) * (t_max + 1), 0.0);
    tab.log_scale.assign(t_max + 1, 0.0);
    const int len = hi - lo;
    tab.rho = len >= 1 ? std::cos(std::numbers::pi / len) : 0.0;
    tab.m.assign(grid.num_sites(), 0.0);
    for (int j = lo; j <= hi; ++j)
        if (len >= 1)
            tab.m[grid.index(j)] = std::sqrt(2.0 / len) * std::sin((j - lo) * std::numbers::pi / len);

    tab.pi_scaled[tab.idx(grid.j_star, 0)] = 1.0;
    double cur_scale = 0.0;
    for (int t = 1; t <= t_max; ++t) {
        double mass = 0.0;
        for (int j = lo + 1; j < hi; ++j) {
            if (!grid.same_parity(j, t)) continue;
            const double left = j - 1 > lo ? tab.pi_scaled[tab.idx(j - 1, t - 1)] : 0.0;
            const double right = j + 1 < hi ? tab.pi_scaled[tab.idx(j + 1, t - 1)] : 0.0;
            const double v = 0.5 * (left + right);
            tab.pi_scaled[tab.idx(j, t)] = v;
            mass += v;
        }
        tab.log_scale[t] = cur_scale;
        if (mass > 0.0 && mass < 1e-280) {
            const double factor = 1.0 / mass;
            for (int j = lo + 1; j < hi; ++j) tab.pi_scaled[tab.idx(j, t)] *= factor;
            cur_scale += std::log(factor);
            tab.log_scale[t] = cur_scale;
        }
    }
    return tab;
}

inline SurvivalTable compute_pi(const Grid& grid, int t_max) {
    return compute_pi_on(grid, t_max, grid.j_lo, grid.j_hi);
}

struct YaglomReport {
    double max_spread = 0.0;        // relative spread of pi/(rho^t m_j) within parity
    double slice_ratio_error = 0.0; // max |mass(t)/mass(t-2) - rho^2| at checked times
    int times_checked = 0;
    bool extinct = false;           // no surviving mass at the requested times
};

/// Proportionality diagnostic for the quasi-stationary profile. The chain
/// has period 2, so ratios are compared within a parity class; the limit is
/// tested as a constant ratio across levels rather than exact equality.
inline YaglomReport yaglom_diagnostic(const SurvivalTable& table, int last_times = 10) {
    YaglomReport rep;
    const Grid& g = table.grid;
    if (table.rho <= 0.0) {  // single interior level, extinct immediately
        rep.extinct = true;
        return rep;
    }
    const double log_rho = std::log(table.rho);
    int checked = 0;
    for (int t = table.t_max; t >= 1 && checked < last_times; --t) {
        std::vector<double> log_ratios;
        for (int j = g.j_lo + 1; j < g.j_hi; ++j) {
            if (!g.same_parity(j, t)) continue;
            const double mj = table.m[g.index(j)];
            if (mj <= 0.0) continue;
            const double lp = table.log_pi(j, t);
            if (!std::isfinite(lp)) continue;
            log_ratios.push_back(lp - t * log_rho - std::log(mj));
        }
        if (log_ratios.empty()) {
            rep.extinct = true;
            continue;
        }
        const double lmax = *std::max_element(log_ratios.begin(), log_ratios.end());
        double vmin = 1.0, vmax = 0.0, vsum = 0.0;
        for (double lr : log_ratios) {
            const double v = std::exp(lr - lmax);
            vmin = std::min(vmin, v);
            vmax = std::max(vmax, v);
            vsum += v;
        }
        const double vmean = vsum / log_ratios.size();
        rep.max_spread = std::max(rep.max_spread, (vmax - vmin) / vmean);

        if (t >= 2) {
            const double num = table.slice_mass_scaled(t);
            const double den = table.slice_mass_scaled(t - 2);
            if (den > 0.0) {
                const double ratio = num / den *
                    std::exp(-(table.log_scale[t] - table.log_scale[t - 2]));
                rep.slice_ratio_error =
                    std::max(rep.slice_ratio_error, std::abs(ratio - table.rho * table.rho));
            }
        }
        ++checked;
    }
    rep.times_checked = checked;
    if (checked == 0) rep.extinct = true;
    return rep;
}

}  // namespace sep
