#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "sep/grid.hpp"

namespace sep {

enum class PayoffKind { Cave, Root, Rost, General };

inline const char* to_string(PayoffKind k) {
    switch (k) {
        case PayoffKind::Cave: return "cave";
        case PayoffKind::Root: return "root";
        case PayoffKind::Rost: return "rost";
        default: return "general";
    }
}

/// Continuous payoff F(x, t) to maximise at the stopping time.
///
/// The three named kinds are functions of time only:
///   Cave  F = -phi with phi concave increasing on [0, t0], convex
///         decreasing after, phi(0)=0, phi(t0)=1, phi(inf)=0;
///   Root  F = f with f concave (barrier optimiser);
///   Rost  F = f with f convex (inverse-barrier optimiser).
struct PayoffSpec {
    PayoffKind kind = PayoffKind::General;
    double t0 = 0.0;  // hinge time; meaningful for Cave
    std::function<double(double, double)> f;

    bool time_only() const { return kind != PayoffKind::General; }
    double operator()(double x, double t) const { return f(x, t); }
};

/// Cave payoff from the quadratic/exponential splice
/// phi(t) = (2 t0 t - t^2)/t0^2 on [0, t0], phi(t) = exp(-(t - t0)) after.
inline PayoffSpec default_cave(double t0) {
    if (!(t0 > 0.0)) throw std::invalid_argument("default_cave: t0 must be positive");
    PayoffSpec s;
    s.kind = PayoffKind::Cave;
    s.t0 = t0;
    s.f = [t0](double, double t) {
        const double phi = t <= t0 ? (2.0 * t0 * t - t * t) / (t0 * t0)
                                   : std::exp(-(t - t0));
        return -phi;
    };
    return s;
}

inline double cave_phi(const PayoffSpec& s, double t) { return -s.f(0.0, t); }

inline PayoffSpec default_root() {
    PayoffSpec s;
    s.kind = PayoffKind::Root;
    s.f = [](double, double t) { return -t * t; };
    return s;
}

inline PayoffSpec default_rost() {
    PayoffSpec s;
    s.kind = PayoffKind::Rost;
    s.f = [](double, double t) { return std::expm1(-t); };
    return s;
}

/// Checks the cave axioms by sampled second differences.
inline void validate_cave(const PayoffSpec& s, double check_tol = 1e-9) {
    if (s.kind != PayoffKind::Cave) return;
    if (std::abs(cave_phi(s, 0.0)) > check_tol)
        throw std::invalid_argument("cave payoff: phi(0) != 0");
    if (std::abs(cave_phi(s, s.t0) - 1.0) > check_tol)
        throw std::invalid_argument("cave payoff: phi(t0) != 1");
    const int samples = 64;
    const double h = s.t0 / samples;
    for (int i = 1; i + 1 <= samples; ++i) {
        const double d2 = cave_phi(s, (i + 1) * h) - 2.0 * cave_phi(s, i * h) +
                          cave_phi(s, (i - 1) * h);
        if (d2 > check_tol) throw std::invalid_argument("cave payoff: phi not concave on [0,t0]");
    }
    for (int i = 1; i + 1 <= samples; ++i) {
        const double t = s.t0 + i * h;
        const double d2 = cave_phi(s, t + h) - 2.0 * cave_phi(s, t) + cave_phi(s, t - h);
        if (d2 < -check_tol) throw std::invalid_argument("cave payoff: phi not convex after t0");
    }
    if (cave_phi(s, s.t0 + 40.0) > 1e-6)
        throw std::invalid_argument("cave payoff: phi does not vanish at infinity");
}

/// Discretised payoff values on the full grid, tabulated for t in [0, t_max]
/// (entry (j, t) is F(x_j, t/N)), together with the linear time tilt C.
///
/// The tilted surface F(j,t) + C t / N is what the solver maximises; the
/// tilt is harmless because the expected stopping time is pinned by the
/// target measure, and it forces exact embedding at the optimum.
struct PayoffTable {
    Grid grid;
    int t_max = 0;                 // last tabulated step
    std::vector<double> values;    // dense (levels+1) x (t_max+1)
    double tilt_c = 0.0;           // payoff per unit (continuous) time
    double bound = 0.0;            // sup |F| over tabulated sites
    PayoffKind kind = PayoffKind::General;
    double t0 = 0.0;
    bool space_dependent = false;

    int idx(int j, int t) const { return grid.index(j) * (t_max + 1) + t; }
    double at(int j, int t) const { return values[idx(j, t)]; }
    /// Tilted value F(j,t) + C t / N.
    double tilted(int j, int t) const {
        return values[idx(j, t)] + tilt_c * static_cast<double>(t) / grid.n;
    }

    /// Hinge step for barrier classification: 0 for Root (everything is the
    /// barrier side), t_max - 1 for Rost, floor(N t0) for Cave.
    int t0_index() const {
        switch (kind) {
            case PayoffKind::Root: return 0;
            case PayoffKind::Rost: return t_max - 1;
            default: return static_cast<int>(std::floor(static_cast<double>(grid.n) * t0));
        }
    }
};

inline PayoffTable discretise(const PayoffSpec& spec, const Grid& grid, int t_max) {
    if (t_max < 1) throw std::invalid_argument("discretise: horizon must be >= 1");
    PayoffTable tab;
    tab.grid = grid;
    tab.t_max = t_max;
    tab.kind = spec.kind;
    tab.t0 = spec.t0;
    tab.space_dependent = !spec.time_only();
    tab.values.resize(static_cast<std::size_t>(grid.num_sites()) * (t_max + 1));
    double bound = 0.0;
    for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
        const double xj = grid.x(j);
        for (int t = 0; t <= t_max; ++t) {
            const double v = spec.f(xj, static_cast<double>(t) / grid.n);
            if (!std::isfinite(v))
                throw std::invalid_argument("discretise: payoff unbounded over tabulated region");
            tab.values[tab.idx(j, t)] = v;
            bound = std::max(bound, std::abs(v));
        }
    }
    tab.bound = bound;
    tab.tilt_c = 0.0;
    return tab;
}

/// Chooses the tilt constant so that every forward increment of the tilted
/// table is nonnegative: C = (1 + margin) N max_t (F(.,t) - F(.,t+1))_+,
/// maximised over stop steps t >= 1.
inline PayoffTable tilt(const PayoffTable& table, double margin = 0.01) {
    PayoffTable out = table;
    double max_drop = 0.0;
    for (int j = table.grid.j_lo; j <= table.grid.j_hi; ++j)
        for (int t = 1; t + 1 <= table.t_max; ++t)
            max_drop = std::max(max_drop, table.at(j, t) - table.at(j, t + 1));
    out.tilt_c = max_drop > 0.0 ? (1.0 + margin) * table.grid.n * max_drop : 0.0;
    return out;
}

}  // namespace sep
