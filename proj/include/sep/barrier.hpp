#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "sep/lp.hpp"
#include "sep/measure.hpp"

namespace sep {

/// Per-level cutoff times of a cave stopping region: the region is
/// { t <= l_bar(j) } union { t >= r_bar(j) } around the hinge step t0_index,
/// an inverse barrier glued to a barrier. Sentinels l_bar = -1 and
/// r_bar = T + 1 mark levels with no stopping on that side; boundary and
/// absorbed levels carry l_bar = r_bar so the whole time axis stops there.
struct CaveBarrier {
    Grid grid;
    int t_hor = 0;
    int t0_index = 0;
    std::vector<int> l_bar;  // dense per level
    std::vector<int> r_bar;

    int l(int j) const { return l_bar[grid.index(j)]; }
    int r(int j) const { return r_bar[grid.index(j)]; }
    bool always_stops(int j) const { return l(j) >= r(j); }
    bool in_region(int j, int t) const { return t <= l(j) || t >= r(j); }
};

struct MixedSite {
    int j = 0, t = 0;
    double p = 0.0, q = 0.0;
};

struct BarrierExtract {
    CaveBarrier barrier;
    std::vector<MixedSite> mixed;  // sites with both p and q above threshold
};

inline BarrierExtract extract(const PrimalSolution& sol, int t0_index,
                              double threshold = tol::zero) {
    const LatticeShape& sh = sol.shape;
    const Grid& grid = sh.grid;
    BarrierExtract out;
    CaveBarrier& b = out.barrier;
    b.grid = grid;
    b.t_hor = sh.t_hor;
    b.t0_index = t0_index;
    const int l_sentinel = -1;
    const int r_sentinel = sh.t_hor + 1;
    b.l_bar.assign(grid.num_sites(), l_sentinel);
    b.r_bar.assign(grid.num_sites(), r_sentinel);
    for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
        if (j < sh.a_lo || j > sh.a_hi) {
            if (j == sh.stop_lo() || j == sh.stop_hi() || !grid.interior(j)) {
                b.l_bar[grid.index(j)] = t0_index;  // absorbing level
                b.r_bar[grid.index(j)] = t0_index;
            }
            continue;
        }
        int first_p = sh.t_hor + 1, last_p = 0;
        bool left_stop = false, right_stop = false;
        for (int t = 1; t <= sh.t_hor + 1; ++t) {
            if (t <= sh.t_hor && sol.pv(j, t) > threshold) {
                first_p = std::min(first_p, t);
                last_p = std::max(last_p, t);
            }
            if (sol.qv(j, t) > threshold) {
                if (t < t0_index) left_stop = true;
                if (t > t0_index) right_stop = true;
            }
            if (sol.pv(j, t) > threshold && sol.qv(j, t) > threshold)
                out.mixed.push_back({j, t, sol.pv(j, t), sol.qv(j, t)});
        }
        if (left_stop) b.l_bar[grid.index(j)] = std::min(first_p - 1, t0_index - 1);
        if (right_stop) b.r_bar[grid.index(j)] = std::max(last_p + 1, t0_index + 1);
    }
    return out;
}

struct ShapeViolation {
    int j = 0;
    int t = 0;  // stop time with q > 0
    int s = 0;  // sojourn time with p > 0 on the wrong side
};

/// Audits the cave barrier shape: stopping before the hinge forbids earlier
/// sojourn at the same level, stopping after the hinge forbids later
/// sojourn. Optimal solutions must come back empty.
inline std::vector<ShapeViolation> verify_shape(const PrimalSolution& sol, int t0_index,
                                                double threshold = tol::zero,
                                                std::size_t cap = 1u << 20) {
    const LatticeShape& sh = sol.shape;
    std::vector<ShapeViolation> out;
    for (int j = sh.a_lo; j <= sh.a_hi; ++j) {
        std::vector<int> p_pos;
        for (int t = 1; t <= sh.t_hor; ++t)
            if (sol.pv(j, t) > threshold) p_pos.push_back(t);
        if (p_pos.empty()) continue;
        for (int t = 1; t <= sh.t_hor + 1; ++t) {
            if (sol.qv(j, t) <= threshold) continue;
            if (t < t0_index) {
                for (int s : p_pos) {
                    if (s >= t) break;
                    if (out.size() < cap) out.push_back({j, t, s});
                }
            } else if (t > t0_index) {
                for (auto it = p_pos.rbegin(); it != p_pos.rend(); ++it) {
                    if (*it <= t) break;
                    if (out.size() < cap) out.push_back({j, t, *it});
                }
            }
        }
    }
    return out;
}

/// Mass of size eps released at (i, s), followed through the solution's own
/// flow: at each later site the tracked share is proportional to the share
/// of tracked mass among the arriving mass. 0/0 resolves to 0.
struct TrackedMass {
    LatticeShape shape;
    std::vector<double> p;  // dense cells
    std::vector<double> q;

    double pv(int j, int t) const { return p[shape.site(j, t)]; }
    double qv(int j, int t) const { return q[shape.site(j, t)]; }
    double total_stopped() const {
        double s = 0.0;
        for (double v : q) s += v;
        return s;
    }
};

inline TrackedMass track_mass(const PrimalSolution& sol, int i, int s, double eps) {
    const LatticeShape& sh = sol.shape;
    TrackedMass tm;
    tm.shape = sh;
    tm.p.assign(sh.num_cells(), 0.0);
    tm.q.assign(sh.num_cells(), 0.0);
    if (eps == 0.0) return tm;
    if (!(eps > 0.0)) throw std::invalid_argument("track_mass: eps must be nonnegative");
    if (!sh.is_var(i, s) || sol.pv(i, s) <= 0.0)
        throw std::invalid_argument("track_mass: no sojourn mass at the source site");
    if (eps > sol.pv(i, s) * (1.0 + 1e-12))
        throw std::invalid_argument("track_mass: eps exceeds p at the source");
    tm.p[sh.site(i, s)] = eps;
    const Grid& grid = sh.grid;
    for (int r = s; r <= sh.t_hor; ++r) {
        // interior propagation to r + 1
        if (r + 1 <= sh.t_hor) {
            for (int j = sh.lo_t[r + 1]; j <= sh.hi_t[r + 1]; j += 2) {
                const double denom = sol.pv(j - 1, r) + sol.pv(j + 1, r);
                if (denom <= 0.0) continue;
                const double ratio =
                    (tm.p[sh.site(j - 1, r)] + tm.p[sh.site(j + 1, r)]) / denom;
                if (ratio == 0.0) continue;
                tm.p[sh.site(j, r + 1)] = std::min(sol.pv(j, r + 1) * ratio, sol.pv(j, r + 1));
                tm.q[sh.site(j, r + 1)] = std::min(sol.qv(j, r + 1) * ratio, sol.qv(j, r + 1));
            }
        } else if (sh.hi_t[sh.t_hor] >= sh.lo_t[sh.t_hor]) {
            // forced stop: all arriving tracked mass stops at T + 1
            int lo = std::max(sh.a_lo, sh.lo_t[sh.t_hor] - 1);
            int hi = std::min(sh.a_hi, sh.hi_t[sh.t_hor] + 1);
            if (!grid.same_parity(lo, r + 1)) ++lo;
            if (!grid.same_parity(hi, r + 1)) --hi;
            for (int j = lo; j <= hi; j += 2)
                tm.q[sh.site(j, r + 1)] =
                    0.5 * (tm.p[sh.site(j - 1, r)] + tm.p[sh.site(j + 1, r)]);
        }
        // absorbing levels collect half the tracked mass next to them
        for (int side : {0, 1}) {
            const int bnd = side == 0 ? sh.stop_lo() : sh.stop_hi();
            const int inner = side == 0 ? sh.a_lo : sh.a_hi;
            const double pin = sol.pv(inner, r);
            if (pin > 0.0 && tm.p[sh.site(inner, r)] > 0.0) {
                const double share = tm.p[sh.site(inner, r)] / pin;
                tm.q[sh.site(bnd, r + 1)] =
                    std::min(sol.qv(bnd, r + 1) * share, sol.qv(bnd, r + 1));
            }
        }
    }
    return tm;
}

namespace detail {

/// Rebuilds the derived fields after a swap; objective values need the
/// payoff table, so they are cleared here and refreshed by the caller.
inline void refresh_after_swap(PrimalSolution& sol) {
    sol.objective = 0.0;
    sol.tilted_objective = 0.0;
    double stopped = 0.0;
    for (double v : sol.q) stopped += v;
    sol.stopped_mass = stopped;
}

inline void check_swap_output(const PrimalSolution& sol) {
    const LatticeShape& sh = sol.shape;
    for (double v : sol.p)
        if (v < -1e-9) throw std::logic_error("swap: negative sojourn mass after transfer");
    for (double v : sol.q)
        if (v < -1e-9) throw std::logic_error("swap: negative stopped mass after transfer");
    const QRecovery qr = recover_q(sh, sol.p);
    for (std::size_t k = 0; k < sol.q.size(); ++k)
        if (std::abs(sol.q[k] - qr.q[k]) > 1e-9)
            throw std::logic_error("swap: dynamics rows violated after transfer");
}

}  // namespace detail

/// Recomputes the objective fields of a solution against a payoff table.
inline void evaluate_objectives(PrimalSolution& sol, const PayoffTable& table) {
    const LatticeShape& sh = sol.shape;
    double untilted = 0.0, tilted = 0.0;
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j)
        for (int t = 1; t <= sh.t_hor + 1; ++t) {
            const double qv = sol.q[sh.site(j, t)];
            if (qv != 0.0) {
                untilted += table.at(j, t) * qv;
                tilted += table.tilted(j, t) * qv;
            }
        }
    sol.objective = untilted;
    sol.tilted_objective = tilted;
}

/// Inverse-barrier side transfer (s < t, both before the hinge): eps of the
/// mass that used to leave (i, s) stops there instead, and eps previously
/// stopped at (i, t) is released and re-runs the tracked flow shifted by
/// t - s. Per-level sojourn totals are preserved.
inline PrimalSolution swap_left(const PrimalSolution& sol, int i, int s, int t, double eps) {
    const LatticeShape& sh = sol.shape;
    if (!(s < t)) throw std::invalid_argument("swap_left: need s < t");
    if (eps == 0.0) return sol;
    if (!(sol.qv(i, t) > 0.0 && sol.pv(i, s) > 0.0))
        throw std::invalid_argument("swap_left: q(i,t) and p(i,s) must be positive");
    if (!(eps > 0.0 && eps < std::min(0.5 * sol.qv(i, t), sol.pv(i, s))))
        throw std::invalid_argument("swap_left: eps outside (0, min(q/2, p))");
    const TrackedMass tm = track_mass(sol, i, s, eps);
    PrimalSolution out = sol;
    const int delta = t - s;
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j) {
        for (int r = s + 1; r <= sh.t_hor + 1; ++r) {
            out.p[sh.site(j, r)] -= tm.p[sh.site(j, r)];
            out.q[sh.site(j, r)] -= tm.q[sh.site(j, r)];
        }
        for (int r = t + 1; r <= sh.t_hor; ++r) {
            out.p[sh.site(j, r)] += tm.p[sh.site(j, r - delta)];
            out.q[sh.site(j, r)] += tm.q[sh.site(j, r - delta)];
        }
        // the shifted flow still alive at the horizon stops with everything else
        const int rr = sh.t_hor + 1;
        out.q[sh.site(j, rr)] += tm.p[sh.site(j, rr - delta)] + tm.q[sh.site(j, rr - delta)];
    }
    out.p[sh.site(i, s)] -= eps;
    out.q[sh.site(i, s)] += eps;
    out.p[sh.site(i, t)] += eps;
    out.q[sh.site(i, t)] -= eps;
    detail::check_swap_output(out);
    detail::refresh_after_swap(out);
    return out;
}

/// Barrier side transfer (t < s, both after the hinge): eps previously
/// stopped at (i, t) is released, re-runs the tracked flow shifted earlier
/// by s - t, and eps of the mass that used to leave (i, s) stops there.
/// The shifted flow finishes before the horizon does, so unlike swap_left
/// no forced re-stop is needed.
inline PrimalSolution swap_right(const PrimalSolution& sol, int i, int t, int s, double eps) {
    const LatticeShape& sh = sol.shape;
    if (!(t < s)) throw std::invalid_argument("swap_right: need t < s");
    if (eps == 0.0) return sol;
    if (!(sol.qv(i, t) > 0.0 && sol.pv(i, s) > 0.0))
        throw std::invalid_argument("swap_right: q(i,t) and p(i,s) must be positive");
    if (!(eps > 0.0 && eps < std::min(sol.qv(i, t), 0.5 * sol.pv(i, s))))
        throw std::invalid_argument("swap_right: eps outside (0, min(q, p/2))");
    const TrackedMass tm = track_mass(sol, i, s, eps);
    PrimalSolution out = sol;
    const int delta = s - t;
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j) {
        for (int r = t + 1; r <= sh.t_hor; ++r)
            if (r + delta <= sh.t_hor) out.p[sh.site(j, r)] += tm.p[sh.site(j, r + delta)];
        for (int r = t + 1; r <= sh.t_hor + 1; ++r)
            if (r + delta <= sh.t_hor + 1) out.q[sh.site(j, r)] += tm.q[sh.site(j, r + delta)];
        for (int r = s + 1; r <= sh.t_hor + 1; ++r) {
            out.p[sh.site(j, r)] -= tm.p[sh.site(j, r)];
            out.q[sh.site(j, r)] -= tm.q[sh.site(j, r)];
        }
    }
    out.p[sh.site(i, t)] += eps;
    out.q[sh.site(i, t)] -= eps;
    out.p[sh.site(i, s)] -= eps;
    out.q[sh.site(i, s)] += eps;
    detail::check_swap_output(out);
    detail::refresh_after_swap(out);
    return out;
}

/// Side dispatch per the hinge: both times before t0 routes to swap_left,
/// both after routes to swap_right; triples straddling the hinge are
/// rejected. `t_q` is the stop time with q > 0 and `s_p` the sojourn time.
inline PrimalSolution apply_swap(const PrimalSolution& sol, int t0_index, int i, int t_q,
                                 int s_p, double eps) {
    if (t_q < t0_index && s_p < t0_index && s_p < t_q)
        return swap_left(sol, i, s_p, t_q, eps);
    if (t_q > t0_index && s_p > t0_index && t_q < s_p)
        return swap_right(sol, i, t_q, s_p, eps);
    throw std::invalid_argument("apply_swap: triple straddles the hinge or has the wrong order");
}

}  // namespace sep
