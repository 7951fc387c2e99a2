#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sep/grid.hpp"
#include "sep/measure.hpp"
#include "sep/payoff.hpp"
#include "sep/simplex.hpp"

namespace sep {

/// Smallest horizon T at which the never-stopped walk on the open interval
/// (lo, hi) keeps at most eps_tail unabsorbed mass. Finite because the
/// survival mass decays like cos(pi/L)^t.
inline int horizon_on(const Grid& grid, double eps_tail, int lo, int hi) {
    if (!(eps_tail > 0.0 && eps_tail < 1.0))
        throw std::invalid_argument("horizon: eps_tail must lie in (0,1)");
    const int width = hi - lo;
    if (width < 2) return 1;
    std::vector<double> cur(width + 1, 0.0), nxt(width + 1, 0.0);
    cur[grid.j_star - lo] = 1.0;
    double log_scale = 0.0;  // true slice = stored * exp(-log_scale)
    const double log_eps = std::log(eps_tail);
    constexpr int t_cap = 20'000'000;
    for (int t = 1; t <= t_cap; ++t) {
        double mass = 0.0;
        for (int u = 1; u < width; ++u) {
            nxt[u] = 0.5 * (cur[u - 1] + cur[u + 1]);
            mass += nxt[u];
        }
        nxt[0] = nxt[width] = 0.0;
        if (mass <= 0.0) return t;
        if (std::log(mass) - log_scale <= log_eps) return t;
        if (mass < 1e-280) {
            const double f = 1.0 / mass;
            for (int u = 1; u < width; ++u) nxt[u] *= f;
            log_scale += std::log(f);
        }
        std::swap(cur, nxt);
    }
    throw std::runtime_error("horizon: cap exceeded");
}

inline int horizon(const Grid& grid, double eps_tail) {
    return horizon_on(grid, eps_tail, grid.j_lo, grid.j_hi);
}

/// Reachable-site bookkeeping for the parity lattice. Variables p(j,t) live
/// on interior levels of the alive interval [a_lo, a_hi] for t in [1, T];
/// levels a_lo - 1 and a_hi + 1 absorb (they are either the grid boundaries
/// or interior levels where the potential vanishes). Stopped mass is also
/// recorded at the forced-stop slice T + 1.
struct LatticeShape {
    Grid grid;
    int t_hor = 0;
    int a_lo = 0, a_hi = -1;
    std::vector<int> lo_t, hi_t;  // per t in [0, t_hor]; range empty when hi < lo
    std::vector<int> offset;      // variable-id offset per t
    int n_vars = 0;

    int stop_lo() const { return a_lo - 1; }
    int stop_hi() const { return a_hi + 1; }
    bool alive(int j) const { return j >= a_lo && j <= a_hi; }

    std::size_t num_cells() const {
        return static_cast<std::size_t>(grid.num_sites()) * (t_hor + 2);
    }
    int site(int j, int t) const { return grid.index(j) * (t_hor + 2) + t; }

    bool is_var(int j, int t) const {
        if (t < 1 || t > t_hor) return false;
        if (j < lo_t[t] || j > hi_t[t]) return false;
        return grid.same_parity(j, t);
    }
    int var_id(int j, int t) const { return offset[t] + (j - lo_t[t]) / 2; }
    int vars_at(int t) const {
        return hi_t[t] < lo_t[t] ? 0 : (hi_t[t] - lo_t[t]) / 2 + 1;
    }
};

inline LatticeShape make_shape(const Grid& grid, int t_hor, int a_lo, int a_hi) {
    LatticeShape s;
    s.grid = grid;
    s.t_hor = t_hor;
    s.a_lo = a_lo;
    s.a_hi = a_hi;
    s.lo_t.assign(t_hor + 1, 0);
    s.hi_t.assign(t_hor + 1, -1);
    s.offset.assign(t_hor + 1, 0);
    s.lo_t[0] = s.hi_t[0] = grid.j_star;
    int lo = grid.j_star, hi = grid.j_star;
    bool dead = a_hi < a_lo;
    int acc = 0;
    for (int t = 1; t <= t_hor; ++t) {
        s.offset[t] = acc;
        if (dead) {
            s.lo_t[t] = 0;
            s.hi_t[t] = -1;
            continue;
        }
        lo = std::max(a_lo, lo - 1);
        hi = std::min(a_hi, hi + 1);
        if (!grid.same_parity(lo, t)) ++lo;
        if (!grid.same_parity(hi, t)) --hi;
        if (lo > hi) {
            dead = true;
            s.lo_t[t] = 0;
            s.hi_t[t] = -1;
            continue;
        }
        s.lo_t[t] = lo;
        s.hi_t[t] = hi;
        acc += (hi - lo) / 2 + 1;
    }
    s.n_vars = acc;
    return s;
}

/// The discretised embedding program in substituted form: maximise the
/// tilted stop payoff over sojourn variables p >= 0 subject to the dynamics
/// rows p(j,t) <= (p(j-1,t-1) + p(j+1,t-1)) / 2 and one potential row
/// sum_t p(j,t) <= U_j - 1{j = j*} per interior level.
struct LpProblem {
    LatticeShape shape;
    AtomicMeasure mu;
    PayoffTable table;          // carries the tilt constant
    std::vector<double> u;      // potential per level
    std::vector<double> u_bar;  // potential row rhs (indicator subtracted at j*)
    std::vector<double> c;      // objective coefficient per variable
    double obj0 = 0.0;          // tilted payoff constant from the first step
    bool trivial = false;       // point mass at the start, stop at t = 0

    int n_vars() const { return shape.n_vars; }
    int n_potential_rows() const {
        return shape.a_hi < shape.a_lo ? 0 : shape.a_hi - shape.a_lo + 1;
    }
};

namespace detail {
inline constexpr double zero_u_tol = 1e-12;
}

/// Contiguous interior levels around the start with positive potential.
/// A vanishing interior potential disconnects the walk region; the far
/// side is never visited, so those levels absorb.
inline std::pair<int, int> alive_interval(const Grid& grid, const PotentialArray& pot) {
    if (pot(grid.j_star) <= detail::zero_u_tol)
        throw std::invalid_argument("alive_interval: potential vanishes at the start level");
    int a_lo = grid.j_star, a_hi = grid.j_star;
    while (a_lo - 1 > grid.j_lo && pot(a_lo - 1) > detail::zero_u_tol) --a_lo;
    while (a_hi + 1 < grid.j_hi && pot(a_hi + 1) > detail::zero_u_tol) ++a_hi;
    return {a_lo, a_hi};
}

/// Builds the program for a fixed horizon. The payoff table must be
/// tabulated through t_hor + 1 (the forced-stop slice).
inline LpProblem assemble(const Grid& grid, const AtomicMeasure& mu,
                          const PayoffTable& table, int t_hor) {
    if (table.t_max < t_hor + 1)
        throw std::invalid_argument("assemble: payoff table shorter than horizon + 1");
    if (table.grid.n != grid.n || table.grid.j_lo != grid.j_lo || table.grid.j_hi != grid.j_hi)
        throw std::invalid_argument("assemble: payoff table built on a different grid");
    LpProblem prob;
    prob.mu = mu;
    prob.table = table;
    mu.validate();
    mu.require_centered();
    if (mu.is_point_mass_at_start()) {
        prob.trivial = true;
        prob.shape = make_shape(grid, 0, grid.j_star + 1, grid.j_star);
        return prob;
    }
    const PotentialArray pot = potential(mu, grid);
    prob.u = pot.u;
    const auto [a_lo, a_hi] = alive_interval(grid, pot);

    prob.u_bar.assign(grid.num_sites(), 0.0);
    for (int j = a_lo; j <= a_hi; ++j) {
        double ub = pot(j) - (j == grid.j_star ? 1.0 : 0.0);
        if (ub < -1e-9)
            throw std::invalid_argument(
                "assemble: measure not embeddable, potential at the start is below 1");
        prob.u_bar[grid.index(j)] = std::max(ub, 0.0);
    }

    prob.shape = make_shape(grid, t_hor, a_lo, a_hi);
    const LatticeShape& sh = prob.shape;

    prob.c.assign(sh.n_vars, 0.0);
    for (int t = 1; t <= t_hor; ++t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            prob.c[sh.var_id(j, t)] = -table.tilted(j, t) +
                0.5 * (table.tilted(j - 1, t + 1) + table.tilted(j + 1, t + 1));
        }
    }
    prob.obj0 = 0.5 * (table.tilted(grid.j_star - 1, 1) + table.tilted(grid.j_star + 1, 1));
    return prob;
}

/// One inequality sum(coef . p) <= rhs of the assembled program.
struct SparseRow {
    std::vector<std::pair<int, double>> coef;
    double rhs = 0.0;
    enum class Family { Dynamics, Potential } family = Family::Dynamics;
    int j = 0, t = 0;  // site for dynamics rows, level for potential rows
};

/// Materialises all constraint rows; intended for small instances
/// (verification, oracles). Every variable appears in exactly one potential
/// row and at most three dynamics rows.
inline std::vector<SparseRow> materialize_rows(const LpProblem& prob) {
    const LatticeShape& sh = prob.shape;
    std::vector<SparseRow> rows;
    rows.reserve(sh.n_vars + prob.n_potential_rows());
    for (int t = 1; t <= sh.t_hor; ++t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            SparseRow r;
            r.family = SparseRow::Family::Dynamics;
            r.j = j;
            r.t = t;
            r.coef.emplace_back(sh.var_id(j, t), 1.0);
            if (t == 1) {
                r.rhs = std::abs(j - sh.grid.j_star) == 1 ? 0.5 : 0.0;
            } else {
                r.rhs = 0.0;
                for (int d : {-1, 1})
                    if (sh.is_var(j + d, t - 1))
                        r.coef.emplace_back(sh.var_id(j + d, t - 1), -0.5);
            }
            rows.push_back(std::move(r));
        }
    }
    for (int j = sh.a_lo; j <= sh.a_hi; ++j) {
        SparseRow r;
        r.family = SparseRow::Family::Potential;
        r.j = j;
        r.rhs = prob.u_bar[sh.grid.index(j)];
        for (int t = 1; t <= sh.t_hor; ++t)
            if (sh.is_var(j, t)) r.coef.emplace_back(sh.var_id(j, t), 1.0);
        if (!r.coef.empty()) rows.push_back(std::move(r));
    }
    return rows;
}

/// Feasible point of the program: sojourn mass p and stopped mass q on the
/// dense lattice, with p(j*, 0) = 1 and stops recorded through T + 1.
struct PrimalSolution {
    LatticeShape shape;
    std::vector<double> p;
    std::vector<double> q;
    double objective = 0.0;         // untilted stop payoff
    double tilted_objective = 0.0;  // what the solver maximises
    double stopped_mass = 0.0;
    double clip_magnitude = 0.0;    // negative slack clipped while recovering q
    bool stopped_at_start = false;  // point mass at the start

    double pv(int j, int t) const { return p[shape.site(j, t)]; }
    double qv(int j, int t) const { return q[shape.site(j, t)]; }
    /// sum_{t >= 1} p(j, t); the start visit is not included.
    double level_visits(int j) const {
        double s = 0.0;
        for (int t = 1; t <= shape.t_hor; ++t) s += p[shape.site(j, t)];
        return s;
    }
    double expected_steps() const {  // E[stop step] = 1 + sum p
        double s = 1.0;
        for (int j = shape.a_lo; j <= shape.a_hi; ++j) s += level_visits(j);
        return s;
    }
};

/// Derives q from p through the dynamics rows; interior slack below -1e-6
/// rejects p as infeasible, smaller negatives are clipped to zero and the
/// clipped magnitude is reported.
struct QRecovery {
    std::vector<double> q;
    double min_slack = 0.0;
    double clip_total = 0.0;
};

inline QRecovery recover_q(const LatticeShape& sh, const std::vector<double>& p) {
    QRecovery out;
    out.q.assign(sh.num_cells(), 0.0);
    for (int t = 1; t <= sh.t_hor; ++t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            const double in = 0.5 * (p[sh.site(j - 1, t - 1)] + p[sh.site(j + 1, t - 1)]);
            const double slack = in - p[sh.site(j, t)];
            out.min_slack = std::min(out.min_slack, slack);
            if (slack < -1e-6)
                throw std::invalid_argument("recover_q: dynamics slack below -1e-6, p infeasible");
            if (slack < 0.0) out.clip_total -= slack;
            out.q[sh.site(j, t)] = std::max(slack, 0.0);
        }
    }
    if (sh.a_hi >= sh.a_lo) {
        for (int t = 1; t <= sh.t_hor + 1; ++t) {
            const int b_lo = sh.stop_lo(), b_hi = sh.stop_hi();
            out.q[sh.site(b_lo, t)] = 0.5 * p[sh.site(b_lo + 1, t - 1)];
            out.q[sh.site(b_hi, t)] = 0.5 * p[sh.site(b_hi - 1, t - 1)];
        }
        // forced stop of whatever survives past the horizon
        if (sh.t_hor >= 1 && sh.hi_t[sh.t_hor] >= sh.lo_t[sh.t_hor]) {
            int lo = std::max(sh.a_lo, sh.lo_t[sh.t_hor] - 1);
            int hi = std::min(sh.a_hi, sh.hi_t[sh.t_hor] + 1);
            if (!sh.grid.same_parity(lo, sh.t_hor + 1)) ++lo;
            if (!sh.grid.same_parity(hi, sh.t_hor + 1)) --hi;
            for (int j = lo; j <= hi; j += 2)
                out.q[sh.site(j, sh.t_hor + 1)] =
                    0.5 * (p[sh.site(j - 1, sh.t_hor)] + p[sh.site(j + 1, sh.t_hor)]);
        }
    }
    return out;
}

/// Dual variables: one price nu_j per potential row and a supermartingale
/// surplus eta(j,t) per reachable interior site.
struct DualSolution {
    LatticeShape shape;
    std::vector<double> nu;   // dense per level
    std::vector<double> eta;  // dense cells
    double objective_tilted = 0.0;
    double objective = 0.0;   // tilt correction C E[tau] subtracted

    double nuv(int j) const { return nu[shape.grid.index(j)]; }
    double etav(int j, int t) const { return eta[shape.site(j, t)]; }
};

struct SolveOptions {
    long max_rounds = 20000;
    double gap_tol = 1e-7;      // relative duality gap declared acceptable
    double theta_drop = 1e-14;  // master weights below this are discarded
    double w_snap = 1e-9;       // pricing treats |W| below this (relative) as zero
    long master_iter = 0;       // 0 = automatic
};

struct SolveInfo {
    bool optimal = false;
    long rounds = 0;
    double gap_rel = 0.0;
    double last_reduced = 0.0;    // reduced cost of the final priced column
    long master_iterations = 0;   // pivots in the final master solve
    std::string message;
    // (primal, dual) pair per pricing round; every pair satisfies weak duality
    std::vector<std::pair<double, double>> trace;
};

struct SolveResult {
    PrimalSolution primal;
    DualSolution dual;
    SolveInfo info;
};

namespace detail {

/// Backward value recursion for the pricing subproblem: W(j,t) is the
/// marginal value of keeping one unit of mass alive at (j,t) under level
/// prices nu. Positive entries are exactly the optimal dual surpluses eta.
inline void compute_w(const LpProblem& prob, const std::vector<double>& nu,
                      std::vector<double>& w) {
    const LatticeShape& sh = prob.shape;
    w.assign(sh.num_cells(), 0.0);
    for (int t = sh.t_hor; t >= 1; --t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            double val = prob.c[sh.var_id(j, t)] - nu[sh.grid.index(j)];
            if (t < sh.t_hor) {
                for (int d : {-1, 1}) {
                    const int jc = j + d;
                    if (jc >= sh.a_lo && jc <= sh.a_hi) {
                        const double wc = w[sh.site(jc, t + 1)];
                        if (wc > 0.0) val += 0.5 * wc;
                    }
                }
            }
            w[sh.site(j, t)] = val;
        }
    }
}

inline double pricing_value(const LpProblem& prob, const std::vector<double>& w) {
    const LatticeShape& sh = prob.shape;
    double v = 0.0;
    for (int d : {-1, 1}) {
        const int j = sh.grid.j_star + d;
        if (sh.t_hor >= 1 && j >= sh.a_lo && j <= sh.a_hi) {
            const double ws = w[sh.site(j, 1)];
            if (ws > 0.0) v += 0.5 * ws;
        }
    }
    return v;
}

/// Forward propagation of the keep-where-W-positive policy. Values within
/// `snap` of zero count as zero, so the kept set is stable under tiny price
/// perturbations (the exact optimum ties W = 0 along whole channels).
/// Accumulates the per-level usage and objective of the column; when
/// `p_acc` is given the flow is added into it with weight `theta`.
inline void policy_flow(const LpProblem& prob, const std::vector<double>& w,
                        std::vector<double>& use, double& cobj, double snap = 0.0,
                        std::vector<double>* p_acc = nullptr, double theta = 1.0) {
    const LatticeShape& sh = prob.shape;
    use.assign(sh.grid.num_sites(), 0.0);
    cobj = 0.0;
    std::vector<double> prev(sh.grid.num_sites(), 0.0), cur(sh.grid.num_sites(), 0.0);
    prev[sh.grid.index(sh.grid.j_star)] = 1.0;
    for (int t = 1; t <= sh.t_hor; ++t) {
        std::fill(cur.begin(), cur.end(), 0.0);
        double alive_mass = 0.0;
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            const double in =
                0.5 * (prev[sh.grid.index(j - 1)] + prev[sh.grid.index(j + 1)]);
            if (in == 0.0) continue;
            if (w[sh.site(j, t)] > snap) {
                cur[sh.grid.index(j)] = in;
                alive_mass += in;
                use[sh.grid.index(j)] += in;
                cobj += prob.c[sh.var_id(j, t)] * in;
                if (p_acc) (*p_acc)[sh.site(j, t)] += theta * in;
            }
        }
        std::swap(prev, cur);
        if (alive_mass == 0.0) break;
    }
}

struct Column {
    bool zero_policy = false;
    std::vector<double> nu;   // prices that regenerate the policy
    std::vector<double> use;  // per-level usage (only alive levels nonzero)
    double cobj = 0.0;
};

}  // namespace detail

/// Solves the assembled program by column generation: a dense revised
/// simplex runs on the potential rows plus a convexity row, and candidate
/// stopping policies are priced by the backward recursion. The final basis
/// multipliers give nu; the pricing values give eta; the certified duality
/// gap is reported from that honest pair.
inline SolveResult solve(const LpProblem& prob, const SolveOptions& opt = {}) {
    const LatticeShape& sh = prob.shape;
    const Grid& grid = sh.grid;
    SolveResult res;
    res.primal.shape = sh;
    res.dual.shape = sh;
    res.dual.nu.assign(grid.num_sites(), 0.0);

    if (prob.trivial) {
        res.primal.p.assign(sh.num_cells(), 0.0);
        res.primal.q.assign(sh.num_cells(), 0.0);
        res.primal.stopped_at_start = true;
        res.primal.stopped_mass = 1.0;
        res.primal.objective = prob.table.at(grid.j_star, 0);
        res.primal.tilted_objective = res.primal.objective;
        res.dual.eta.assign(sh.num_cells(), 0.0);
        res.dual.objective_tilted = res.primal.objective;
        res.dual.objective = res.primal.objective;
        res.info.optimal = true;
        res.info.message = "point mass at the start, stopped at t = 0";
        return res;
    }

    const int nlev = prob.n_potential_rows();
    std::vector<double> p_dense(sh.num_cells(), 0.0);
    p_dense[sh.site(grid.j_star, 0)] = 1.0;

    auto finish_primal = [&]() {
        res.primal.p = std::move(p_dense);
        QRecovery qr = recover_q(sh, res.primal.p);
        res.primal.q = std::move(qr.q);
        res.primal.clip_magnitude = qr.clip_total;
        double untilted = 0.0, stopped = 0.0;
        for (int j = grid.j_lo; j <= grid.j_hi; ++j)
            for (int t = 1; t <= sh.t_hor + 1; ++t) {
                const double qv = res.primal.q[sh.site(j, t)];
                if (qv > 0.0) {
                    untilted += prob.table.at(j, t) * qv;
                    stopped += qv;
                }
            }
        res.primal.objective = untilted;
        res.primal.stopped_mass = stopped;
        double tilted = prob.obj0;
        for (int t = 1; t <= sh.t_hor; ++t)
            for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
                tilted += prob.c[sh.var_id(j, t)] * res.primal.p[sh.site(j, t)];
        res.primal.tilted_objective = tilted;
    };

    auto set_dual = [&](const std::vector<double>& nu, const std::vector<double>& w) {
        res.dual.nu = nu;
        res.dual.eta.assign(sh.num_cells(), 0.0);
        for (int t = 1; t <= sh.t_hor; ++t)
            for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
                res.dual.eta[sh.site(j, t)] = std::max(w[sh.site(j, t)], 0.0);
        double d = prob.obj0 + detail::pricing_value(prob, w);
        for (int j = sh.a_lo; j <= sh.a_hi; ++j)
            d += nu[grid.index(j)] * prob.u_bar[grid.index(j)];
        res.dual.objective_tilted = d;
        const double x_star = grid.x(grid.j_star);
        res.dual.objective =
            d - prob.table.tilt_c * (prob.mu.second_moment() - x_star * x_star);
    };

    if (sh.n_vars == 0) {
        // everything is absorbed on the first step
        finish_primal();
        std::vector<double> w;  // empty lattice
        detail::compute_w(prob, res.dual.nu, w);
        set_dual(res.dual.nu, w);
        res.info.optimal = true;
        res.info.gap_rel = std::abs(res.primal.tilted_objective - res.dual.objective_tilted) /
                           (1.0 + std::abs(res.primal.tilted_objective));
        return res;
    }

    double cmax = 0.0;
    for (double cv : prob.c) cmax = std::max(cmax, std::abs(cv));
    const double snap = opt.w_snap * (1.0 + cmax);

    std::vector<detail::Column> cols;
    {
        detail::Column zero;
        zero.zero_policy = true;
        zero.use.assign(grid.num_sites(), 0.0);
        cols.push_back(std::move(zero));
        detail::Column greedy;
        greedy.nu.assign(grid.num_sites(), 0.0);
        std::vector<double> w;
        detail::compute_w(prob, greedy.nu, w);
        detail::policy_flow(prob, w, greedy.use, greedy.cobj, snap);
        cols.push_back(std::move(greedy));
    }

    std::vector<double> rhs(nlev + 1);
    std::vector<std::uint8_t> eq(nlev + 1, 0);
    for (int r = 0; r < nlev; ++r) rhs[r] = prob.u_bar[grid.index(sh.a_lo + r)];
    rhs[nlev] = 1.0;
    eq[nlev] = 1;
    std::vector<int> eq_basis(nlev + 1, -1);
    eq_basis[nlev] = 0;

    double best_dual = std::numeric_limits<double>::infinity();
    std::vector<double> best_nu(grid.num_sites(), 0.0);
    std::vector<double> theta;
    std::vector<double> w, nu(grid.num_sites(), 0.0), use;
    bool converged = false;
    long round = 0;
    int stagnant = 0;
    double last_masterval = -std::numeric_limits<double>::infinity();
    for (round = 1; round <= opt.max_rounds; ++round) {
        DenseSimplex master(rhs, eq);
        for (const auto& col : cols) {
            std::vector<double> a(nlev + 1);
            for (int r = 0; r < nlev; ++r) a[r] = col.use[grid.index(sh.a_lo + r)];
            a[nlev] = 1.0;
            master.add_column(std::move(a), col.cobj);
        }
        SimplexResult mres = master.solve(eq_basis, opt.master_iter);
        res.info.master_iterations = mres.iterations;
        if (mres.status == SimplexStatus::Unbounded) {
            res.info.message = "master reported unbounded, should not happen";
            break;
        }
        if (mres.status == SimplexStatus::IterationLimit) {
            res.info.message = "master simplex hit its pivot cap";
            break;
        }
        if (mres.status == SimplexStatus::Singular) {
            res.info.message = "master simplex basis went singular";
            break;
        }
        theta = mres.x;
        const double masterval = mres.objective;
        std::fill(nu.begin(), nu.end(), 0.0);
        for (int r = 0; r < nlev; ++r)
            nu[grid.index(sh.a_lo + r)] = std::max(mres.row_dual[r], 0.0);
        const double sigma = mres.row_dual[nlev];

        detail::compute_w(prob, nu, w);
        double dualval = detail::pricing_value(prob, w);
        for (int j = sh.a_lo; j <= sh.a_hi; ++j)
            dualval += nu[grid.index(j)] * prob.u_bar[grid.index(j)];
        if (dualval < best_dual) {
            best_dual = dualval;
            best_nu = nu;
        }
        res.info.trace.emplace_back(prob.obj0 + masterval, prob.obj0 + dualval);

        double cobj = 0.0;
        detail::policy_flow(prob, w, use, cobj, snap);
        double reduced = cobj - sigma;
        for (int j = sh.a_lo; j <= sh.a_hi; ++j)
            reduced -= nu[grid.index(j)] * use[grid.index(j)];
        const double rc_eps = 1e-12 * (1.0 + std::abs(sigma) + std::abs(cobj));
        res.info.last_reduced = reduced;
        if (reduced <= rc_eps) {
            converged = true;
            break;
        }
        // a stalled master repeatedly regenerating near-identical columns
        // cannot improve further in double precision
        bool duplicate = false;
        for (const auto& col : cols) {
            if (col.zero_policy) continue;
            if (std::abs(col.cobj - cobj) > 1e-12 * (1.0 + std::abs(cobj))) continue;
            double du = 0.0;
            for (int j = sh.a_lo; j <= sh.a_hi; ++j)
                du = std::max(du, std::abs(col.use[grid.index(j)] - use[grid.index(j)]));
            if (du <= 1e-12 * grid.sqrt_n()) {
                duplicate = true;
                break;
            }
        }
        const bool progressed =
            masterval > last_masterval + 1e-13 * (1.0 + std::abs(masterval));
        last_masterval = std::max(last_masterval, masterval);
        if (duplicate && !progressed) {
            if (++stagnant >= 3) {
                converged = true;
                res.info.message = "stalled on a regenerated column";
                break;
            }
        } else {
            stagnant = 0;
        }
        detail::Column col;
        col.nu = nu;
        col.use = use;
        col.cobj = cobj;
        cols.push_back(std::move(col));
    }
    res.info.rounds = std::min(round, opt.max_rounds);

    for (std::size_t k = 0; k < theta.size() && k < cols.size(); ++k) {
        if (theta[k] <= opt.theta_drop || cols[k].zero_policy) continue;
        detail::compute_w(prob, cols[k].nu, w);
        double cobj = 0.0;
        detail::policy_flow(prob, w, use, cobj, snap, &p_dense, theta[k]);
    }
    finish_primal();
    detail::compute_w(prob, best_nu, w);
    set_dual(best_nu, w);

    res.info.gap_rel = std::abs(res.primal.tilted_objective - res.dual.objective_tilted) /
                       (1.0 + std::abs(res.primal.tilted_objective));
    res.info.optimal = converged && res.info.gap_rel <= opt.gap_tol;
    if (!converged && res.info.message.empty())
        res.info.message = "round limit reached before the pricing problem closed";
    return res;
}

/// Primal feasibility / consistency report used by verification paths.
struct PrimalCheck {
    double max_sign_violation = 0.0;       // most negative p or q entry
    double max_dynamics_residual = 0.0;    // |q - (inflow - p)| over all stop sites
    double max_potential_violation = 0.0;  // (visits + indicator - U_j)_+ per level
    double max_conservation_residual = 0.0;
    double max_martingale_residual = 0.0;
    double mass_residual = 0.0;            // |total stopped + surviving - 1|

    double worst() const {
        return std::max({max_sign_violation, max_dynamics_residual, max_potential_violation,
                         max_conservation_residual, max_martingale_residual, mass_residual});
    }
    bool pass(double check_tol) const { return worst() <= check_tol; }
};

inline PrimalCheck check_primal(const LpProblem& prob, const PrimalSolution& sol) {
    PrimalCheck rep;
    const LatticeShape& sh = sol.shape;
    const Grid& grid = sh.grid;
    if (sol.stopped_at_start) return rep;
    for (std::size_t i = 0; i < sol.p.size(); ++i) {
        rep.max_sign_violation = std::max(rep.max_sign_violation, -sol.p[i]);
        rep.max_sign_violation = std::max(rep.max_sign_violation, -sol.q[i]);
    }
    QRecovery qr = recover_q(sh, sol.p);
    for (std::size_t i = 0; i < sol.q.size(); ++i)
        rep.max_dynamics_residual =
            std::max(rep.max_dynamics_residual, std::abs(sol.q[i] - qr.q[i]));
    for (int j = sh.a_lo; j <= sh.a_hi; ++j) {
        const double lhs = sol.level_visits(j) + (j == grid.j_star ? 1.0 : 0.0);
        rep.max_potential_violation =
            std::max(rep.max_potential_violation, lhs - prob.u[grid.index(j)]);
    }
    double stopped = 0.0, stopped_mean = 0.0;
    for (int t = 1; t <= sh.t_hor + 1; ++t) {
        double slice_pq = 0.0, slice_mean = 0.0, prev_p = 0.0;
        for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
            const double pv = t <= sh.t_hor ? sol.p[sh.site(j, t)] : 0.0;
            const double qv = sol.q[sh.site(j, t)];
            slice_pq += pv + qv;
            slice_mean += grid.x(j) * (pv + qv);
            prev_p += sol.p[sh.site(j, t - 1)];
        }
        rep.max_conservation_residual =
            std::max(rep.max_conservation_residual, std::abs(slice_pq - prev_p));
        rep.max_martingale_residual = std::max(
            rep.max_martingale_residual,
            std::abs(slice_mean + stopped_mean - grid.x(grid.j_star)));
        for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
            stopped += sol.q[sh.site(j, t)];
            stopped_mean += grid.x(j) * sol.q[sh.site(j, t)];
        }
    }
    double surviving = 0.0;
    for (int j = grid.j_lo; j <= grid.j_hi; ++j) surviving += sol.p[sh.site(j, sh.t_hor)];
    // the forced stop at T+1 already drains the last slice
    rep.mass_residual = std::abs(stopped - 1.0);
    (void)surviving;
    return rep;
}

}  // namespace sep
