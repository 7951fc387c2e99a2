#pragma once

// Test-side oracles, independent of the library's solve path: a plain
// tableau simplex over the materialised rows, dynamic-programming visit
// counts and exit moments, and generators for random feasible solutions.

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "sep/barrier.hpp"
#include "sep/lp.hpp"

namespace oracle {

// ------------------------------------------------------------ tridiagonal

/// Solves a tridiagonal system (Thomas algorithm); diag/lower/upper are the
/// three bands, rhs is overwritten with the solution.
inline std::vector<double> solve_tridiag(std::vector<double> lower, std::vector<double> diag,
                                         std::vector<double> upper, std::vector<double> rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

/// Expected visit counts (including the start visit) of the walk absorbed
/// at the ends of [lo, hi], started at j_start: the discrete Green equation
/// v(j) - (v(j-1) + v(j+1)) / 2 = 1{j = j_start} on the interior.
inline std::vector<double> visit_counts(int lo, int hi, int j_start) {
    const int n = hi - lo - 1;  // interior levels
    if (n <= 0) return {};
    std::vector<double> lower(n, -0.5), diag(n, 1.0), upper(n, -0.5), rhs(n, 0.0);
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    rhs[j_start - lo - 1] = 1.0;
    return solve_tridiag(lower, diag, upper, rhs);  // indexed by j - lo - 1
}

/// First and second moments of the exit step of the symmetric walk from
/// [lo, hi] started at j_start, via the linear systems
///   h1(j) = 1 + (h1(j-1) + h1(j+1)) / 2
///   h2(j) = 1 + (2 h1(j-1) + h2(j-1) + 2 h1(j+1) + h2(j+1)) / 2.
struct ExitMoments {
    double mean = 0.0;
    double second = 0.0;
};

inline ExitMoments exit_moments(int lo, int hi, int j_start) {
    const int n = hi - lo - 1;
    if (n <= 0) return {0.0, 0.0};
    std::vector<double> lower(n, -0.5), diag(n, 1.0), upper(n, -0.5), rhs(n, 1.0);
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    const std::vector<double> h1 = solve_tridiag(lower, diag, upper, rhs);
    // h2(j) - (h2(j-1) + h2(j+1)) / 2 = 1 + h1(j-1) + h1(j+1)
    std::vector<double> rhs2(n);
    for (int i = 0; i < n; ++i) {
        double s = 1.0;
        if (i > 0) s += h1[i - 1];
        if (i + 1 < n) s += h1[i + 1];
        rhs2[i] = s;
    }
    lower.assign(n, -0.5);
    diag.assign(n, 1.0);
    upper.assign(n, -0.5);
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    const std::vector<double> h2 = solve_tridiag(lower, diag, upper, rhs2);
    const int k = j_start - lo - 1;
    return {h1[k], h2[k]};
}

/// Power iteration for the leading eigenpair of the interior transition
/// matrix of the absorbed walk on [0, L].
struct EigenPair {
    double rho = 0.0;
    std::vector<double> vec;  // interior profile, unit sup norm
};

inline EigenPair power_iteration(int levels, int iters = 20000) {
    // the chain has period 2 (eigenvalues come in +-rho pairs), so iterate
    // the shifted kernel (P + I)/2 whose top eigenvalue is simple
    const int n = levels - 1;
    std::vector<double> v(n, 1.0), w(n, 0.0);
    for (int it = 0; it < iters; ++it) {
        for (int i = 0; i < n; ++i) {
            double s = v[i];
            if (i > 0) s += 0.5 * v[i - 1];
            if (i + 1 < n) s += 0.5 * v[i + 1];
            w[i] = 0.5 * s;
        }
        double norm = 0.0;
        for (double x : w) norm = std::max(norm, std::abs(x));
        for (double& x : w) x /= norm;
        std::swap(v, w);
    }
    // Rayleigh quotient of the original kernel on the converged vector
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        double pv = 0.0;
        if (i > 0) pv += 0.5 * v[i - 1];
        if (i + 1 < n) pv += 0.5 * v[i + 1];
        num += v[i] * pv;
        den += v[i] * v[i];
    }
    return {num / den, v};
}

// ------------------------------------------------------- brute-force LP

/// Textbook dense tableau simplex for max c.x, A x <= b, x >= 0 with b >= 0,
/// kept deliberately separate from the library's solver.
struct DenseLpResult {
    double objective = 0.0;
    std::vector<double> x;
    bool optimal = false;
};

inline DenseLpResult dense_lp_max(const std::vector<std::vector<double>>& rows,
                                  const std::vector<double>& rhs,
                                  const std::vector<double>& obj, long max_iter = 0) {
    const int m = static_cast<int>(rows.size());
    const int k = static_cast<int>(obj.size());
    const int ncols = k + m;
    if (max_iter <= 0) max_iter = 500 + 60L * ncols;
    std::vector<std::vector<double>> tab(m, std::vector<double>(ncols + 1, 0.0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) tab[i][j] = rows[i][j];
        tab[i][k + i] = 1.0;
        tab[i][ncols] = rhs[i];
    }
    std::vector<double> rc(ncols + 1, 0.0);
    for (int j = 0; j < k; ++j) rc[j] = obj[j];
    std::vector<int> basis(m);
    for (int i = 0; i < m; ++i) basis[i] = k + i;

    DenseLpResult res;
    bool bland = false;
    int stalled = 0;
    double last = 0.0;
    for (long iter = 0; iter < max_iter; ++iter) {
        int enter = -1;
        double best = 1e-9;
        for (int j = 0; j < ncols; ++j)
            if (rc[j] > best) {
                best = rc[j];
                enter = j;
                if (bland) break;
            }
        if (enter < 0) {
            res.optimal = true;
            break;
        }
        int leave = -1;
        double ratio = std::numeric_limits<double>::infinity();
        for (int i = 0; i < m; ++i) {
            if (tab[i][enter] <= 1e-11) continue;
            const double r = tab[i][ncols] / tab[i][enter];
            if (r < ratio - 1e-15 ||
                (r < ratio + 1e-15 && (leave < 0 || basis[i] < basis[leave]))) {
                ratio = r;
                leave = i;
            }
        }
        if (leave < 0) throw std::runtime_error("dense_lp_max: unbounded");
        const double pv = tab[leave][enter];
        for (int j = 0; j <= ncols; ++j) tab[leave][j] /= pv;
        for (int i = 0; i < m; ++i) {
            if (i == leave || tab[i][enter] == 0.0) continue;
            const double f = tab[i][enter];
            for (int j = 0; j <= ncols; ++j) tab[i][j] -= f * tab[leave][j];
        }
        const double fz = rc[enter];
        for (int j = 0; j <= ncols; ++j) rc[j] -= fz * tab[leave][j];
        basis[leave] = enter;
        const double cur = -rc[ncols];
        if (cur <= last + 1e-13 * (1.0 + std::abs(cur))) {
            if (++stalled > 3 * m) bland = true;
        } else {
            stalled = 0;
        }
        last = cur;
    }
    res.x.assign(k, 0.0);
    for (int i = 0; i < m; ++i)
        if (basis[i] < k) res.x[basis[i]] = tab[i][ncols];
    for (int j = 0; j < k; ++j) res.objective += obj[j] * res.x[j];
    return res;
}

/// Optimal value of an assembled problem through the materialised rows and
/// the dense simplex; returns the untilted value like the production path.
struct LpOracleResult {
    double value_untilted = 0.0;
    double value_tilted = 0.0;
    sep::PrimalSolution primal;
};

inline LpOracleResult lp_oracle(const sep::LpProblem& prob) {
    const auto rows = sep::materialize_rows(prob);
    std::vector<std::vector<double>> a(rows.size(), std::vector<double>(prob.n_vars(), 0.0));
    std::vector<double> b(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [var, coef] : rows[i].coef) a[i][var] = coef;
        b[i] = rows[i].rhs;
    }
    const DenseLpResult lp = dense_lp_max(a, b, prob.c);
    if (!lp.optimal) throw std::runtime_error("lp_oracle: simplex did not finish");

    LpOracleResult out;
    const sep::LatticeShape& sh = prob.shape;
    out.primal.shape = sh;
    out.primal.p.assign(sh.num_cells(), 0.0);
    out.primal.p[sh.site(sh.grid.j_star, 0)] = 1.0;
    for (int t = 1; t <= sh.t_hor; ++t)
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
            out.primal.p[sh.site(j, t)] = lp.x[sh.var_id(j, t)];
    sep::QRecovery qr = sep::recover_q(sh, out.primal.p);
    out.primal.q = std::move(qr.q);
    sep::evaluate_objectives(out.primal, prob.table);
    out.primal.stopped_mass = 0.0;
    for (double v : out.primal.q) out.primal.stopped_mass += v;
    out.value_tilted = prob.obj0 + lp.objective;
    out.value_untilted = out.primal.objective;
    return out;
}

// ------------------------------------------------- random feasible points

/// Random stopping-policy flow scaled into the potential polytope: every
/// site stops an independent uniform fraction of its arriving mass, then
/// the sojourn is shrunk so all potential rows hold.
inline sep::PrimalSolution random_feasible(const sep::LpProblem& prob, std::uint64_t seed,
                                           double stop_intensity = 0.35) {
    const sep::LatticeShape& sh = prob.shape;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> p(sh.num_cells(), 0.0);
    p[sh.site(sh.grid.j_star, 0)] = 1.0;
    for (int t = 1; t <= sh.t_hor; ++t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            const double in = 0.5 * (p[sh.site(j - 1, t - 1)] + p[sh.site(j + 1, t - 1)]);
            if (in == 0.0) continue;
            const double theta = unif(rng) < stop_intensity ? unif(rng) : 0.0;
            p[sh.site(j, t)] = in * (1.0 - theta);
        }
    }
    double scale = 1.0;
    for (int j = sh.a_lo; j <= sh.a_hi; ++j) {
        double visits = 0.0;
        for (int t = 1; t <= sh.t_hor; ++t) visits += p[sh.site(j, t)];
        const double ub = prob.u_bar[sh.grid.index(j)];
        if (visits > ub) scale = std::min(scale, ub / visits * 0.999);
    }
    if (scale < 1.0)
        for (int t = 1; t <= sh.t_hor; ++t)
            for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) p[sh.site(j, t)] *= scale;
    sep::PrimalSolution sol;
    sol.shape = sh;
    sol.p = std::move(p);
    sep::QRecovery qr = sep::recover_q(sh, sol.p);
    sol.q = std::move(qr.q);
    sep::evaluate_objectives(sol, prob.table);
    sol.stopped_mass = 0.0;
    for (double v : sol.q) sol.stopped_mass += v;
    return sol;
}

/// Plants a stop: eps of the mass leaving (i, t) stops there instead and
/// its downstream flow is removed. Keeps the solution feasible and creates
/// shape violations wherever sojourn mass remains on the wrong side.
inline sep::PrimalSolution plant_stop(const sep::PrimalSolution& sol, int i, int t, double eps) {
    const sep::LatticeShape& sh = sol.shape;
    const sep::TrackedMass tm = sep::track_mass(sol, i, t, eps);
    sep::PrimalSolution out = sol;
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j)
        for (int r = t + 1; r <= sh.t_hor + 1; ++r) {
            out.p[sh.site(j, r)] -= tm.p[sh.site(j, r)];
            out.q[sh.site(j, r)] -= tm.q[sh.site(j, r)];
        }
    out.p[sh.site(i, t)] -= eps;
    out.q[sh.site(i, t)] += eps;
    out.stopped_mass = 0.0;
    for (double v : out.q) out.stopped_mass += v;
    return out;
}

}  // namespace oracle
