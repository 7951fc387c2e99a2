#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

#include "sep/barrier.hpp"
#include "sep/grid.hpp"
#include "sep/lp.hpp"
#include "sep/measure.hpp"
#include "sep/payoff.hpp"

namespace sep {

/// Grid covering the support of the target measure. Boundaries land on the
/// extreme atoms when those sit on the mesh and are padded one level
/// outward otherwise, so the projected measure always fits.
inline Grid grid_for_atoms(const std::vector<std::pair<double, double>>& atoms, int n) {
    double lo = 0.0, hi = 0.0;
    bool any = false;
    for (const auto& [pos, w] : atoms) {
        if (w <= 0.0) continue;
        if (!any) {
            lo = hi = pos;
            any = true;
        } else {
            lo = std::min(lo, pos);
            hi = std::max(hi, pos);
        }
    }
    if (!any) throw std::invalid_argument("grid_for_atoms: empty measure");
    if (lo == 0.0 && hi == 0.0) return build_grid(-1.0, 1.0, n);
    if (!(lo < 0.0 && hi > 0.0))
        throw std::invalid_argument("grid_for_atoms: support must straddle the start");
    if (n < 1) throw std::invalid_argument("grid_for_atoms: N must be >= 1");
    Grid g;
    g.n = n;
    g.j_star = 0;
    const double root = std::sqrt(static_cast<double>(n));
    g.j_lo = static_cast<int>(std::floor(lo * root + 1e-12));
    g.j_hi = static_cast<int>(std::ceil(hi * root - 1e-12));
    if (g.levels() < 2)
        throw std::invalid_argument("grid_for_atoms: degenerate grid, fewer than 3 levels");
    return g;
}

struct RunOptions {
    double eps_tail = 1e-8;
    double tilt_margin = 0.01;
    SolveOptions solve;
};

/// Everything one solved instance produces.
struct EmbeddingRun {
    Grid grid;
    AtomicMeasure mu;
    int t_hor = 0;
    LpProblem prob;
    SolveResult sol;
    BarrierExtract bar;
};

/// Full pipeline: grid, projected measure, horizon with certified tail,
/// tilted payoff table, solve, and barrier extraction.
inline EmbeddingRun run_embedding(const std::vector<std::pair<double, double>>& atoms,
                                  const PayoffSpec& payoff, int n,
                                  const RunOptions& opt = {}) {
    if (payoff.kind == PayoffKind::Cave) validate_cave(payoff);
    EmbeddingRun run;
    run.grid = grid_for_atoms(atoms, n);
    run.mu = project_measure(atoms, run.grid);
    if (run.mu.is_point_mass_at_start()) {
        run.t_hor = 1;
    } else {
        const PotentialArray pot = potential(run.mu, run.grid);
        const auto [a_lo, a_hi] = alive_interval(run.grid, pot);
        run.t_hor = horizon_on(run.grid, opt.eps_tail, a_lo - 1, a_hi + 1);
    }
    PayoffTable table =
        tilt(discretise(payoff, run.grid, run.t_hor + 1), opt.tilt_margin);
    run.prob = assemble(run.grid, run.mu, table, run.t_hor);
    run.sol = solve(run.prob, opt.solve);
    if (!run.sol.primal.stopped_at_start)
        run.bar = extract(run.sol.primal, table.t0_index());
    return run;
}

}  // namespace sep
