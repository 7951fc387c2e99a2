#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sep/barrier.hpp"
#include "sep/measure.hpp"
#include "sep/payoff.hpp"
#include "sep/pipeline.hpp"
#include "sep/rng.hpp"

namespace sep {

/// Outcome of a batch of stopped walks. Counts are integers and per-path
/// statistics are accumulated in path-index order, so the result is a pure
/// function of (seed, n_paths).
struct SimResult {
    Grid grid;
    std::int64_t n_paths = 0;
    std::int64_t n_censored = 0;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> counts;  // stopped paths per level
    double mean_tau = 0.0;             // E[tau / N] over stopped paths
    double se_tau = 0.0;
    double mean_tau_sq = 0.0;          // E[(tau / N)^2]
    double se_tau_sq = 0.0;
    bool has_objective = false;
    double obj_mean = 0.0;             // E[F(x_stop, tau / N)]
    double obj_se = 0.0;

    std::vector<double> empirical_mass() const {
        std::vector<double> m(counts.size(), 0.0);
        const double n = static_cast<double>(std::max<std::int64_t>(1, n_paths - n_censored));
        for (std::size_t i = 0; i < counts.size(); ++i) m[i] = counts[i] / n;
        return m;
    }
};

namespace detail {

struct MomentAcc {
    double sum = 0.0, sum_sq = 0.0;
    std::int64_t n = 0;
    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++n;
    }
    double mean() const { return n > 0 ? sum / n : 0.0; }
    double se() const {
        if (n < 2) return 0.0;
        const double m = mean();
        const double var = std::max(0.0, (sum_sq - n * m * m) / (n - 1));
        return std::sqrt(var / n);
    }
};

}  // namespace detail

/// Walks from the start until first entry into the barrier region (or a
/// boundary). At sites carrying both sojourn and stopped mass the walk
/// stops with the conditional probability q / (p + q) when the solved
/// solution is supplied; without it such sites stop deterministically.
/// Paths exceeding 100 T steps are censored and reported.
inline SimResult simulate_barrier(const CaveBarrier& barrier, const Grid& grid,
                                  std::int64_t n_paths, std::uint64_t seed,
                                  const PrimalSolution* mix = nullptr,
                                  const PayoffSpec* payoff = nullptr) {
    if (n_paths < 1) throw std::invalid_argument("simulate_barrier: need at least one path");
    SimResult res;
    res.grid = grid;
    res.n_paths = n_paths;
    res.seed = seed;
    res.counts.assign(grid.num_sites(), 0);
    detail::MomentAcc tau_acc, tau_sq_acc, obj_acc;
    const long safety = 100L * std::max(1, barrier.t_hor) + 2;
    for (std::int64_t path = 0; path < n_paths; ++path) {
        PathRng rng(seed, static_cast<std::uint64_t>(path));
        int j = grid.j_star;
        long t = 0;
        bool stopped = false;
        while (t < safety) {
            j += rng.next_step();
            ++t;
            bool stop;
            if (barrier.always_stops(j)) {
                stop = true;
            } else if (t > barrier.t_hor) {
                stop = true;  // forced stop past the horizon, as in the program
            } else if (barrier.in_region(j, static_cast<int>(t))) {
                stop = true;
                if (mix != nullptr && t <= mix->shape.t_hor) {
                    const double pv = mix->pv(j, static_cast<int>(t));
                    const double qv = mix->qv(j, static_cast<int>(t));
                    if (pv > tol::zero && qv > tol::zero)
                        stop = rng.next_unit() < qv / (pv + qv);
                }
            } else {
                stop = false;
            }
            if (stop) {
                stopped = true;
                break;
            }
        }
        if (!stopped) {
            ++res.n_censored;
            continue;
        }
        ++res.counts[grid.index(j)];
        const double tau = static_cast<double>(t) / grid.n;
        tau_acc.add(tau);
        tau_sq_acc.add(tau * tau);
        if (payoff != nullptr) obj_acc.add(payoff->f(grid.x(j), tau));
    }
    res.mean_tau = tau_acc.mean();
    res.se_tau = tau_acc.se();
    res.mean_tau_sq = tau_sq_acc.mean();
    res.se_tau_sq = tau_sq_acc.se();
    if (payoff != nullptr) {
        res.has_objective = true;
        res.obj_mean = obj_acc.mean();
        res.obj_se = obj_acc.se();
    }
    return res;
}

/// First-hit description of a continuous stopping rule.
struct StoppingRule {
    enum class Kind { HitLevels, FixedTime } kind = Kind::HitLevels;
    double x_lo = -1.0, x_hi = 1.0;  // HitLevels: stop outside (x_lo, x_hi)
    double t_fix = 0.0;              // FixedTime: stop at continuous time t_fix
};

/// Runs the fine walk under a continuous stopping rule and records the
/// coarse crossing step. The walk itself is the Donsker approximation of
/// the Brownian path, so no separate path discretisation is involved. A
/// fixed-time rule stops at step max(1, ceil(N t)).
inline SimResult discretise_stopping_rule(const StoppingRule& rule, const Grid& grid,
                                          std::int64_t n_paths, std::uint64_t seed,
                                          const PayoffSpec* payoff = nullptr) {
    if (n_paths < 1) throw std::invalid_argument("discretise_stopping_rule: need paths");
    SimResult res;
    res.grid = grid;
    res.n_paths = n_paths;
    res.seed = seed;
    res.counts.assign(grid.num_sites(), 0);
    detail::MomentAcc tau_acc, tau_sq_acc, obj_acc;
    long fixed_step = 1;
    if (rule.kind == StoppingRule::Kind::FixedTime)
        fixed_step = std::max<long>(
            1, static_cast<long>(std::ceil(rule.t_fix * grid.n - 1e-12)));
    const double width = grid.x(grid.j_hi) - grid.x(grid.j_lo);
    const long safety =
        200L * grid.n * static_cast<long>(std::ceil(width * width + 1.0)) + 1000;
    for (std::int64_t path = 0; path < n_paths; ++path) {
        PathRng rng(seed, static_cast<std::uint64_t>(path));
        int j = grid.j_star;
        long t = 0;
        bool stopped = false;
        while (t < safety) {
            j += rng.next_step();
            ++t;
            bool stop = j <= grid.j_lo || j >= grid.j_hi;
            if (rule.kind == StoppingRule::Kind::HitLevels) {
                if (grid.x(j) <= rule.x_lo + 1e-12 || grid.x(j) >= rule.x_hi - 1e-12)
                    stop = true;
            } else {
                if (t >= fixed_step) stop = true;
            }
            if (stop) {
                stopped = true;
                break;
            }
        }
        if (!stopped) {
            ++res.n_censored;
            continue;
        }
        ++res.counts[grid.index(j)];
        const double tau = static_cast<double>(t) / grid.n;
        tau_acc.add(tau);
        tau_sq_acc.add(tau * tau);
        if (payoff != nullptr) obj_acc.add(payoff->f(grid.x(j), tau));
    }
    res.mean_tau = tau_acc.mean();
    res.se_tau = tau_acc.se();
    res.mean_tau_sq = tau_sq_acc.mean();
    res.se_tau_sq = tau_sq_acc.se();
    if (payoff != nullptr) {
        res.has_objective = true;
        res.obj_mean = obj_acc.mean();
        res.obj_se = obj_acc.se();
    }
    return res;
}

/// Potential of a mass vector on the grid without probability validation
/// (empirical laws carry Monte Carlo noise in mass and mean).
inline std::vector<double> potential_of_masses(const Grid& grid,
                                               const std::vector<double>& mass) {
    std::vector<double> u(grid.num_sites(), 0.0);
    const double root = grid.sqrt_n();
    for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
        double e_abs = 0.0;
        for (int i = grid.j_lo; i <= grid.j_hi; ++i)
            e_abs += std::abs(grid.x(i) - grid.x(j)) * mass[grid.index(i)];
        u[grid.index(j)] = root * (e_abs - std::abs(grid.x(j) - grid.x(grid.j_star)));
    }
    return u;
}

/// Sup distance between the potentials of an empirical law and the target,
/// plus the matching 3-standard-error bound per level (delta method on the
/// linear statistic E|X - x_j|).
struct PotentialDistance {
    double sup_distance = 0.0;
    double sup_bound = 0.0;    // max over levels of 3 SE
    double worst_margin = 0.0; // max over levels of |diff| - 3 SE
};

inline PotentialDistance potential_distance(const Grid& grid, const SimResult& sim,
                                            const AtomicMeasure& mu) {
    PotentialDistance out;
    const std::vector<double> emp = sim.empirical_mass();
    const std::vector<double> u_emp = potential_of_masses(grid, emp);
    const std::vector<double> u_mu = potential_of_masses(grid, mu.mass);
    const double n = static_cast<double>(std::max<std::int64_t>(1, sim.n_paths - sim.n_censored));
    out.worst_margin = -std::numeric_limits<double>::infinity();
    for (int j = grid.j_lo; j <= grid.j_hi; ++j) {
        const double diff = std::abs(u_emp[grid.index(j)] - u_mu[grid.index(j)]);
        double mean_abs = 0.0, mean_abs_sq = 0.0;
        for (int i = grid.j_lo; i <= grid.j_hi; ++i) {
            const double a = std::abs(grid.x(i) - grid.x(j));
            mean_abs += a * emp[grid.index(i)];
            mean_abs_sq += a * a * emp[grid.index(i)];
        }
        const double var = std::max(0.0, mean_abs_sq - mean_abs * mean_abs);
        const double se = grid.sqrt_n() * std::sqrt(var / n);
        out.sup_distance = std::max(out.sup_distance, diff);
        out.sup_bound = std::max(out.sup_bound, 3.0 * se);
        out.worst_margin = std::max(out.worst_margin, diff - 3.0 * se);
    }
    return out;
}

/// Sup over shared x-levels of rescaled cutoff-time differences; sentinel
/// cutoffs and absorbing levels are excluded. Returns 0 when the barriers
/// share no comparable level.
inline double barrier_distance(const CaveBarrier& a, const CaveBarrier& b) {
    double dist = 0.0;
    for (int ja = a.grid.j_lo + 1; ja < a.grid.j_hi; ++ja) {
        const double x = a.grid.x(ja);
        const double jb_real = x * b.grid.sqrt_n();
        const int jb = static_cast<int>(std::llround(jb_real));
        if (std::abs(jb_real - jb) > 1e-9) continue;
        if (jb <= b.grid.j_lo || jb >= b.grid.j_hi) continue;
        if (a.always_stops(ja) || b.always_stops(jb)) continue;
        const bool a_has_l = a.l(ja) >= 0, b_has_l = b.l(jb) >= 0;
        if (a_has_l && b_has_l)
            dist = std::max(dist, std::abs(static_cast<double>(a.l(ja)) / a.grid.n -
                                           static_cast<double>(b.l(jb)) / b.grid.n));
        const bool a_has_r = a.r(ja) <= a.t_hor, b_has_r = b.r(jb) <= b.t_hor;
        if (a_has_r && b_has_r)
            dist = std::max(dist, std::abs(static_cast<double>(a.r(ja)) / a.grid.n -
                                           static_cast<double>(b.r(jb)) / b.grid.n));
    }
    return dist;
}

struct StudyRow {
    int n = 0;
    int t_hor = 0;
    double value = 0.0;          // reported (untilted) optimal value
    double gap = 0.0;            // relative duality gap
    double mc_distance = 0.0;    // sup potential distance of the simulated law
    double mc_margin = 0.0;      // mc_distance minus the 3 SE bound, <= 0 passes
    double barrier_dist = 0.0;   // rescaled distance to the previous refinement
};

struct StudyResult {
    std::vector<StudyRow> rows;
    std::vector<CaveBarrier> barriers;
    std::vector<EmbeddingRun> runs;  // kept for downstream inspection
};

/// Grid-refinement study: solve each N, extract and simulate the barrier,
/// and compare successive barriers after rescaling to continuous time.
inline StudyResult convergence_study(const std::vector<std::pair<double, double>>& atoms,
                                     const PayoffSpec& payoff, const std::vector<int>& n_list,
                                     double eps_tail, std::int64_t n_paths,
                                     std::uint64_t seed = 1) {
    for (std::size_t i = 1; i < n_list.size(); ++i)
        if (n_list[i] <= n_list[i - 1])
            throw std::invalid_argument("convergence_study: N list must increase");
    StudyResult out;
    RunOptions opt;
    opt.eps_tail = eps_tail;
    for (std::size_t i = 0; i < n_list.size(); ++i) {
        EmbeddingRun run = run_embedding(atoms, payoff, n_list[i], opt);
        StudyRow row;
        row.n = n_list[i];
        row.t_hor = run.t_hor;
        row.value = run.sol.primal.objective;
        row.gap = run.sol.info.gap_rel;
        if (!run.sol.primal.stopped_at_start && n_paths > 0) {
            const SimResult sim = simulate_barrier(run.bar.barrier, run.grid, n_paths,
                                                   seed + i, &run.sol.primal, &payoff);
            const PotentialDistance pd = potential_distance(run.grid, sim, run.mu);
            row.mc_distance = pd.sup_distance;
            row.mc_margin = pd.worst_margin;
        }
        if (i > 0) row.barrier_dist = barrier_distance(out.barriers.back(), run.bar.barrier);
        out.barriers.push_back(run.bar.barrier);
        out.rows.push_back(row);
        out.runs.push_back(std::move(run));
    }
    return out;
}

}  // namespace sep
