#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "sep/lp.hpp"
#include "sep/measure.hpp"
#include "sep/payoff.hpp"

namespace sep {

/// Sign and row-feasibility audit of a dual point against the tilted payoff:
/// rows are (eta(j+1,t+1) + eta(j-1,t+1))/2 - eta(j,t) - nu_j
///          <= F(j,t) - (F(j+1,t+1) + F(j-1,t+1))/2.
struct DualFeasibility {
    double max_sign_violation = 0.0;
    double max_row_violation = 0.0;
    long rows_checked = 0;

    double worst() const { return std::max(max_sign_violation, max_row_violation); }
    bool pass(double check_tol) const { return worst() <= check_tol; }
};

inline DualFeasibility check_dual_feasible(const DualSolution& dual, const PayoffTable& table) {
    DualFeasibility rep;
    const LatticeShape& sh = dual.shape;
    for (double v : dual.nu) rep.max_sign_violation = std::max(rep.max_sign_violation, -v);
    for (double v : dual.eta) rep.max_sign_violation = std::max(rep.max_sign_violation, -v);
    for (int t = 1; t <= sh.t_hor; ++t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            const double eta_up = t < sh.t_hor && sh.alive(j + 1) ? dual.etav(j + 1, t + 1) : 0.0;
            const double eta_dn = t < sh.t_hor && sh.alive(j - 1) ? dual.etav(j - 1, t + 1) : 0.0;
            const double lhs = 0.5 * (eta_up + eta_dn) - dual.etav(j, t) - dual.nuv(j);
            const double rhs = table.tilted(j, t) -
                0.5 * (table.tilted(j + 1, t + 1) + table.tilted(j - 1, t + 1));
            rep.max_row_violation = std::max(rep.max_row_violation, lhs - rhs);
            ++rep.rows_checked;
        }
    }
    return rep;
}

/// Complementary slackness residuals over the trigger sets:
///   FCS1  p > 0  => the dual row holds with equality,
///   FCS2  q > 0  => eta = 0,
///   FCS3  nu > 0 => the potential row is tight.
struct SlacknessReport {
    double fcs1_residual = 0.0;
    double fcs2_residual = 0.0;
    double fcs3_residual = 0.0;
    long fcs1_triggers = 0;
    long fcs2_triggers = 0;
    long fcs3_triggers = 0;

    double worst() const { return std::max({fcs1_residual, fcs2_residual, fcs3_residual}); }
    bool pass(double check_tol) const { return worst() <= check_tol; }
};

inline SlacknessReport check_slackness(const LpProblem& prob, const PrimalSolution& primal,
                                       const DualSolution& dual) {
    SlacknessReport rep;
    const LatticeShape& sh = prob.shape;
    const PayoffTable& table = prob.table;
    for (int t = 1; t <= sh.t_hor; ++t) {
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2) {
            const double pv = primal.pv(j, t);
            const double qv = primal.qv(j, t);
            if (pv > tol::zero) {
                ++rep.fcs1_triggers;
                const double eta_up =
                    t < sh.t_hor && sh.alive(j + 1) ? dual.etav(j + 1, t + 1) : 0.0;
                const double eta_dn =
                    t < sh.t_hor && sh.alive(j - 1) ? dual.etav(j - 1, t + 1) : 0.0;
                const double lhs = 0.5 * (eta_up + eta_dn) - dual.etav(j, t) - dual.nuv(j);
                const double rhs = table.tilted(j, t) -
                    0.5 * (table.tilted(j + 1, t + 1) + table.tilted(j - 1, t + 1));
                rep.fcs1_residual = std::max(rep.fcs1_residual, std::abs(lhs - rhs));
            }
            if (qv > tol::zero) {
                ++rep.fcs2_triggers;
                rep.fcs2_residual = std::max(rep.fcs2_residual, std::abs(dual.etav(j, t)));
            }
        }
    }
    for (int j = sh.a_lo; j <= sh.a_hi; ++j) {
        if (dual.nuv(j) > tol::zero) {
            ++rep.fcs3_triggers;
            const double visits =
                primal.level_visits(j) + (j == sh.grid.j_star ? 1.0 : 0.0);
            rep.fcs3_residual =
                std::max(rep.fcs3_residual, std::abs(prob.u[sh.grid.index(j)] - visits));
        }
    }
    return rep;
}

/// Superhedging surfaces recovered from the dual: eta_tilde = eta + F is a
/// supermartingale surface dominating the payoff, and N nu_j estimates half
/// the second derivative of the static hedge at x_j.
struct HedgeEstimate {
    LatticeShape shape;
    std::vector<double> eta_tilde;  // dense cells, untilted payoff plus eta
    std::vector<double> h_second;   // per level, N nu_j
    double hedge_cost = 0.0;        // dual objective, untilted convention
    double nu_u_sum = 0.0;          // sum of nu_j (U_j - 1{j = j*})
    double start_eta_term = 0.0;    // (eta(j*-1,1) + eta(j*+1,1)) / 2
    double start_payoff_term = 0.0; // tilted first-step payoff constant
    double decomposition_residual = 0.0;

    double eta_tilde_at(int j, int t) const { return eta_tilde[shape.site(j, t)]; }
};

inline HedgeEstimate reconstruct_hedge(const LpProblem& prob, const DualSolution& dual) {
    HedgeEstimate h;
    const LatticeShape& sh = prob.shape;
    h.shape = sh;
    h.eta_tilde.assign(sh.num_cells(), 0.0);
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j)
        for (int t = 0; t <= sh.t_hor + 1; ++t)
            h.eta_tilde[sh.site(j, t)] = dual.etav(j, t) + prob.table.at(j, t);
    h.h_second.assign(sh.grid.num_sites(), 0.0);
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j)
        h.h_second[sh.grid.index(j)] = sh.grid.n * dual.nuv(j);
    h.hedge_cost = dual.objective;
    for (int j = sh.a_lo; j <= sh.a_hi; ++j)
        h.nu_u_sum += dual.nuv(j) * prob.u_bar[sh.grid.index(j)];
    for (int d : {-1, 1}) {
        const int j = sh.grid.j_star + d;
        if (sh.t_hor >= 1 && sh.alive(j)) h.start_eta_term += 0.5 * dual.etav(j, 1);
    }
    h.start_payoff_term = prob.obj0;
    h.decomposition_residual = std::abs(
        dual.objective_tilted - (h.nu_u_sum + h.start_eta_term + h.start_payoff_term));
    return h;
}

}  // namespace sep
