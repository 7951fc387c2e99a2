#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sep/lp.hpp"
#include "sep/measure.hpp"
#include "sep/payoff.hpp"
#include "sep/pipeline.hpp"
#include "sep/survival.hpp"
#include "support/oracles.hpp"

using namespace sep;

namespace {

struct Instance {
    Grid grid;
    AtomicMeasure mu;
    PayoffTable table;
    LpProblem prob;
};

Instance make_instance(const std::vector<std::pair<double, double>>& atoms,
                       const PayoffSpec& spec, int n, double eps_tail,
                       double margin = 0.01) {
    Instance ins;
    ins.grid = grid_for_atoms(atoms, n);
    ins.mu = project_measure(atoms, ins.grid);
    int t_hor = 1;
    if (!ins.mu.is_point_mass_at_start()) {
        const PotentialArray pot = potential(ins.mu, ins.grid);
        const auto [a_lo, a_hi] = alive_interval(ins.grid, pot);
        t_hor = horizon_on(ins.grid, eps_tail, a_lo - 1, a_hi + 1);
    }
    ins.table = tilt(discretise(spec, ins.grid, t_hor + 1), margin);
    ins.prob = assemble(ins.grid, ins.mu, ins.table, t_hor);
    return ins;
}

const std::vector<std::pair<double, double>> kTwoPoint = {{-1.0, 0.5}, {1.0, 0.5}};
const std::vector<std::pair<double, double>> kThreePoint = {{-1.0, 0.25}, {0.0, 0.5}, {1.0, 0.25}};
const std::vector<std::pair<double, double>> kAsym = {{-0.5, 2.0 / 3.0}, {1.0, 1.0 / 3.0}};

}  // namespace

TEST_CASE("assemble enumerates the parity lattice") {
    // one-step grid: no interior variables, objective is the first-step stop
    Instance one = make_instance(kTwoPoint, default_root(), 1, 0.5);
    CHECK(one.prob.n_vars() == 0);
    CHECK(one.prob.obj0 ==
          Catch::Approx(0.5 * (one.table.tilted(-1, 1) + one.table.tilted(1, 1))));

    // three-point law at N = 4 with a two-step horizon: p(-1,1), p(1,1), p(0,2)
    Instance three = make_instance(kThreePoint, default_root(), 4, 0.6);
    REQUIRE(three.prob.shape.t_hor == 2);
    CHECK(three.prob.n_vars() == 3);
    CHECK(three.prob.shape.is_var(-1, 1));
    CHECK(three.prob.shape.is_var(1, 1));
    CHECK(three.prob.shape.is_var(0, 2));
    CHECK_FALSE(three.prob.shape.is_var(2, 2));  // boundary

    // potential rows: one per interior level of the two-point N = 16 grid
    Instance wide = make_instance(kTwoPoint, default_root(), 16, 1e-6);
    CHECK(wide.prob.n_potential_rows() == 7);
    const auto rows = materialize_rows(wide.prob);
    long dyn = 0, pot_rows = 0;
    for (const auto& r : rows)
        (r.family == SparseRow::Family::Dynamics ? dyn : pot_rows) += 1;
    CHECK(dyn == wide.prob.n_vars());
    CHECK(pot_rows == 7);
    // every variable sits in exactly one potential row and <= 3 dynamics rows
    std::vector<int> dyn_count(wide.prob.n_vars(), 0), pot_count(wide.prob.n_vars(), 0);
    for (const auto& r : rows)
        for (const auto& [v, coef] : r.coef)
            (r.family == SparseRow::Family::Dynamics ? dyn_count : pot_count)[v] += 1;
    for (int v = 0; v < wide.prob.n_vars(); ++v) {
        CHECK(pot_count[v] == 1);
        CHECK(dyn_count[v] >= 1);
        CHECK(dyn_count[v] <= 3);
    }
}

TEST_CASE("point mass at the start solves trivially") {
    Instance ins = make_instance({{0.0, 1.0}}, default_root(), 16, 1e-8);
    REQUIRE(ins.prob.trivial);
    const SolveResult res = solve(ins.prob);
    CHECK(res.primal.stopped_at_start);
    CHECK(res.primal.objective == 0.0);
    CHECK(res.info.optimal);
}

TEST_CASE("two-point Root value matches the exit-moment oracle") {
    // oracle: E[T] and E[T^2] for the walk leaving [-4, 4]
    const oracle::ExitMoments em = oracle::exit_moments(-4, 4, 0);
    CHECK(em.mean == Catch::Approx(16.0).margin(1e-9));
    CHECK(em.second == Catch::Approx(416.0).margin(1e-8));
    const double expected = -em.second / (16.0 * 16.0);  // = -1.625

    Instance ins = make_instance(kTwoPoint, default_root(), 16, 1e-10);
    const SolveResult res = solve(ins.prob);
    REQUIRE(res.info.optimal);
    CHECK(res.info.gap_rel <= 1e-9);
    CHECK(res.primal.objective == Catch::Approx(expected).margin(1e-7));
    CHECK(res.primal.objective == Catch::Approx(-1.625).margin(1e-7));
    CHECK(res.primal.stopped_mass == Catch::Approx(1.0).margin(1e-12));

    // the potential rows are tight after the tilt: exact embedding
    for (int j = ins.prob.shape.a_lo; j <= ins.prob.shape.a_hi; ++j) {
        const double visits =
            res.primal.level_visits(j) + (j == ins.grid.j_star ? 1.0 : 0.0);
        CHECK(visits == Catch::Approx(ins.prob.u[ins.grid.index(j)]).margin(1e-8));
    }
}

TEST_CASE("three-point Root at N = 4 stops everything at t = 2") {
    Instance ins = make_instance(kThreePoint, default_root(), 4, 1e-10);
    const SolveResult res = solve(ins.prob);
    REQUIRE(res.info.optimal);
    CHECK(res.primal.objective == Catch::Approx(-0.25).margin(1e-9));
    CHECK(res.primal.qv(0, 2) == Catch::Approx(0.5).margin(1e-10));
    CHECK(res.primal.qv(-2, 2) == Catch::Approx(0.25).margin(1e-10));
    CHECK(res.primal.qv(2, 2) == Catch::Approx(0.25).margin(1e-10));

    const oracle::LpOracleResult ora = oracle::lp_oracle(ins.prob);
    CHECK(res.primal.tilted_objective == Catch::Approx(ora.value_tilted).margin(1e-9));
    CHECK(res.primal.objective == Catch::Approx(ora.value_untilted).margin(1e-9));
}

TEST_CASE("solver agrees with the dense tableau oracle across the bundle") {
    const std::vector<std::vector<std::pair<double, double>>> measures = {kTwoPoint, kThreePoint,
                                                                          kAsym};
    const std::vector<PayoffSpec> payoffs = {default_root(), default_rost(), default_cave(0.5)};
    for (const auto& atoms : measures) {
        for (const auto& spec : payoffs) {
            Instance ins = make_instance(atoms, spec, 4, 1e-8);
            const SolveResult res = solve(ins.prob);
            REQUIRE(res.info.optimal);
            const oracle::LpOracleResult ora = oracle::lp_oracle(ins.prob);
            INFO("payoff " << to_string(spec.kind) << " atoms " << atoms.size());
            CHECK(res.primal.tilted_objective ==
                  Catch::Approx(ora.value_tilted).margin(1e-8));
        }
    }
}

TEST_CASE("recover_q reproduces the stop flux") {
    Instance ins = make_instance(kThreePoint, default_root(), 4, 1e-8);
    const LatticeShape& sh = ins.prob.shape;

    SECTION("never stopping inside turns q into the absorption flux") {
        const SurvivalTable pi = compute_pi(ins.grid, sh.t_hor);
        std::vector<double> p(sh.num_cells(), 0.0);
        p[sh.site(ins.grid.j_star, 0)] = 1.0;
        for (int t = 1; t <= sh.t_hor; ++t)
            for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
                p[sh.site(j, t)] = pi.pi(j, t);
        const QRecovery qr = recover_q(sh, p);
        for (int t = 1; t <= sh.t_hor; ++t)
            for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
                CHECK(qr.q[sh.site(j, t)] == Catch::Approx(0.0).margin(1e-12));
        CHECK(qr.q[sh.site(2, 2)] == Catch::Approx(0.5 * pi.pi(1, 1)).margin(1e-12));
        CHECK(qr.q[sh.site(-2, 2)] == Catch::Approx(0.5 * pi.pi(-1, 1)).margin(1e-12));
    }

    SECTION("stopping everything immediately puts half at each first site") {
        std::vector<double> p(sh.num_cells(), 0.0);
        p[sh.site(ins.grid.j_star, 0)] = 1.0;
        const QRecovery qr = recover_q(sh, p);
        CHECK(qr.q[sh.site(-1, 1)] == Catch::Approx(0.5));
        CHECK(qr.q[sh.site(1, 1)] == Catch::Approx(0.5));
    }

    SECTION("negative dynamics slack rejects p") {
        std::vector<double> p(sh.num_cells(), 0.0);
        p[sh.site(ins.grid.j_star, 0)] = 1.0;
        p[sh.site(1, 1)] = 0.7;  // more than the arriving half
        CHECK_THROWS_AS(recover_q(sh, p), std::invalid_argument);
    }
}

TEST_CASE("solved instances satisfy the program invariants") {
    for (int n : {4, 16}) {
        Instance ins = make_instance(kAsym, default_cave(0.5), n, 1e-9);
        const SolveResult res = solve(ins.prob);
        REQUIRE(res.info.optimal);

        // conservation, martingale, sign, dynamics, potential
        const PrimalCheck rep = check_primal(ins.prob, res.primal);
        CHECK(rep.pass(1e-9));

        // weak duality along the whole run
        for (const auto& [primal, dual] : res.info.trace)
            CHECK(primal <= dual + 1e-9 * (1.0 + std::abs(dual)));

        // domination by the never-stopped walk, sitewise
        const SurvivalTable pi = compute_pi_on(ins.grid, ins.prob.shape.t_hor,
                                               ins.prob.shape.a_lo - 1,
                                               ins.prob.shape.a_hi + 1);
        const LatticeShape& sh = ins.prob.shape;
        for (int t = 1; t <= sh.t_hor; ++t)
            for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
                CHECK(res.primal.pv(j, t) <= pi.pi(j, t) + 1e-10);
    }
}

TEST_CASE("reported value does not depend on the tilt margin") {
    Instance a = make_instance(kThreePoint, default_cave(0.5), 4, 1e-10, 0.01);
    Instance b = make_instance(kThreePoint, default_cave(0.5), 4, 1e-10, 0.5);
    const SolveResult ra = solve(a.prob);
    const SolveResult rb = solve(b.prob);
    REQUIRE(ra.info.optimal);
    REQUIRE(rb.info.optimal);
    CHECK(std::abs(ra.primal.objective - rb.primal.objective) <= 1e-7);
}

TEST_CASE("doubling the horizon moves the value by at most bound * eps") {
    const double eps = 1e-8;
    Instance base = make_instance(kTwoPoint, default_root(), 16, eps);
    const int t2 = 2 * base.prob.shape.t_hor;
    PayoffTable table2 = tilt(discretise(default_root(), base.grid, t2 + 1));
    const LpProblem prob2 = assemble(base.grid, base.mu, table2, t2);
    const SolveResult r1 = solve(base.prob);
    const SolveResult r2 = solve(prob2);
    REQUIRE(r1.info.optimal);
    REQUIRE(r2.info.optimal);
    CHECK(std::abs(r1.primal.objective - r2.primal.objective) <= table2.bound * eps);
}

TEST_CASE("round cap reports a gap instead of lying") {
    Instance ins = make_instance(kAsym, default_cave(0.5), 16, 1e-8);
    SolveOptions opt;
    opt.max_rounds = 1;
    const SolveResult res = solve(ins.prob, opt);
    if (!res.info.optimal) {
        CHECK_FALSE(res.info.message.empty());
        CHECK(res.info.gap_rel > 0.0);
    }
    // and with the cap lifted the same instance closes
    const SolveResult full = solve(ins.prob);
    CHECK(full.info.optimal);
}
