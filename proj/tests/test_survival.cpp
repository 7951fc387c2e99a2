#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "sep/grid.hpp"
#include "sep/lp.hpp"
#include "sep/measure.hpp"
#include "sep/survival.hpp"
#include "support/oracles.hpp"

using namespace sep;

TEST_CASE("two-level walk dies on the first step") {
    const Grid g = grid_for_levels(2);
    const SurvivalTable tab = compute_pi(g, 5);
    CHECK(tab.pi(g.j_star, 0) == 1.0);
    for (int t = 1; t <= 5; ++t) CHECK(tab.slice_mass(t) == 0.0);
    CHECK(tab.rho == Catch::Approx(std::cos(std::numbers::pi / 2)).margin(1e-15));
}

TEST_CASE("four-level walk from the centre decays by cos^2(pi/4) per two steps") {
    const Grid g = grid_for_levels(4);
    const SurvivalTable tab = compute_pi(g, 40);
    CHECK(tab.pi(0, 2) == Catch::Approx(0.5));
    CHECK(tab.pi(0, 4) == Catch::Approx(0.25));
    // single surviving mode: the two-step ratio is exactly rho^2 = 1/2
    for (int t = 2; t + 2 <= 40; t += 2)
        CHECK(tab.pi(0, t + 2) / tab.pi(0, t) == Catch::Approx(0.5).margin(1e-12));
}

TEST_CASE("visit counts reproduce the Green function (1, 2, 1)") {
    const Grid g = grid_for_levels(4);
    const SurvivalTable tab = compute_pi(g, 200);
    CHECK(tab.visit_count(-1) == Catch::Approx(1.0).margin(1e-10));
    CHECK(tab.visit_count(0) == Catch::Approx(2.0).margin(1e-10));
    CHECK(tab.visit_count(1) == Catch::Approx(1.0).margin(1e-10));
    double total = 0.0;
    for (int j = g.j_lo; j <= g.j_hi; ++j) total += tab.visit_count(j);
    CHECK(total == Catch::Approx(4.0).margin(1e-9));
}

TEST_CASE("visit counts match the potential of the boundary-absorption law") {
    // cross-module oracle: sum_t pi(j, t) equals the potential of the law
    // embedded by stopping only at the boundaries
    const Grid g = build_grid(-1.0, 1.0, 16);
    const SurvivalTable tab = compute_pi(g, 800);
    const AtomicMeasure mu = project_measure({{-1.0, 0.5}, {1.0, 0.5}}, g);
    const PotentialArray u = potential(mu, g);
    for (int j = g.j_lo + 1; j < g.j_hi; ++j) {
        const double visits = tab.visit_count(j);
        CHECK(visits == Catch::Approx(u(j)).margin(1e-9));
    }
}

TEST_CASE("yaglom proportionality at L = 8, T = 500") {
    const Grid g = grid_for_levels(8);
    const SurvivalTable tab = compute_pi(g, 500);
    CHECK(tab.rho == Catch::Approx(std::cos(std::numbers::pi / 8)).margin(1e-15));
    // power-iteration oracle for the leading eigenpair of the 7x7 kernel
    const oracle::EigenPair ep = oracle::power_iteration(8);
    CHECK(ep.rho == Catch::Approx(std::cos(std::numbers::pi / 8)).margin(1e-12));
    double vec_ratio = 0.0;
    for (int u = 1; u < 8; ++u) {
        const double m = tab.m[u];  // index u = j - j_lo
        const double ratio = ep.vec[u - 1] / m;
        if (vec_ratio == 0.0) vec_ratio = ratio;
        CHECK(ratio == Catch::Approx(vec_ratio).epsilon(1e-9));
    }
    const YaglomReport rep = yaglom_diagnostic(tab);
    CHECK_FALSE(rep.extinct);
    CHECK(rep.times_checked == 10);
    CHECK(rep.max_spread <= 1e-3);
    CHECK(rep.slice_ratio_error <= 1e-6);
}

TEST_CASE("yaglom diagnostic is vacuous for the two-level walk") {
    const Grid g = grid_for_levels(2);
    const SurvivalTable tab = compute_pi(g, 10);
    const YaglomReport rep = yaglom_diagnostic(tab);
    CHECK(rep.extinct);
}

TEST_CASE("underflow guard keeps late slices meaningful") {
    // rho = cos(pi/3) = 1/2: the raw recursion underflows near t = 2000
    const Grid g = grid_for_levels(3);
    const SurvivalTable tab = compute_pi(g, 2000);
    CHECK(tab.log_scale.back() > 0.0);
    const double lp = tab.log_pi(g.j_lo + 1, 2000);
    CHECK(std::isfinite(lp));
    // mass decays like rho^t = 2^-t: check the log within 1%
    CHECK(lp == Catch::Approx(2000.0 * std::log(0.5)).epsilon(0.01));
    const YaglomReport rep = yaglom_diagnostic(tab);
    CHECK_FALSE(rep.extinct);
    CHECK(rep.max_spread <= 1e-6);
}

TEST_CASE("horizon is the first time the tail drops below eps") {
    const Grid g2 = grid_for_levels(2);
    CHECK(horizon(g2, 0.5) == 1);

    const Grid g4 = grid_for_levels(4);
    // survival masses 1, 1, 1/2, 1/2, 1/4, ...: first <= 0.3 at t = 4
    CHECK(horizon(g4, 0.3) == 4);

    const Grid g8 = grid_for_levels(8);
    const int t8 = horizon(g8, 1e-8);
    CHECK(t8 >= 200);
    CHECK(t8 <= 400);
    // independent recursion oracle
    const SurvivalTable tab = compute_pi(g8, t8 + 2);
    CHECK(tab.slice_mass(t8) <= 1e-8);
    CHECK(tab.slice_mass(t8 - 1) > 1e-8);
    CHECK_THROWS_AS(horizon(g8, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(horizon(g8, 1.0), std::invalid_argument);
}
