#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sep/grid.hpp"
#include "sep/measure.hpp"
#include "support/oracles.hpp"

using namespace sep;

TEST_CASE("build_grid floors the boundaries and anchors the start at zero") {
    const Grid g = build_grid(-1.0, 1.0, 16);
    CHECK(g.j_lo == -4);
    CHECK(g.j_hi == 4);
    CHECK(g.levels() == 8);
    CHECK(g.j_star == 0);
    CHECK(g.x(4) == Catch::Approx(1.0));

    const Grid tiny = build_grid(-1.0, 1.0, 1);
    CHECK(tiny.j_lo == -1);
    CHECK(tiny.j_hi == 1);
    CHECK(tiny.levels() == 2);

    // floor arithmetic on an asymmetric window, checked by scanning integers
    const Grid asym = build_grid(-0.7, 1.3, 25);
    auto floor_scan = [](double x, double root) {
        int j = static_cast<int>(x * root) - 2;
        while ((j + 1) <= x * root) ++j;
        return j;
    };
    CHECK(asym.j_lo == floor_scan(-0.7, 5.0));
    CHECK(asym.j_lo == -4);
    CHECK(asym.j_hi == 6);
    CHECK(asym.j_star == 0);
}

TEST_CASE("build_grid rejects degenerate windows") {
    CHECK_THROWS_AS(build_grid(-0.1, 0.1, 1), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(0.5, 1.0, 16), std::invalid_argument);
    CHECK_THROWS_AS(build_grid(-1.0, 1.0, 0), std::invalid_argument);
}

TEST_CASE("parity lattice reachability") {
    const Grid g = build_grid(-1.0, 1.0, 16);
    CHECK(g.reachable(1, 1));
    CHECK(g.reachable(-1, 1));
    CHECK_FALSE(g.reachable(0, 1));   // parity
    CHECK_FALSE(g.reachable(3, 1));   // range
    CHECK(g.reachable(0, 2));
    CHECK(g.reachable(2, 2));
}

TEST_CASE("project_measure keeps on-grid atoms and splits off-grid atoms") {
    const Grid g = build_grid(-1.0, 1.0, 16);
    const AtomicMeasure two = project_measure({{-1.0, 0.5}, {1.0, 0.5}}, g);
    CHECK(two(-4) == Catch::Approx(0.5));
    CHECK(two(4) == Catch::Approx(0.5));

    // atom at x = 0.125 on spacing 0.25: the unique mean-preserving split
    const AtomicMeasure split = project_measure({{0.125, 1.0}}, g);
    CHECK(split(0) == Catch::Approx(0.5));
    CHECK(split(1) == Catch::Approx(0.5));

    const Grid g4 = build_grid(-1.0, 1.0, 4);
    const AtomicMeasure three = project_measure({{-1.0, 0.25}, {0.0, 0.5}, {1.0, 0.25}}, g4);
    CHECK(three(-2) == Catch::Approx(0.25));
    CHECK(three(0) == Catch::Approx(0.5));
    CHECK(three(2) == Catch::Approx(0.25));
}

TEST_CASE("project_measure rejects bad input") {
    const Grid g = build_grid(-1.0, 1.0, 16);
    CHECK_THROWS_AS(project_measure({{2.0, 1.0}}, g), std::invalid_argument);
    CHECK_THROWS_AS(project_measure({{0.0, -0.5}, {0.5, 1.5}}, g), std::invalid_argument);
}

TEST_CASE("project_measure preserves mass and mean exactly") {
    const Grid g = build_grid(-1.0, 1.0, 25);
    std::mt19937_64 rng(20240901);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        // random centered measure with a few atoms
        std::vector<std::pair<double, double>> atoms;
        const int k = 2 + static_cast<int>(unif(rng) * 4);
        double mean = 0.0, mass = 0.0;
        for (int i = 0; i < k; ++i) {
            const double x = unif(rng) * 1.8 - 0.9;
            const double w = unif(rng) + 0.05;
            atoms.emplace_back(x, w);
            mean += x * w;
            mass += w;
        }
        // recenter and renormalise so the mean sits at the start level
        for (auto& [x, w] : atoms) {
            x -= mean / mass;
            w /= mass;
        }
        bool in_range = true;
        for (auto& [x, w] : atoms) in_range = in_range && std::abs(x) < 1.0;
        if (!in_range) continue;
        const AtomicMeasure mu = project_measure(atoms, g);
        CHECK(std::abs(mu.total_mass() - 1.0) <= 1e-12);
        CHECK(std::abs(mu.mean()) <= 1e-10 * g.sqrt_n());
    }
}

TEST_CASE("potential of the boundary law is the absorbed-walk Green function") {
    const Grid g = build_grid(-1.0, 1.0, 16);
    const AtomicMeasure mu = project_measure({{-1.0, 0.5}, {1.0, 0.5}}, g);
    const PotentialArray u = potential(mu, g);
    // oracle: visit-count recursion of the walk absorbed at the boundaries
    const std::vector<double> v = oracle::visit_counts(g.j_lo, g.j_hi, g.j_star);
    for (int j = -3; j <= 3; ++j) {
        CHECK(u(j) == Catch::Approx(4.0 - std::abs(j)).margin(1e-12));
        CHECK(u(j) == Catch::Approx(v[j - g.j_lo - 1]).margin(1e-10));
    }
    CHECK(u(-4) == Catch::Approx(0.0).margin(1e-12));
    CHECK(u(4) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("potential of the point mass at the start vanishes") {
    const Grid g = build_grid(-1.0, 1.0, 16);
    const AtomicMeasure mu = project_measure({{0.0, 1.0}}, g);
    const PotentialArray u = potential(mu, g);
    for (int j = g.j_lo; j <= g.j_hi; ++j) CHECK(u(j) == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("potential of the three-point law matches the stop-at-2 visit counts") {
    // oracle first: enumerate the two-step walk that stops everything at
    // t = 2, counting expected visits (start visit included)
    const double visits_0 = 1.0;        // at t = 0 only, all mass stops at 2
    const double visits_pm1 = 0.5;      // at t = 1 with probability 1/2 each
    const Grid g = build_grid(-1.0, 1.0, 4);
    const AtomicMeasure mu = project_measure({{-1.0, 0.25}, {0.0, 0.5}, {1.0, 0.25}}, g);
    const PotentialArray u = potential(mu, g);
    CHECK(u(0) == Catch::Approx(visits_0).margin(1e-12));
    CHECK(u(-1) == Catch::Approx(visits_pm1).margin(1e-12));
    CHECK(u(1) == Catch::Approx(visits_pm1).margin(1e-12));
}

TEST_CASE("potential is concave between atoms and vanishes at the boundaries") {
    const Grid g = build_grid(-0.7, 1.3, 25);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int rep = 0; rep < 25; ++rep) {
        const double a = -0.6 * unif(rng) - 0.05;
        const double b = 0.9 * unif(rng) + 0.05;
        const double wa = b / (b - a);  // centered two-atom measure
        const AtomicMeasure mu = project_measure({{a, wa}, {b, 1.0 - wa}}, g);
        const PotentialArray u = potential(mu, g);
        CHECK(std::abs(u(g.j_lo)) <= 1e-10);
        CHECK(std::abs(u(g.j_hi)) <= 1e-10);
        for (int j = g.j_lo + 1; j < g.j_hi; ++j) {
            const double second = u(j - 1) - 2.0 * u(j) + u(j + 1);
            // an atom of mass m puts a convex kink of exactly 2m at its level
            CHECK(second <= 2.0 * mu(j) + 1e-9);
            if (mu(j) <= 1e-12) CHECK(second <= 1e-9);
        }
        for (int j = g.j_lo; j <= g.j_hi; ++j) CHECK(u(j) >= -1e-12);
    }
}

TEST_CASE("potential rejects measures that cannot be reached") {
    const Grid g = build_grid(-1.0, 1.0, 4);
    AtomicMeasure mu;
    mu.grid = g;
    mu.mass.assign(g.num_sites(), 0.0);
    // point mass away from the start: U at its own level is -sqrt(N)|x| < 0
    mu.mass[g.index(1)] = 1.0;
    CHECK_THROWS_AS(potential(mu, g), std::invalid_argument);
}
