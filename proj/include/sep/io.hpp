#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sep/barrier.hpp"
#include "sep/dual.hpp"
#include "sep/lp.hpp"
#include "sep/payoff.hpp"
#include "sep/pipeline.hpp"
#include "sep/sim.hpp"
#include "sep/survival.hpp"

namespace sep::io {

using json = nlohmann::json;

/// Full-precision decimal so doubles survive a text round trip bit for bit.
inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

// ---------------------------------------------------------------- measures

inline std::vector<std::pair<double, double>> measure_from_json(const json& j) {
    std::vector<std::pair<double, double>> atoms;
    if (!j.contains("atoms") || !j["atoms"].is_array())
        throw std::runtime_error("measure: expected an \"atoms\" array");
    for (const auto& a : j["atoms"]) {
        if (!a.is_array() || a.size() != 2)
            throw std::runtime_error("measure: each atom must be [position, mass]");
        atoms.emplace_back(a[0].get<double>(), a[1].get<double>());
    }
    return atoms;
}

inline std::vector<std::pair<double, double>> read_measure_file(const std::string& path) {
    return measure_from_json(json::parse(read_text(path)));
}

inline json measure_to_json(const std::vector<std::pair<double, double>>& atoms) {
    json arr = json::array();
    for (const auto& [x, m] : atoms) arr.push_back({x, m});
    return json{{"atoms", arr}};
}

// ----------------------------------------------------------------- payoffs

/// Payoff sampled on a rectangular (x, t) grid, evaluated by bilinear
/// interpolation with clamping at the edges.
inline PayoffSpec payoff_from_table_json(const json& j) {
    auto xs = j.at("x").get<std::vector<double>>();
    auto ts = j.at("t").get<std::vector<double>>();
    auto rows = j.at("values").get<std::vector<std::vector<double>>>();
    if (xs.size() < 2 || ts.size() < 2 || rows.size() != xs.size())
        throw std::runtime_error("payoff table: need a full x-by-t grid of values");
    for (const auto& r : rows)
        if (r.size() != ts.size())
            throw std::runtime_error("payoff table: ragged rows");
    PayoffSpec spec;
    spec.kind = PayoffKind::General;
    spec.f = [xs, ts, rows](double x, double t) {
        auto locate = [](const std::vector<double>& grid_vals, double v) {
            std::size_t i = 0;
            while (i + 2 < grid_vals.size() && grid_vals[i + 1] <= v) ++i;
            double lo = grid_vals[i], hi = grid_vals[i + 1];
            double w = hi > lo ? (v - lo) / (hi - lo) : 0.0;
            return std::pair<std::size_t, double>(i, std::clamp(w, 0.0, 1.0));
        };
        const auto [ix, wx] = locate(xs, x);
        const auto [it, wt] = locate(ts, t);
        const double v00 = rows[ix][it], v01 = rows[ix][it + 1];
        const double v10 = rows[ix + 1][it], v11 = rows[ix + 1][it + 1];
        return (1.0 - wx) * ((1.0 - wt) * v00 + wt * v01) +
               wx * ((1.0 - wt) * v10 + wt * v11);
    };
    return spec;
}

/// Payoff selected the way the command line spells it: cave, root, rost,
/// or table:<file>.
inline PayoffSpec payoff_from_selection(const std::string& name, double t0) {
    if (name == "cave") return default_cave(t0 > 0.0 ? t0 : 0.5);
    if (name == "root") return default_root();
    if (name == "rost") return default_rost();
    if (name.rfind("table:", 0) == 0) {
        PayoffSpec spec = payoff_from_table_json(json::parse(read_text(name.substr(6))));
        spec.t0 = t0;
        return spec;
    }
    throw std::runtime_error("unknown payoff selection: " + name);
}

// ---------------------------------------------------------------- solutions

inline std::string solution_to_csv(const PrimalSolution& sol) {
    const LatticeShape& sh = sol.shape;
    std::ostringstream out;
    out << "j,t,p,q\n";
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j)
        for (int t = 1; t <= sh.t_hor + 1; ++t) {
            const double pv = sol.p[sh.site(j, t)];
            const double qv = sol.q[sh.site(j, t)];
            if (pv != 0.0 || qv != 0.0)
                out << j << ',' << t << ',' << fmt17(pv) << ',' << fmt17(qv) << '\n';
        }
    return out.str();
}

/// Reads back p and q into a solution whose shape is already set.
inline void solution_from_csv(const std::string& text, PrimalSolution& sol) {
    const LatticeShape& sh = sol.shape;
    sol.p.assign(sh.num_cells(), 0.0);
    sol.q.assign(sh.num_cells(), 0.0);
    sol.p[sh.site(sh.grid.j_star, 0)] = 1.0;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("j,t,p,q", 0) != 0)
        throw std::runtime_error("solution csv: bad header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int j, t;
        double pv, qv;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &j, &t, &pv, &qv) != 4)
            throw std::runtime_error("solution csv: bad row: " + line);
        if (!sh.grid.contains(j) || t < 1 || t > sh.t_hor + 1)
            throw std::runtime_error("solution csv: site out of range: " + line);
        sol.p[sh.site(j, t)] = pv;
        sol.q[sh.site(j, t)] = qv;
    }
    double stopped = 0.0;
    for (double v : sol.q) stopped += v;
    sol.stopped_mass = stopped;
}

inline json dual_to_json(const DualSolution& dual) {
    const LatticeShape& sh = dual.shape;
    json nu = json::array();
    for (int j = sh.grid.j_lo; j <= sh.grid.j_hi; ++j)
        if (dual.nuv(j) != 0.0) nu.push_back({j, dual.nuv(j)});
    json eta = json::array();
    for (int t = 1; t <= sh.t_hor; ++t)
        for (int j = sh.lo_t[t]; j <= sh.hi_t[t]; j += 2)
            if (dual.etav(j, t) != 0.0) eta.push_back({j, t, dual.etav(j, t)});
    return json{{"nu", nu},
                {"eta", eta},
                {"objective", dual.objective},
                {"objective_tilted", dual.objective_tilted}};
}

inline void dual_from_json(const json& j, DualSolution& dual) {
    const LatticeShape& sh = dual.shape;
    dual.nu.assign(sh.grid.num_sites(), 0.0);
    dual.eta.assign(sh.num_cells(), 0.0);
    for (const auto& e : j.at("nu")) dual.nu[sh.grid.index(e[0].get<int>())] = e[1].get<double>();
    for (const auto& e : j.at("eta"))
        dual.eta[sh.site(e[0].get<int>(), e[1].get<int>())] = e[2].get<double>();
    dual.objective = j.at("objective").get<double>();
    dual.objective_tilted = j.at("objective_tilted").get<double>();
}

// ----------------------------------------------------------------- barriers

inline std::string barrier_to_csv(const CaveBarrier& b) {
    std::ostringstream out;
    out << "# n=" << b.grid.n << " j_lo=" << b.grid.j_lo << " j_hi=" << b.grid.j_hi
        << " j_star=" << b.grid.j_star << " t_hor=" << b.t_hor
        << " t0_index=" << b.t0_index << '\n';
    out << "j,x,l_over_N,r_over_N\n";
    for (int j = b.grid.j_lo; j <= b.grid.j_hi; ++j)
        out << j << ',' << fmt17(b.grid.x(j)) << ','
            << fmt17(static_cast<double>(b.l(j)) / b.grid.n) << ','
            << fmt17(static_cast<double>(b.r(j)) / b.grid.n) << '\n';
    return out.str();
}

inline CaveBarrier barrier_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
        throw std::runtime_error("barrier csv: missing metadata line");
    CaveBarrier b;
    if (std::sscanf(line.c_str(), "# n=%d j_lo=%d j_hi=%d j_star=%d t_hor=%d t0_index=%d",
                    &b.grid.n, &b.grid.j_lo, &b.grid.j_hi, &b.grid.j_star, &b.t_hor,
                    &b.t0_index) != 6)
        throw std::runtime_error("barrier csv: bad metadata line");
    if (!std::getline(in, line) || line.rfind("j,x,", 0) != 0)
        throw std::runtime_error("barrier csv: bad header");
    b.l_bar.assign(b.grid.num_sites(), -1);
    b.r_bar.assign(b.grid.num_sites(), b.t_hor + 1);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        int j;
        double x, l_n, r_n;
        if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf", &j, &x, &l_n, &r_n) != 4)
            throw std::runtime_error("barrier csv: bad row: " + line);
        if (!b.grid.contains(j)) throw std::runtime_error("barrier csv: level out of range");
        b.l_bar[b.grid.index(j)] = static_cast<int>(std::llround(l_n * b.grid.n));
        b.r_bar[b.grid.index(j)] = static_cast<int>(std::llround(r_n * b.grid.n));
    }
    return b;
}

// ---------------------------------------------------------------- survival

inline std::string pi_to_csv(const SurvivalTable& tab) {
    std::ostringstream out;
    out << "j,t,pi\n";
    for (int t = 0; t <= tab.t_max; ++t)
        for (int j = tab.grid.j_lo; j <= tab.grid.j_hi; ++j) {
            const double v = tab.pi(j, t);
            if (v != 0.0) out << j << ',' << t << ',' << fmt17(v) << '\n';
        }
    return out.str();
}

inline json yaglom_to_json(const YaglomReport& rep, const SurvivalTable& tab) {
    return json{{"rho", tab.rho},
                {"max_spread", rep.max_spread},
                {"slice_ratio_error", rep.slice_ratio_error},
                {"times_checked", rep.times_checked},
                {"extinct", rep.extinct}};
}

// -------------------------------------------------------------- simulation

inline std::string sim_counts_csv(const SimResult& sim) {
    std::ostringstream out;
    out << "j,x,count\n";
    for (int j = sim.grid.j_lo; j <= sim.grid.j_hi; ++j)
        if (sim.counts[sim.grid.index(j)] != 0)
            out << j << ',' << fmt17(sim.grid.x(j)) << ','
                << sim.counts[sim.grid.index(j)] << '\n';
    return out.str();
}

inline json sim_to_json(const SimResult& sim) {
    return json{{"n_paths", sim.n_paths},
                {"n_censored", sim.n_censored},
                {"seed", sim.seed},
                {"mean_tau", sim.mean_tau},
                {"se_tau", sim.se_tau},
                {"mean_tau_sq", sim.mean_tau_sq},
                {"se_tau_sq", sim.se_tau_sq},
                {"has_objective", sim.has_objective},
                {"obj_mean", sim.obj_mean},
                {"obj_se", sim.obj_se}};
}

inline std::string study_to_csv(const StudyResult& study) {
    std::ostringstream out;
    out << "N,T,P,gap,mc_distance,mc_margin,barrier_distance\n";
    for (const auto& row : study.rows)
        out << row.n << ',' << row.t_hor << ',' << fmt17(row.value) << ','
            << fmt17(row.gap) << ',' << fmt17(row.mc_distance) << ','
            << fmt17(row.mc_margin) << ',' << fmt17(row.barrier_dist) << '\n';
    return out.str();
}

// -------------------------------------------------------------- run header

struct RunHeader {
    int n = 0;
    double eps_tail = 0.0;
    double tilt_margin = 0.0;
    Grid grid;
    int t_hor = 0;
    int a_lo = 0, a_hi = -1;
    std::string payoff_kind;
    double t0 = 0.0;
    std::string payoff_table_file;
    std::vector<std::pair<double, double>> atoms;
    double objective = 0.0, tilted_objective = 0.0;
    double dual_objective = 0.0, dual_objective_tilted = 0.0;
    double gap = 0.0;
    double tilt_c = 0.0;
    int t0_index = 0;
    std::uint64_t seed = 0;
};

inline json run_header_to_json(const RunHeader& h) {
    return json{{"n", h.n},
                {"eps_tail", h.eps_tail},
                {"tilt_margin", h.tilt_margin},
                {"grid", {{"j_lo", h.grid.j_lo}, {"j_hi", h.grid.j_hi}, {"j_star", h.grid.j_star}}},
                {"t_hor", h.t_hor},
                {"a_lo", h.a_lo},
                {"a_hi", h.a_hi},
                {"payoff", {{"kind", h.payoff_kind}, {"t0", h.t0}, {"table_file", h.payoff_table_file}}},
                {"measure", measure_to_json(h.atoms)},
                {"objective", h.objective},
                {"tilted_objective", h.tilted_objective},
                {"dual_objective", h.dual_objective},
                {"dual_objective_tilted", h.dual_objective_tilted},
                {"gap", h.gap},
                {"tilt_c", h.tilt_c},
                {"t0_index", h.t0_index},
                {"seed", h.seed}};
}

inline RunHeader run_header_from_json(const json& j) {
    RunHeader h;
    h.n = j.at("n").get<int>();
    h.eps_tail = j.at("eps_tail").get<double>();
    h.tilt_margin = j.at("tilt_margin").get<double>();
    h.grid.n = h.n;
    h.grid.j_lo = j.at("grid").at("j_lo").get<int>();
    h.grid.j_hi = j.at("grid").at("j_hi").get<int>();
    h.grid.j_star = j.at("grid").at("j_star").get<int>();
    h.t_hor = j.at("t_hor").get<int>();
    h.a_lo = j.at("a_lo").get<int>();
    h.a_hi = j.at("a_hi").get<int>();
    h.payoff_kind = j.at("payoff").at("kind").get<std::string>();
    h.t0 = j.at("payoff").at("t0").get<double>();
    h.payoff_table_file = j.at("payoff").at("table_file").get<std::string>();
    h.atoms = measure_from_json(j.at("measure"));
    h.objective = j.at("objective").get<double>();
    h.tilted_objective = j.at("tilted_objective").get<double>();
    h.dual_objective = j.at("dual_objective").get<double>();
    h.dual_objective_tilted = j.at("dual_objective_tilted").get<double>();
    h.gap = j.at("gap").get<double>();
    h.tilt_c = j.at("tilt_c").get<double>();
    h.t0_index = j.at("t0_index").get<int>();
    h.seed = j.at("seed").get<std::uint64_t>();
    return h;
}

}  // namespace sep::io
