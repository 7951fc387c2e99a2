// Command-line front end: solve / verify / barrier / converge / simulate / pi.
//
// Exit codes: 0 success (all checks pass), 2 invalid input or failed
// verification, 3 solver iteration limit.

#include <cstdint>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sep/sep.hpp"

namespace fs = std::filesystem;
using sep::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 2;
constexpr int kExitIterLimit = 3;

struct CommonArgs {
    std::string config_file;
    std::string measure_file;
    std::string payoff = "root";
    double t0 = 0.5;
    double eps_tail = 1e-8;
    double margin = 0.01;
    std::uint64_t seed = 1;
    std::string out_dir = ".";
};

/// Values from --config <json> fill in anything the flags did not set;
/// flags win on conflict.
void merge_config(const CLI::App& cmd, CommonArgs& args) {
    if (args.config_file.empty()) return;
    const json cfg = json::parse(sep::io::read_text(args.config_file));
    auto take = [&](const char* flag, const char* key, auto& slot) {
        const CLI::Option* opt = cmd.get_option_no_throw(flag);
        const bool flag_given = opt != nullptr && opt->count() > 0;
        if (!flag_given && cfg.contains(key)) slot = cfg.at(key).get<std::decay_t<decltype(slot)>>();
    };
    take("--measure", "measure", args.measure_file);
    take("--payoff", "payoff", args.payoff);
    take("--t0", "t0", args.t0);
    take("--eps-tail", "eps_tail", args.eps_tail);
    take("--margin", "margin", args.margin);
    take("--seed", "seed", args.seed);
    take("--out", "out", args.out_dir);
}

sep::PayoffSpec make_payoff(const CommonArgs& args) {
    return sep::io::payoff_from_selection(args.payoff, args.t0);
}

sep::io::RunHeader make_header(const sep::EmbeddingRun& run, const CommonArgs& args,
                               const std::vector<std::pair<double, double>>& atoms) {
    sep::io::RunHeader h;
    h.n = run.grid.n;
    h.eps_tail = args.eps_tail;
    h.tilt_margin = args.margin;
    h.grid = run.grid;
    h.t_hor = run.t_hor;
    h.a_lo = run.prob.shape.a_lo;
    h.a_hi = run.prob.shape.a_hi;
    h.payoff_kind = args.payoff.rfind("table:", 0) == 0 ? "table" : args.payoff;
    h.t0 = args.t0;
    h.payoff_table_file = args.payoff.rfind("table:", 0) == 0 ? args.payoff.substr(6) : "";
    h.atoms = atoms;
    h.objective = run.sol.primal.objective;
    h.tilted_objective = run.sol.primal.tilted_objective;
    h.dual_objective = run.sol.dual.objective;
    h.dual_objective_tilted = run.sol.dual.objective_tilted;
    h.gap = run.sol.info.gap_rel;
    h.tilt_c = run.prob.table.tilt_c;
    h.t0_index = run.prob.table.t0_index();
    h.seed = args.seed;
    return h;
}

json checks_to_json(const sep::PrimalCheck& pc, const sep::DualFeasibility& df,
                    const sep::SlacknessReport& sr, std::size_t shape_violations,
                    double gap, bool pass) {
    return json{
        {"primal",
         {{"max_sign_violation", pc.max_sign_violation},
          {"max_dynamics_residual", pc.max_dynamics_residual},
          {"max_potential_violation", pc.max_potential_violation},
          {"max_conservation_residual", pc.max_conservation_residual},
          {"max_martingale_residual", pc.max_martingale_residual},
          {"mass_residual", pc.mass_residual}}},
        {"dual_feasibility",
         {{"max_sign_violation", df.max_sign_violation},
          {"max_row_violation", df.max_row_violation},
          {"rows_checked", df.rows_checked}}},
        {"slackness",
         {{"fcs1_residual", sr.fcs1_residual},
          {"fcs2_residual", sr.fcs2_residual},
          {"fcs3_residual", sr.fcs3_residual},
          {"fcs1_triggers", sr.fcs1_triggers},
          {"fcs2_triggers", sr.fcs2_triggers},
          {"fcs3_triggers", sr.fcs3_triggers}}},
        {"shape_violations", shape_violations},
        {"gap", gap},
        {"pass", pass}};
}

int cmd_solve(const CommonArgs& args, int n) {
    const auto atoms = sep::io::read_measure_file(args.measure_file);
    const sep::PayoffSpec payoff = make_payoff(args);
    sep::RunOptions opt;
    opt.eps_tail = args.eps_tail;
    opt.tilt_margin = args.margin;
    sep::EmbeddingRun run = sep::run_embedding(atoms, payoff, n, opt);

    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    sep::io::write_text((out / "run.json").string(),
                        sep::io::run_header_to_json(make_header(run, args, atoms)).dump(2));
    sep::io::write_text((out / "solution.csv").string(),
                        sep::io::solution_to_csv(run.sol.primal));
    sep::io::write_text((out / "dual.json").string(),
                        sep::io::dual_to_json(run.sol.dual).dump(2));
    if (!run.sol.primal.stopped_at_start)
        sep::io::write_text((out / "barrier.csv").string(),
                            sep::io::barrier_to_csv(run.bar.barrier));

    if (run.sol.primal.stopped_at_start) {
        sep::io::write_text((out / "report.json").string(),
                            json{{"pass", true}, {"trivial", true}}.dump(2));
        std::cout << "objective " << sep::io::fmt17(run.sol.primal.objective)
                  << " (stopped at t = 0)\n";
        return kExitOk;
    }

    const sep::PrimalCheck pc = sep::check_primal(run.prob, run.sol.primal);
    const sep::DualFeasibility df = sep::check_dual_feasible(run.sol.dual, run.prob.table);
    const sep::SlacknessReport sr = sep::check_slackness(run.prob, run.sol.primal, run.sol.dual);
    const auto violations =
        sep::verify_shape(run.sol.primal, run.prob.table.t0_index());
    const bool pass = run.sol.info.optimal && run.sol.info.gap_rel <= 1e-7 &&
                      pc.pass(1e-7) && df.pass(1e-8) && sr.pass(1e-7);
    sep::io::write_text(
        (out / "report.json").string(),
        checks_to_json(pc, df, sr, violations.size(), run.sol.info.gap_rel, pass).dump(2));

    std::cout << "objective " << sep::io::fmt17(run.sol.primal.objective) << " gap "
              << sep::io::fmt17(run.sol.info.gap_rel) << " rounds " << run.sol.info.rounds
              << '\n';
    if (!run.sol.info.optimal) {
        std::cerr << "solver: " << run.sol.info.message << '\n';
        return kExitIterLimit;
    }
    return pass ? kExitOk : kExitInvalid;
}

/// Rebuilds the problem from the stored header and re-runs every check on
/// the stored artifacts.
int cmd_verify(const std::string& dir) {
    const fs::path in(dir);
    const sep::io::RunHeader h =
        sep::io::run_header_from_json(json::parse(sep::io::read_text((in / "run.json").string())));
    const sep::Grid grid = h.grid;
    const sep::AtomicMeasure mu = sep::project_measure(h.atoms, grid);
    sep::PayoffSpec payoff;
    if (h.payoff_kind == "table")
        payoff = sep::io::payoff_from_selection("table:" + h.payoff_table_file, h.t0);
    else
        payoff = sep::io::payoff_from_selection(h.payoff_kind, h.t0);
    sep::PayoffTable table = sep::discretise(payoff, grid, h.t_hor + 1);
    table.tilt_c = h.tilt_c;  // stored tilt wins so the dual rows match exactly
    const sep::LpProblem prob = sep::assemble(grid, mu, table, h.t_hor);

    if (prob.trivial) {
        std::cout << "trivial run, nothing to verify\n";
        return kExitOk;
    }
    if (prob.shape.a_lo != h.a_lo || prob.shape.a_hi != h.a_hi) {
        std::cerr << "verify: stored alive interval does not match the measure\n";
        return kExitInvalid;
    }
    sep::PrimalSolution primal;
    primal.shape = prob.shape;
    sep::io::solution_from_csv(sep::io::read_text((in / "solution.csv").string()), primal);
    sep::evaluate_objectives(primal, prob.table);
    sep::DualSolution dual;
    dual.shape = prob.shape;
    sep::io::dual_from_json(json::parse(sep::io::read_text((in / "dual.json").string())), dual);

    const sep::PrimalCheck pc = sep::check_primal(prob, primal);
    const sep::DualFeasibility df = sep::check_dual_feasible(dual, prob.table);
    const sep::SlacknessReport sr = sep::check_slackness(prob, primal, dual);
    const double gap = std::abs(primal.tilted_objective - dual.objective_tilted) /
                       (1.0 + std::abs(primal.tilted_objective));
    const auto violations = sep::verify_shape(primal, h.t0_index);

    bool pass = true;
    auto fail = [&](const std::string& what, double value) {
        std::cerr << "verify: " << what << " = " << sep::io::fmt17(value) << '\n';
        pass = false;
    };
    if (!pc.pass(1e-7)) fail("primal feasibility violation", pc.worst());
    if (!df.pass(1e-8)) fail("dual feasibility violation", df.worst());
    if (!sr.pass(1e-7)) fail("slackness residual", sr.worst());
    if (gap > 1e-7) fail("duality gap", gap);
    if (std::abs(primal.objective - h.objective) > 1e-9 * (1.0 + std::abs(h.objective)))
        fail("stored objective mismatch", primal.objective - h.objective);
    if (!violations.empty()) fail("barrier shape violations", double(violations.size()));
    std::cout << (pass ? "verify: all checks passed\n" : "verify: checks FAILED\n");
    return pass ? kExitOk : kExitInvalid;
}

int cmd_barrier(const std::string& dir, std::optional<int> t0_override) {
    const fs::path in(dir);
    const sep::io::RunHeader h =
        sep::io::run_header_from_json(json::parse(sep::io::read_text((in / "run.json").string())));
    const sep::Grid grid = h.grid;
    const sep::AtomicMeasure mu = sep::project_measure(h.atoms, grid);
    sep::PayoffSpec payoff = h.payoff_kind == "table"
        ? sep::io::payoff_from_selection("table:" + h.payoff_table_file, h.t0)
        : sep::io::payoff_from_selection(h.payoff_kind, h.t0);
    sep::PayoffTable table = sep::discretise(payoff, grid, h.t_hor + 1);
    table.tilt_c = h.tilt_c;
    const sep::LpProblem prob = sep::assemble(grid, mu, table, h.t_hor);
    sep::PrimalSolution primal;
    primal.shape = prob.shape;
    sep::io::solution_from_csv(sep::io::read_text((in / "solution.csv").string()), primal);
    const int t0_index = t0_override.value_or(h.t0_index);
    const sep::BarrierExtract bar = sep::extract(primal, t0_index);
    sep::io::write_text((in / "barrier.csv").string(), sep::io::barrier_to_csv(bar.barrier));
    std::cout << "barrier written, " << bar.mixed.size() << " mixed sites\n";
    return kExitOk;
}

int cmd_converge(const CommonArgs& args, const std::vector<int>& n_list,
                 std::int64_t n_paths) {
    const auto atoms = sep::io::read_measure_file(args.measure_file);
    const sep::PayoffSpec payoff = make_payoff(args);
    const sep::StudyResult study =
        sep::convergence_study(atoms, payoff, n_list, args.eps_tail, n_paths, args.seed);
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    sep::io::write_text((out / "study.csv").string(), sep::io::study_to_csv(study));
    for (std::size_t i = 0; i < study.barriers.size(); ++i)
        sep::io::write_text(
            (out / ("barrier_" + std::to_string(n_list[i]) + ".csv")).string(),
            sep::io::barrier_to_csv(study.barriers[i]));
    std::cout << sep::io::study_to_csv(study);
    return kExitOk;
}

int cmd_simulate(const CommonArgs& args, const std::string& barrier_file,
                 const std::string& solution_dir, std::int64_t n_paths) {
    const sep::CaveBarrier barrier =
        sep::io::barrier_from_csv(sep::io::read_text(barrier_file));
    sep::PrimalSolution primal;
    const sep::PrimalSolution* mix = nullptr;
    if (!solution_dir.empty()) {
        const fs::path in(solution_dir);
        const sep::io::RunHeader h = sep::io::run_header_from_json(
            json::parse(sep::io::read_text((in / "run.json").string())));
        primal.shape = sep::make_shape(h.grid, h.t_hor, h.a_lo, h.a_hi);
        sep::io::solution_from_csv(sep::io::read_text((in / "solution.csv").string()), primal);
        mix = &primal;
    }
    const sep::SimResult sim =
        sep::simulate_barrier(barrier, barrier.grid, n_paths, args.seed, mix);
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    sep::io::write_text((out / "counts.csv").string(), sep::io::sim_counts_csv(sim));
    sep::io::write_text((out / "sim.json").string(), sep::io::sim_to_json(sim).dump(2));
    std::cout << "simulated " << sim.n_paths << " paths, censored " << sim.n_censored
              << ", mean stop time " << sep::io::fmt17(sim.mean_tau) << '\n';
    return kExitOk;
}

int cmd_pi(const CommonArgs& args, int levels, int t_max) {
    const sep::Grid grid = sep::grid_for_levels(levels);
    const sep::SurvivalTable tab = sep::compute_pi(grid, t_max);
    const sep::YaglomReport rep = sep::yaglom_diagnostic(tab);
    fs::create_directories(args.out_dir);
    const fs::path out(args.out_dir);
    sep::io::write_text((out / "pi.csv").string(), sep::io::pi_to_csv(tab));
    sep::io::write_text((out / "yaglom.json").string(),
                        sep::io::yaglom_to_json(rep, tab).dump(2));
    std::cout << "rho " << sep::io::fmt17(tab.rho) << " spread "
              << sep::io::fmt17(rep.max_spread) << " slice ratio error "
              << sep::io::fmt17(rep.slice_ratio_error) << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discretised optimal-embedding solver toolkit"};
    app.require_subcommand(1);

    CommonArgs args;
    int n = 16;
    std::string n_list_str = "16,64";
    std::int64_t n_paths = 100000;
    std::string dir;
    std::string barrier_file, solution_dir;
    int pi_levels = 8, pi_t = 500;
    int t0_index_override = -1;

    auto add_common = [&](CLI::App* cmd, bool with_measure) {
        cmd->add_option("--config", args.config_file, "JSON config replacing flags");
        if (with_measure) {
            cmd->add_option("--measure", args.measure_file, "measure JSON file");
            cmd->add_option("--payoff", args.payoff, "cave | root | rost | table:<file>");
            cmd->add_option("--t0", args.t0, "cave hinge time");
            cmd->add_option("--eps-tail", args.eps_tail, "horizon tail mass")
                ->check(CLI::Range(1e-300, 0.999999));
            cmd->add_option("--margin", args.margin, "tilt safety margin");
        }
        cmd->add_option("--seed", args.seed, "rng seed");
        cmd->add_option("--out", args.out_dir, "output directory");
    };

    CLI::App* solve = app.add_subcommand("solve", "assemble and solve one instance");
    add_common(solve, true);
    solve->add_option("--N", n, "refinement parameter")->check(CLI::PositiveNumber);

    CLI::App* verify = app.add_subcommand("verify", "re-check stored solve artifacts");
    verify->add_option("--dir", dir, "directory written by solve")->required();

    CLI::App* barrier = app.add_subcommand("barrier", "re-extract the barrier from a solve");
    barrier->add_option("--dir", dir, "directory written by solve")->required();
    barrier->add_option("--t0-index", t0_index_override, "override hinge step");

    CLI::App* converge = app.add_subcommand("converge", "grid refinement study");
    add_common(converge, true);
    converge->add_option("--N", n_list_str, "comma-separated refinement list");
    converge->add_option("--paths", n_paths, "Monte Carlo paths per refinement");

    CLI::App* simulate = app.add_subcommand("simulate", "walk until the barrier is hit");
    add_common(simulate, false);
    simulate->add_option("--barrier", barrier_file, "barrier CSV")->required();
    simulate->add_option("--solution", solution_dir, "solve directory for mixed sites");
    simulate->add_option("--paths", n_paths, "number of paths");

    CLI::App* pi = app.add_subcommand("pi", "survival probabilities of the free walk");
    add_common(pi, false);
    pi->add_option("--L", pi_levels, "number of spatial steps");
    pi->add_option("--T", pi_t, "horizon");

    CLI11_PARSE(app, argc, argv);

    try {
        if (solve->parsed()) {
            merge_config(*solve, args);
            return cmd_solve(args, n);
        }
        if (verify->parsed()) return cmd_verify(dir);
        if (barrier->parsed())
            return cmd_barrier(dir, t0_index_override >= 0
                                        ? std::optional<int>(t0_index_override)
                                        : std::nullopt);
        if (converge->parsed()) {
            merge_config(*converge, args);
            std::vector<int> n_list;
            std::stringstream ss(n_list_str);
            std::string tok;
            while (std::getline(ss, tok, ',')) n_list.push_back(std::stoi(tok));
            return cmd_converge(args, n_list, n_paths);
        }
        if (simulate->parsed()) {
            merge_config(*simulate, args);
            return cmd_simulate(args, barrier_file, solution_dir, n_paths);
        }
        if (pi->parsed()) {
            merge_config(*pi, args);
            return cmd_pi(args, pi_levels, pi_t);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return kExitInvalid;
}
