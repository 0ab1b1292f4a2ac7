#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vpatch/analysis.hpp"
#include "vpatch/classes.hpp"
#include "vpatch/config.hpp"
#include "vpatch/elliptic.hpp"
#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"
#include "vpatch/io.hpp"
#include "vpatch/multipatch.hpp"
#include "vpatch/solver.hpp"

namespace vpatch {

enum ExitCode : int { exit_ok = 0, exit_config = 1, exit_numerical = 2, exit_validation = 3 };

namespace cli {

struct Flags {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<int> resolution;
    std::vector<double> lambdas;
    int cells = 1024;
};

inline RunConfig load_with_overrides(const Flags& f) {
    if (f.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_config(f.config);
    if (f.resolution) {
        if (*f.resolution < 4) throw ConfigError("--resolution must be at least 4");
        cfg.domain.resolution = *f.resolution;
    }
    if (f.seed) {
        cfg.solver.seed = *f.seed;
        cfg.sweep.test_seed = *f.seed;
    }
    if (!f.out.empty()) cfg.output.directory = f.out;
    return cfg;
}

inline std::uint64_t run_seed(const RunConfig& cfg) { return cfg.solver.seed; }

inline void write_solution(const std::filesystem::path& dir, const RunConfig& cfg, const std::vector<Patch>& patches,
                           const ScalarField& omega, const ScalarField& psi, const ScalarField& potential,
                           const HarmonicBackground& q, const std::vector<double>& gaps,
                           const std::vector<double>& energies, const std::string& summary) {
    const std::uint64_t seed = run_seed(cfg);
    const Grid& g = omega.grid();
    if (cfg.output.csv) write_atomic(dir / "trace.csv", trace_csv(gaps, energies, seed));
    if (cfg.output.fields) {
        std::vector<NamedField> fields = {{"omega", &omega}, {"psi", &psi}, {"potential", &potential}, {"q", &q.field()}};
        const VectorField v = velocity_field(psi, q);
        if (cfg.output.velocity) {
            fields.emplace_back("velocity_x", &v.x);
            fields.emplace_back("velocity_y", &v.y);
        }
        write_atomic(dir / "fields.txt", grid_dump(g, fields, seed));
    }
    if (cfg.output.masks) {
        std::vector<int> all;
        for (std::size_t p = 0; p < patches.size(); ++p) {
            all.insert(all.end(), patches[p].cells.begin(), patches[p].cells.end());
            const std::string suffix = patches.size() == 1 ? "" : "_" + std::to_string(p);
            write_atomic(dir / ("patch" + suffix + ".txt"), patch_list(patches[p]));
        }
        write_atomic(dir / "patch.pgm", pgm_mask(g, all));
    }
    write_atomic(dir / "summary.txt", "# seed " + std::to_string(seed) + "\n" + summary);
}

inline std::string bracket_line(const std::string& key, const MultiplierBracket& b) {
    return key + " = " + format_real(b.lo()) + " " + format_real(b.hi()) + "\n";
}

inline int cmd_solve(const Flags& f) {
    RunConfig cfg = load_with_overrides(f);
    if (cfg.patches.size() != 1) throw ConfigError("solve takes exactly one [[patch]] block; use multipatch");
    if (f.lambdas.size() > 1) throw ConfigError("solve takes a single --lambda value");
    if (f.lambdas.size() == 1) {
        cfg.patches[0].lambda = f.lambdas[0];
        cfg.patches[0].has_lambda = true;
    }
    const Problem prob = build_problem(cfg);
    const PoissonSolver solver(prob.grid);
    const HarmonicBackground q = make_background(cfg.background, prob.grid);
    const SolveResult r = solve(prob.components[0], q, solver, cfg.objective, cfg.solver);

    std::ostringstream s;
    s << "converged = " << (r.converged ? "true" : "false") << '\n'
      << "stop_reason = " << to_string(r.stop_reason) << '\n'
      << "iterations = " << r.iterations << '\n'
      << "cells = " << r.patch.cells.size() << '\n'
      << "lambda = " << format_real(prob.components[0].effective_lambda()) << '\n'
      << "energy = " << format_real(r.energy.total) << '\n'
      << "energy_quadratic = " << format_real(r.energy.quadratic) << '\n'
      << "energy_linear = " << format_real(r.energy.linear) << '\n'
      << "energy_kinetic_check = " << format_real(r.energy.kinetic_check) << '\n'
      << "mixed_energy = " << format_real(r.mixed_energy) << '\n'
      << "final_gap = " << format_real(r.final_gap) << '\n'
      << bracket_line("multiplier", r.multiplier_bracket);
    const Point c = r.patch.centroid();
    s << "centroid = " << format_real(c.x) << ' ' << format_real(c.y) << '\n';
    write_solution(cfg.output.directory, cfg, {r.patch}, r.patch.omega(), r.psi, r.potential, q, r.gap_trace,
                   r.energy_trace, s.str());
    std::cout << s.str();
    if (!r.converged) {
        std::cerr << "error: no convergence within max_iters = " << cfg.solver.max_iters << " (traces written to "
                  << cfg.output.directory << ")\n";
        return exit_numerical;
    }
    return exit_ok;
}

inline int cmd_multipatch(const Flags& f) {
    RunConfig cfg = load_with_overrides(f);
    const MultiMode mode = cfg.objective == Objective::minimize ? MultiMode::pinned_min_energy
                                                                : MultiMode::pinned_max_energy;
    std::vector<double> lambdas = f.lambdas;
    const bool sweep = lambdas.size() > 1;
    if (lambdas.empty()) lambdas.push_back(-1.0);

    // validate every lambda before any solve
    std::vector<Problem> problems;
    for (double lambda : lambdas) {
        RunConfig c = cfg;
        if (lambda > 0.0)
            for (auto& p : c.patches) {
                p.lambda = lambda;
                p.has_lambda = true;
            }
        Problem prob = build_problem(c);
        MultiPatchSpec{prob.components}.validate(make_background(cfg.background, prob.grid), mode,
                                                 default_anchor_tolerance(*prob.grid));
        problems.push_back(std::move(prob));
    }

    const GridPtr grid = problems.front().grid;
    const PoissonSolver solver(grid);
    const HarmonicBackground q = make_background(cfg.background, grid);
    std::vector<MultiplierBoundsReport> reports;
    bool all_converged = true;
    for (std::size_t k = 0; k < problems.size(); ++k) {
        const MultiSolveResult r = solve_multi(MultiPatchSpec{problems[k].components}, q, solver, mode, cfg.solver);
        all_converged = all_converged && r.converged;
        const MultiplierBoundsReport report = multiplier_bounds_check(r, q);
        reports.push_back(report);

        std::ostringstream s;
        s << "converged = " << (r.converged ? "true" : "false") << '\n'
          << "stop_reason = " << to_string(r.stop_reason) << '\n'
          << "iterations = " << r.iterations << '\n'
          << "energy = " << format_real(r.energy.total) << '\n'
          << "mixed_energy = " << format_real(r.mixed_energy) << '\n'
          << "confined_every_iterate = " << (r.confined_every_iterate ? "true" : "false") << '\n';
        for (std::size_t p = 0; p < r.patches.size(); ++p) {
            const Point c = r.patches[p].centroid();
            s << bracket_line("multiplier_" + std::to_string(p), r.multipliers[p]) << "centroid_" << p << " = "
              << format_real(c.x) << ' ' << format_real(c.y) << '\n'
              << "multiplier_deviation_" << p << " = " << format_real(report.rows[p].deviation) << '\n';
        }
        std::filesystem::path dir = cfg.output.directory;
        if (sweep) dir /= "lambda_" + std::to_string(k);
        write_solution(dir, cfg, r.patches, r.omega, r.psi, r.potential, q, r.gap_trace, r.energy_trace, s.str());
        if (sweep) std::cout << "[lambda " << format_real(lambdas[k]) << "]\n";
        std::cout << s.str();
    }

    const MultiplierBoundsReport merged = check_multiplier_sweep(reports);
    if (cfg.output.csv) {
        std::ostringstream csv;
        csv << "# seed " << run_seed(cfg) << '\n' << "component,lambda,multiplier,anchor_value,deviation,ratio\n";
        for (const auto& row : merged.rows)
            csv << row.component << ',' << format_real(row.lambda) << ',' << format_real(row.multiplier) << ','
                << format_real(row.anchor_value) << ',' << format_real(row.deviation) << ',' << format_real(row.ratio)
                << '\n';
        write_atomic(std::filesystem::path(cfg.output.directory) / "multiplier_bounds.csv", csv.str());
    }
    if (merged.ratio_grows) std::cout << "note: a multiplier ratio grows at every step of the sweep\n";
    if (!all_converged) {
        std::cerr << "error: a multi-patch solve did not converge\n";
        return exit_numerical;
    }
    return exit_ok;
}

inline int cmd_sweep(const Flags& f) {
    RunConfig cfg = load_with_overrides(f);
    std::vector<double> lambdas = f.lambdas.empty() ? cfg.sweep.lambdas : f.lambdas;
    if (lambdas.empty()) throw ConfigError("sweep needs lambdas ([sweep] lambdas or --lambda)");
    if (cfg.patches.size() != 1) throw ConfigError("sweep takes exactly one [[patch]] block");
    const PatchBlock& pb = cfg.patches[0];
    const GridPtr grid = make_grid(cfg.domain);
    const HarmonicBackground q = make_background(cfg.background, grid);

    // feasibility of every lambda before the solver is built
    for (double lambda : lambdas) {
        PatchBlock p = pb;
        p.lambda = lambda;
        try {
            make_spec(p, grid).validate();
        } catch (const InfeasibleError& e) {
            throw ConfigError(pb.where() + ": sweep lambda " + std::to_string(lambda) + " is infeasible: " + e.what());
        }
    }
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] < lambdas[i - 1])) throw ConfigError("sweep lambdas must be strictly decreasing");

    const PoissonSolver solver(grid);
    SweepConfig sc;
    sc.grid = grid;
    sc.solver = &solver;
    sc.background = &q;
    sc.kappa = pb.kappa;
    sc.sign = pb.sign;
    if (pb.center) sc.region = Ball{*pb.center, *pb.delta0};
    sc.objective = cfg.objective;
    sc.options = cfg.solver;
    sc.test_seed = cfg.sweep.test_seed;
    sc.parallel = cfg.sweep.parallel;
    const SweepResult result = run_sweep(sc, lambdas);

    const std::string csv = sweep_csv(result, cfg.sweep.test_seed);
    if (cfg.output.csv) write_atomic(std::filesystem::path(cfg.output.directory) / "sweep.csv", csv);
    std::cout << csv;
    for (const auto& v : result.violations) std::cerr << "violation: " << v << '\n';
    for (const auto& row : result.rows)
        if (!row.converged) {
            std::cerr << "error: sweep solve at lambda " << row.lambda << " did not converge\n";
            return exit_numerical;
        }
    return result.violations.empty() ? exit_ok : exit_validation;
}

inline int cmd_oracle1d(const Flags& f) {
    const std::vector<double> lambdas = f.lambdas.empty() ? std::vector<double>{0.25, 0.5, 0.75} : f.lambdas;
    std::ostringstream csv;
    csv << "problem,lambda,x,u,exact\n";
    bool ok = true;
    for (Problem1D p : {Problem1D::P1, Problem1D::P2}) {
        const char* name = p == Problem1D::P1 ? "P1" : "P2";
        for (double lambda : lambdas) {
            const Solve1DResult r = solve_1d(p, lambda, f.cells);
            ok = ok && r.converged;
            std::cout << name << " lambda=" << lambda << " cells=" << f.cells << " max_error=" << format_real(r.max_error)
                      << (r.converged ? "" : " (not converged)") << '\n';
            for (std::size_t i = 0; i < r.x.size(); ++i)
                csv << name << ',' << format_real(lambda) << ',' << format_real(r.x[i]) << ',' << format_real(r.u[i])
                    << ',' << format_real(r.exact[i]) << '\n';
        }
    }
    if (!f.out.empty()) write_atomic(std::filesystem::path(f.out) / "oracle1d.csv", csv.str());
    return ok ? exit_ok : exit_numerical;
}

/// Invariant battery on small problems; one PASS/FAIL line per check.
inline int cmd_validate(const Flags& f) {
    const std::uint64_t seed = f.seed.value_or(0);
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        if (!ok) ++failures;
    };
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);

    const GridPtr disk = build_grid(Disk{{0.0, 0.0}, 1.0}, f.resolution.value_or(32));
    const PoissonSolver solver(disk);
    auto random_field = [&] {
        return ScalarField::from_function(disk, [&](Point) { return unit(rng); });
    };

    {
        const GridPtr g = build_grid(Disk{{0.0, 0.0}, 1.0}, 64);
        const double area = g->domain_measure();
        report("disk_area", std::abs(area - std::numbers::pi) <= 0.2, "area " + format_real(area));
        report("simply_connected", simply_connected(*g), "one interior and one exterior component");
    }
    {
        double worst_sym = 0.0, min_form = 1.0;
        for (int k = 0; k < 20; ++k) {
            const ScalarField a = random_field(), b = random_field();
            const double ab = inner(a, solver.solve(b)), ba = inner(b, solver.solve(a));
            worst_sym = std::max(worst_sym, std::abs(ab - ba) / std::max({std::abs(ab), std::abs(ba), 1e-300}));
            const double form = inner(a, solver.solve(a));
            min_form = std::min(min_form, form / std::max(inner(a, a), 1e-300));
        }
        report("green_symmetry", worst_sym <= 1e-8, "worst relative asymmetry " + format_real(worst_sym));
        report("green_positivity", min_form > 0.0, "min <f,Gf>/<f,f> " + format_real(min_form));
    }
    {
        ScalarField omega = random_field();
        for (double& v : omega.values()) v = std::abs(v);
        const ScalarField psi = solver.solve(omega);
        double lo = 0.0;
        for (int c : disk->interior_cells()) lo = std::min(lo, psi[c]);
        report("maximum_principle", lo >= -1e-12 * psi.max_abs(), "min G(omega>=0) " + format_real(lo));
        const HarmonicBackground q = HarmonicBackground::linear(disk, 1.0, 0.0);
        const EnergyReport e = energy(omega, q, solver);
        const double diff = std::abs(e.quadratic - e.kinetic_check);
        report("energy_by_parts", diff <= 1e-4 * std::max(1.0, std::abs(e.quadratic)),
               "|quadratic - kinetic| " + format_real(diff));
    }
    for (Problem1D p : {Problem1D::P1, Problem1D::P2}) {
        const Solve1DResult r = solve_1d(p, 0.5, 1024);
        report(p == Problem1D::P1 ? "oracle1d_P1" : "oracle1d_P2", r.converged && r.max_error <= 5e-3,
               "max error " + format_real(r.max_error) + " at lambda 0.5, 1024 cells");
    }
    {
        // every 3-cell patch on a 4x4 grid
        const GridPtr g = build_grid(Rectangle{1.0, 1.0, {0.0, 0.0}}, 4);
        const PoissonSolver s(g);
        const HarmonicBackground q = HarmonicBackground::linear(g, 1.0, 0.0);
        const ClassSpec spec{1.0, 3.0 * g->cell_measure(), +1, std::nullopt, g};
        double best = std::numeric_limits<double>::infinity();
        int count = 0;
        for (int a = 0; a < 16; ++a)
            for (int b = a + 1; b < 16; ++b)
                for (int c = b + 1; c < 16; ++c) {
                    const Patch patch{spec, {a, b, c}};
                    best = std::min(best, energy(patch.omega(), q, s).total);
                    ++count;
                }
        const SolveResult r = solve(spec, q, s);
        const double diff = r.energy.total - best;
        report("brute_force_4x4", count == 560 && std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(best)),
               "solver - exhaustive minimum " + format_real(diff) + " over " + std::to_string(count) + " patches");
    }
    {
        const GridPtr g = build_grid(Rectangle{1.0, 0.25, {0.0, 0.0}}, 4);
        const ScalarField pot(g, {3.0, 1.0, 2.0, 5.0});
        const ClassSpec spec{1.0, 2.0 * g->cell_measure(), +1, std::nullopt, g};
        const auto [patch, bracket] = bathtub_select(pot, spec);
        report("bathtub_bracket", patch.cells == std::vector<int>{1, 2} && bracket.lo() == 2.0 && bracket.hi() == 3.0,
               "bracket [" + format_real(bracket.lo()) + ", " + format_real(bracket.hi()) + "]");
    }
    std::cout << (failures == 0 ? "all checks passed\n" : std::to_string(failures) + " check(s) failed\n");
    return failures == 0 ? exit_ok : exit_validation;
}

}  // namespace cli

/// Entry point of the command-line tool; returns the process exit code.
inline int run_cli(int argc, char** argv) {
    CLI::App app{"Steady vortex patches by constrained energy optimization"};
    app.require_subcommand(1);
    cli::Flags flags;

    auto add_common = [&](CLI::App* sub, bool with_config) {
        if (with_config) sub->add_option("--config", flags.config, "configuration file")->required();
        sub->add_option("--out", flags.out, "output directory (overrides [output] directory)");
        sub->add_option("--seed", flags.seed, "random seed for initialization and test functions");
        sub->add_option("--resolution", flags.resolution, "grid resolution override");
        sub->add_option("--lambda", flags.lambdas, "lambda value or comma-separated list")->delimiter(',');
    };
    CLI::App* solve_cmd = app.add_subcommand("solve", "solve one single-patch problem");
    add_common(solve_cmd, true);
    CLI::App* multi_cmd = app.add_subcommand("multipatch", "solve a pinned multi-patch problem");
    add_common(multi_cmd, true);
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "lambda sweep with bounds and exponent fits");
    add_common(sweep_cmd, true);
    CLI::App* oracle_cmd = app.add_subcommand("oracle1d", "compare the 1D problems with their closed forms");
    add_common(oracle_cmd, false);
    oracle_cmd->add_option("--cells", flags.cells, "number of cells on (0, 1)");
    CLI::App* validate_cmd = app.add_subcommand("validate", "run the invariant battery");
    add_common(validate_cmd, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_config;
    }

    try {
        if (solve_cmd->parsed()) return cli::cmd_solve(flags);
        if (multi_cmd->parsed()) return cli::cmd_multipatch(flags);
        if (sweep_cmd->parsed()) return cli::cmd_sweep(flags);
        if (oracle_cmd->parsed()) return cli::cmd_oracle1d(flags);
        if (validate_cmd->parsed()) return cli::cmd_validate(flags);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const InfeasibleError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return exit_config;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return exit_numerical;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return exit_numerical;
    }
    return exit_config;
}

}  // namespace vpatch
