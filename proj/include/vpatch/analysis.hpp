#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <future>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vpatch/classes.hpp"
#include "vpatch/elliptic.hpp"
#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"
#include "vpatch/solver.hpp"

namespace vpatch {

// ---------------------------------------------------------------------------
// Test functions and the weak-form residual

enum class TestFunctionKind { bump, polynomial_cutoff };

struct TestFunction {
    TestFunctionKind kind = TestFunctionKind::bump;
    std::string label;
    ScalarField field;
};

inline double smooth_bump(double r, double radius) {
    const double s = 1.0 - (r / radius) * (r / radius);
    return s > 0.0 ? s * s * s : 0.0;
}

/// (1 - (r/rho)^2)^3 clipped at 0.
inline TestFunction make_bump(const GridPtr& grid, Point center, double radius) {
    TestFunction f{TestFunctionKind::bump, "bump", ScalarField::from_function(grid, [&](Point p) {
                       return smooth_bump(distance(p, center), radius);
                   })};
    return f;
}

/// Cutoff that vanishes at least three cells inside the domain boundary.
inline double domain_cutoff(const Grid& g, Point p) {
    const double margin = 3.0 * g.h();
    if (const auto* d = std::get_if<Disk>(&g.shape())) return smooth_bump(distance(p, d->center), d->radius - margin);
    if (const auto* r = std::get_if<Rectangle>(&g.shape())) {
        const double hx = 0.5 * r->width - margin, hy = 0.5 * r->height - margin;
        const Point c{r->origin.x + 0.5 * r->width, r->origin.y + 0.5 * r->height};
        return smooth_bump(std::abs(p.x - c.x), hx) * smooth_bump(std::abs(p.y - c.y), hy);
    }
    const auto& iv = std::get<Interval>(g.shape());
    return smooth_bump(std::abs(p.x - (iv.origin + 0.5 * iv.length)), 0.5 * iv.length - margin);
}

/// Coordinate polynomial of degree <= 3 times the domain cutoff.
/// `which`: 0 -> x, 1 -> y, 2 -> x^2 y.
inline TestFunction make_polynomial_cutoff(const GridPtr& grid, int which) {
    static const char* labels[] = {"x*cutoff", "y*cutoff", "x^2y*cutoff"};
    const Grid& g = *grid;
    TestFunction f{TestFunctionKind::polynomial_cutoff, labels[which % 3],
                   ScalarField::from_function(grid, [&](Point p) {
                       const double poly = which == 0 ? p.x : which == 1 ? p.y : p.x * p.x * p.y;
                       return poly * domain_cutoff(g, p);
                   })};
    return f;
}

/// Test function support must avoid every mask-adjacent cell.
inline bool support_is_interior(const ScalarField& xi) {
    const Grid& g = xi.grid();
    for (int idx : g.interior_cells())
        if (xi[idx] != 0.0 && g.mask_adjacent(idx)) return false;
    return true;
}

/// Seeded suite: `bumps` bumps plus the three polynomial-cutoff functions.
/// Bump centers are uniform over interior cells at least three cells from the
/// boundary; each bump takes the largest radius that keeps it two cells clear
/// of the boundary, so every bump reaches the boundary layer where patches sit.
inline std::vector<TestFunction> default_test_suite(const GridPtr& grid, std::uint64_t seed, int bumps = 10) {
    const Grid& g = *grid;
    std::vector<int> rim;
    for (int idx : g.interior_cells())
        if (g.mask_adjacent(idx)) rim.push_back(idx);
    std::vector<int> centers;
    std::vector<double> clearance;
    for (int idx : g.interior_cells()) {
        const Point c = g.center(idx);
        double d = std::numeric_limits<double>::infinity();
        for (int other : rim) d = std::min(d, distance(g.center(other), c));
        if (d >= 3.0 * g.h()) {
            centers.push_back(idx);
            clearance.push_back(d - 2.0 * g.h());
        }
    }
    if (centers.empty()) throw UsageError("domain too small for the test-function suite");

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, centers.size() - 1);
    std::vector<TestFunction> suite;
    for (int k = 0; k < bumps; ++k) {
        const std::size_t i = pick(rng);
        TestFunction f = make_bump(grid, g.center(centers[i]), clearance[i]);
        f.label = "bump" + std::to_string(k);
        suite.push_back(std::move(f));
    }
    for (int k = 0; k < 3; ++k) suite.push_back(make_polynomial_cutoff(grid, k));
    return suite;
}

/// integrate(omega * perp_grad(psi + q) . grad(xi)).
inline double weak_residual(const ScalarField& omega, const ScalarField& psi, const HarmonicBackground& q,
                            const ScalarField& xi) {
    if (!support_is_interior(xi)) throw UsageError("test function support touches the domain boundary");
    const VectorField v = perp_gradient(psi + q.field());
    const VectorField gx = gradient(xi);
    const Grid& g = omega.grid();
    double sum = 0.0;
    for (int idx : g.interior_cells()) sum += omega[idx] * (v.x[idx] * gx.x[idx] + v.y[idx] * gx.y[idx]);
    return g.cell_measure() * sum;
}

inline double weak_residual(const SolveResult& result, const HarmonicBackground& q, const ScalarField& xi) {
    return weak_residual(result.patch.omega(), result.psi, q, xi);
}

/// |residual| / (kappa * lambda * max|grad xi|); zero for constant xi.
inline double normalized_weak_residual(const SolveResult& result, const HarmonicBackground& q, const ScalarField& xi) {
    const double raw = weak_residual(result, q, xi);
    const VectorField gx = gradient(xi);
    double gmax = 0.0;
    for (int idx : xi.grid().interior_cells()) gmax = std::max(gmax, std::hypot(gx.x[idx], gx.y[idx]));
    if (gmax == 0.0) return 0.0;
    const ClassSpec& s = result.patch.spec;
    return std::abs(raw) / (s.kappa * s.effective_lambda() * gmax);
}

inline double max_normalized_residual(const SolveResult& result, const HarmonicBackground& q,
                                      const std::vector<TestFunction>& suite) {
    double worst = 0.0;
    for (const TestFunction& f : suite) worst = std::max(worst, normalized_weak_residual(result, q, f.field));
    return worst;
}

// ---------------------------------------------------------------------------
// Extremum sets and trial patches

enum class ExtremumKind { min, max };

/// Interior cells with q within `tol` of its extreme value.
inline std::vector<int> extremum_set(const HarmonicBackground& q, ExtremumKind kind, double tol) {
    const double target = kind == ExtremumKind::min ? q.min_value() : q.max_value();
    std::vector<int> out;
    for (int idx : q.field().grid().interior_cells())
        if (std::abs(q[idx] - target) <= tol) out.push_back(idx);
    return out;
}

inline ExtremumKind extremum_kind_for(int sign, Objective objective) {
    return selects_lowest(sign, objective) ? ExtremumKind::min : ExtremumKind::max;
}

/// Largest distance from a patch cell to the nearest cell of `set`.
inline double sup_distance(const Grid& g, const std::vector<int>& cells, const std::vector<int>& set) {
    double sup = 0.0;
    for (int c : cells) {
        double best = std::numeric_limits<double>::infinity();
        for (int s : set) best = std::min(best, distance(g.center(c), g.center(s)));
        sup = std::max(sup, best);
    }
    return sup;
}

/// Tolerance used to pick the discrete extremum set: 1e-9 of the range of q,
/// so exact ties along a grid line are kept together.
inline double default_extremum_tol(const HarmonicBackground& q) {
    return 1e-9 * std::max(1.0, q.max_value() - q.min_value());
}

/// Radius of the disk of area lambda / kappa.
inline double trial_radius(double lambda, double kappa) { return std::sqrt(lambda / (kappa * std::numbers::pi)); }

/// Discrete trial ball: the m interior cells nearest to a point one radius
/// inside the boundary from the extremum-set centroid. Returns the patch.
inline Patch trial_ball_patch(const HarmonicBackground& q, const ClassSpec& spec, Objective objective) {
    spec.validate();
    const Grid& g = *spec.grid;
    const std::vector<int> set = extremum_set(q, extremum_kind_for(spec.sign, objective), default_extremum_tol(q));
    Point x0{};
    for (int c : set) x0 = x0 + g.center(c);
    x0 = (1.0 / static_cast<double>(set.size())) * x0;

    const double eps = trial_radius(spec.effective_lambda(), spec.kappa);
    Point center{};
    if (const auto* d = std::get_if<Disk>(&g.shape())) {
        if (eps >= d->radius) throw UsageError("trial ball does not fit inside the disk");
        Point dir = x0 - d->center;
        const double r = norm(dir);
        dir = r > 0.0 ? (1.0 / r) * dir : Point{1.0, 0.0};
        center = d->center + (d->radius - eps) * dir;
    } else if (const auto* rect = std::get_if<Rectangle>(&g.shape())) {
        if (2.0 * eps >= std::min(rect->width, rect->height)) throw UsageError("trial ball does not fit inside the rectangle");
        const double left = x0.x - rect->origin.x, right = rect->origin.x + rect->width - x0.x;
        const double bottom = x0.y - rect->origin.y, top = rect->origin.y + rect->height - x0.y;
        center = x0;
        const double m = std::min({left, right, bottom, top});
        if (m == left) center.x = rect->origin.x + eps;
        else if (m == right) center.x = rect->origin.x + rect->width - eps;
        else if (m == bottom) center.y = rect->origin.y + eps;
        else center.y = rect->origin.y + rect->height - eps;
        center.x = std::clamp(center.x, rect->origin.x + eps, rect->origin.x + rect->width - eps);
        center.y = std::clamp(center.y, rect->origin.y + eps, rect->origin.y + rect->height - eps);
    } else {
        throw UsageError("trial ball is only defined for two-dimensional domains");
    }

    std::vector<int> cells = spec.admissible_cells();
    const auto m = static_cast<std::size_t>(spec.cell_budget());
    std::partial_sort(cells.begin(), cells.begin() + static_cast<long>(m), cells.end(), [&](int a, int b) {
        const double da = distance(g.center(a), center), db = distance(g.center(b), center);
        if (da != db) return da < db;
        return a < b;
    });
    cells.resize(m);
    std::sort(cells.begin(), cells.end());
    return Patch{spec, std::move(cells)};
}

inline double trial_ball_energy(const HarmonicBackground& q, const ClassSpec& spec, const PoissonSolver& solver,
                                Objective objective = Objective::minimize) {
    return energy(trial_ball_patch(q, spec, objective).omega(), q, solver).total;
}

// ---------------------------------------------------------------------------
// Lambda sweeps

struct SweepRow {
    double lambda = 0.0;
    double energy = 0.0;
    double mu_lo = 0.0;
    double mu_hi = 0.0;
    double q_patch_min = 0.0;
    double q_patch_max = 0.0;
    Point centroid{};
    double supdist = 0.0;
    double residual_max = 0.0;
    // not part of the CSV table
    double trial_energy = 0.0;
    double mu_mid = 0.0;
    /// integrate((potential - mu) * omega) at each bracket endpoint.
    double multiplier_integral_lo = 0.0;
    double multiplier_integral_hi = 0.0;
    bool converged = false;
    int iterations = 0;
};

struct ExponentFit {
    std::string name;
    double slope = 0.0;
    double r2 = 0.0;
};

struct SweepConfig {
    GridPtr grid;
    const PoissonSolver* solver = nullptr;
    const HarmonicBackground* background = nullptr;
    double kappa = 1.0;
    int sign = +1;
    std::optional<Ball> region;
    Objective objective = Objective::minimize;
    SolverOptions options;
    std::uint64_t test_seed = 0;
    bool parallel = true;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SolveResult> solves;
    std::vector<ExponentFit> fits;
    std::vector<std::string> violations;
};

/// Unweighted least squares of log(y) against log(x); pairs with y <= 0 are
/// skipped.
inline ExponentFit fit_power_law(const std::string& name, const std::vector<double>& x, const std::vector<double>& y) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] > 0.0 && y[i] > 0.0) {
            lx.push_back(std::log(x[i]));
            ly.push_back(std::log(y[i]));
        }
    ExponentFit fit{name, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
    const std::size_t n = lx.size();
    if (n < 2) return fit;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += lx[i];
        my += ly[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (lx[i] - mx) * (lx[i] - mx);
        sxy += (lx[i] - mx) * (ly[i] - my);
        syy += (ly[i] - my) * (ly[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

/// One solve per lambda (strictly decreasing), the table of bounded
/// quantities, power-law fits of the multiplier and energy excesses, and the
/// list of rows breaking the hard inequalities
///   E >= lambda * min q   and   multiplier midpoint > min q
/// (checked for the sub-level orientation, 1e-8 slack).
inline SweepResult run_sweep(const SweepConfig& config, const std::vector<double>& lambdas) {
    if (!config.solver || !config.background) throw UsageError("sweep needs a solver and a background");
    for (std::size_t i = 1; i < lambdas.size(); ++i)
        if (!(lambdas[i] < lambdas[i - 1])) throw ConfigError("sweep lambdas must be strictly decreasing");
    const HarmonicBackground& q = *config.background;
    const PoissonSolver& solver = *config.solver;

    std::vector<ClassSpec> specs;
    for (double lambda : lambdas) {
        ClassSpec s{config.kappa, lambda, config.sign, config.region, config.grid};
        try {
            s.validate();
        } catch (const InfeasibleError& e) {
            throw InfeasibleError("sweep lambda " + std::to_string(lambda) + " is infeasible: " + e.what());
        }
        specs.push_back(s);
    }

    SweepResult out;
    out.solves.resize(specs.size());
    auto run_one = [&](std::size_t i) { return solve(specs[i], q, solver, config.objective, config.options); };
    if (config.parallel && specs.size() > 1) {
        std::vector<std::future<SolveResult>> jobs;
        for (std::size_t i = 0; i < specs.size(); ++i) jobs.push_back(std::async(std::launch::async, run_one, i));
        for (std::size_t i = 0; i < specs.size(); ++i) out.solves[i] = jobs[i].get();
    } else {
        for (std::size_t i = 0; i < specs.size(); ++i) out.solves[i] = run_one(i);
    }

    const Grid& g = *config.grid;
    const ExtremumKind kind = extremum_kind_for(config.sign, config.objective);
    const std::vector<int> set = extremum_set(q, kind, default_extremum_tol(q));
    const std::vector<TestFunction> suite = default_test_suite(config.grid, config.test_seed);
    const bool sublevel = config.sign > 0 && config.objective == Objective::minimize;
    const double qmin = q.min_value();
    constexpr double slack = 1e-8;

    std::vector<double> lam, mu_excess, e_excess;
    for (std::size_t i = 0; i < specs.size(); ++i) {
        const SolveResult& r = out.solves[i];
        SweepRow row;
        row.lambda = specs[i].effective_lambda();
        row.energy = r.energy.total;
        row.mu_lo = r.multiplier_bracket.lo();
        row.mu_hi = r.multiplier_bracket.hi();
        row.mu_mid = r.multiplier_bracket.midpoint();
        row.q_patch_min = std::numeric_limits<double>::infinity();
        row.q_patch_max = -std::numeric_limits<double>::infinity();
        for (int c : r.patch.cells) {
            row.q_patch_min = std::min(row.q_patch_min, q[c]);
            row.q_patch_max = std::max(row.q_patch_max, q[c]);
        }
        row.centroid = r.patch.centroid();
        row.supdist = sup_distance(g, r.patch.cells, set);
        row.residual_max = max_normalized_residual(r, q, suite);
        row.trial_energy = trial_ball_energy(q, specs[i], solver, config.objective);
        const ScalarField omega = r.patch.omega();
        const double pot_omega = inner(r.potential, omega);
        const double lam_signed = integrate(omega);
        row.multiplier_integral_lo = pot_omega - row.mu_lo * lam_signed;
        row.multiplier_integral_hi = pot_omega - row.mu_hi * lam_signed;
        row.converged = r.converged;
        row.iterations = r.iterations;

        if (sublevel) {
            if (!(row.energy >= row.lambda * qmin - slack))
                out.violations.push_back("lambda " + std::to_string(row.lambda) + ": E below lambda*min q");
            if (!(row.mu_mid > qmin + slack))
                out.violations.push_back("lambda " + std::to_string(row.lambda) + ": multiplier not above min q");
        }
        lam.push_back(row.lambda);
        mu_excess.push_back(sublevel ? row.mu_mid - qmin : std::abs(row.mu_mid - (kind == ExtremumKind::min ? qmin : q.max_value())));
        e_excess.push_back(sublevel ? row.energy - row.lambda * qmin : std::abs(row.energy - row.lambda * (kind == ExtremumKind::min ? qmin : q.max_value())));
        out.rows.push_back(row);
    }
    out.fits.push_back(fit_power_law("multiplier_excess", lam, mu_excess));
    out.fits.push_back(fit_power_law("energy_excess", lam, e_excess));
    return out;
}

// ---------------------------------------------------------------------------
// One-dimensional problems with closed-form solutions

/// P1: positive patch, minimized energy, patch = sub-level set of u.
/// P2: negative patch, maximized energy, patch = sub-level set of v (the
///     vorticity sits near the minimum of q = x as a negative patch).
enum class Problem1D { P1, P2 };

/// Vortex strength of the 1D problems: the closed forms solve -u'' = 2 on the patch.
inline constexpr double kappa_1d = 2.0;

/// Closed-form solution on (0, 1) with u(0) = 0, u(1) = 1.
inline double exact_1d(Problem1D problem, double lambda, double x) {
    if (problem == Problem1D::P1) {
        if (x <= lambda) return -x * x + (2.0 * lambda + 1.0 - lambda * lambda) * x;
        return (1.0 - lambda * lambda) * x + lambda * lambda;
    }
    if (x <= lambda) return x * x + (lambda - 1.0) * (lambda - 1.0) * x;
    return (lambda * lambda + 1.0) * x - lambda * lambda;
}

struct Solve1DResult {
    std::vector<double> x;
    std::vector<double> u;
    std::vector<double> exact;
    double max_error = 0.0;
    MultiplierBracket multiplier;
    Patch patch;
    bool converged = false;
};

/// Runs the 2D machinery on a one-cell-thick strip over (0, 1) with q = x.
inline Solve1DResult solve_1d(Problem1D problem, double lambda, int cells) {
    if (!(lambda > 0.0 && lambda < 1.0)) throw ConfigError("1D lambda must lie in (0, 1)");
    if (cells < 64) throw ConfigError("1D solve needs at least 64 cells");
    const GridPtr grid = build_grid(Interval{1.0, 0.0}, cells);
    const PoissonSolver solver(grid);
    const HarmonicBackground q = HarmonicBackground::linear(grid, 1.0, 0.0);
    // patch length lambda on a strip of thickness h has area lambda * h
    ClassSpec spec{kappa_1d, kappa_1d * lambda * grid->h(), problem == Problem1D::P1 ? +1 : -1, std::nullopt, grid};
    const Objective objective = problem == Problem1D::P1 ? Objective::minimize : Objective::maximize;
    const SolveResult r = solve(spec, q, solver, objective);

    Solve1DResult out;
    out.patch = r.patch;
    out.multiplier = r.multiplier_bracket;
    out.converged = r.converged;
    for (int idx : grid->interior_cells()) {
        const double x = grid->center(idx).x;
        out.x.push_back(x);
        out.u.push_back(r.potential[idx]);
        out.exact.push_back(exact_1d(problem, lambda, x));
        out.max_error = std::max(out.max_error, std::abs(out.u.back() - out.exact.back()));
    }
    return out;
}

}  // namespace vpatch
