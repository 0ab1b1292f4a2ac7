// Acceptance battery: one PASS/FAIL line per criterion; exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <algorithm>
#include <cstdio>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vpatch/vpatch.hpp"

using namespace vpatch;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

GridPtr unit_disk(int res) { return build_grid(Disk{{0.0, 0.0}, 1.0}, res); }

// Shared lambda sweep on the unit disk with q = x at resolution 128.
struct DiskSweep {
    GridPtr grid = unit_disk(128);
    PoissonSolver solver{grid};
    HarmonicBackground q = HarmonicBackground::linear(grid, 1.0, 0.0);
    std::vector<double> lambdas{0.2, 0.1, 0.05, 0.025};
    SweepResult min_sweep, max_sweep;
    double seconds = 0.0;

    DiskSweep() {
        const auto t0 = Clock::now();
        SweepConfig c;
        c.grid = grid;
        c.solver = &solver;
        c.background = &q;
        c.test_seed = 7;
        min_sweep = run_sweep(c, lambdas);
        c.objective = Objective::maximize;
        max_sweep = run_sweep(c, lambdas);
        seconds = seconds_since(t0);
    }
};

// --- 1: closed-form 1D solutions
Outcome one_dimensional() {
    const auto t0 = Clock::now();
    bool ok = true;
    double worst_err = 0.0, lo_ratio = std::numeric_limits<double>::infinity(), hi_ratio = 0.0;
    for (Problem1D p : {Problem1D::P1, Problem1D::P2}) {
        for (double lambda : {0.25, 0.5, 0.75}) {
            const Solve1DResult coarse = solve_1d(p, lambda, 512), fine = solve_1d(p, lambda, 1024);
            const double ratio = coarse.max_error / fine.max_error;
            worst_err = std::max(worst_err, fine.max_error);
            lo_ratio = std::min(lo_ratio, ratio);
            hi_ratio = std::max(hi_ratio, ratio);
            ok = ok && fine.converged && fine.max_error <= 5e-3 && ratio >= 1.6 && ratio <= 2.4;
        }
    }
    const double secs = seconds_since(t0);
    ok = ok && secs < 5.0;
    return {ok, "max error " + fmt("%.3e", worst_err) + ", doubling ratios in [" + fmt("%.3f", lo_ratio) + ", " +
                    fmt("%.3f", hi_ratio) + "], " + fmt("%.2f", secs) + " s"};
}

// --- 2: exhaustive enumeration on tiny grids
Outcome brute_force() {
    const auto t0 = Clock::now();
    const GridPtr g = build_grid(Rectangle{1.0, 1.0, {0.0, 0.0}}, 4);
    const PoissonSolver s(g);
    const HarmonicBackground q = HarmonicBackground::linear(g, 1.0, 0.0);
    const double h = g->h(), h2 = h * h;

    // dense Dirichlet Laplacian and its inverse, assembled independently
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(16, 16);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 4; ++i) {
            const int k = 4 * j + i;
            a(k, k) = 4.0 / h2;
            if (i > 0) a(k, k - 1) = -1.0 / h2;
            if (i < 3) a(k, k + 1) = -1.0 / h2;
            if (j > 0) a(k, k - 4) = -1.0 / h2;
            if (j < 3) a(k, k + 4) = -1.0 / h2;
        }
    const Eigen::MatrixXd green = a.inverse();
    auto energy_of = [&](const std::vector<std::pair<int, double>>& cells) {
        double quad = 0.0, lin = 0.0;
        for (auto [c, w] : cells) {
            lin += w * g->center(c).x;
            for (auto [d, v] : cells) quad += w * v * green(c, d);
        }
        return 0.5 * h2 * quad + h2 * lin;
    };

    // single patch, m = 3
    const double kappa = 1.0;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<int>> argmins;
    int count = 0;
    for (int x = 0; x < 16; ++x)
        for (int y = x + 1; y < 16; ++y)
            for (int z = y + 1; z < 16; ++z) {
                ++count;
                const double e = energy_of({{x, kappa}, {y, kappa}, {z, kappa}});
                if (e < best - 1e-13 * std::abs(e)) {
                    best = e;
                    argmins = {{x, y, z}};
                } else if (std::abs(e - best) <= 1e-13 * std::abs(e)) {
                    argmins.push_back({x, y, z});
                }
            }
    const SolveResult r = solve(ClassSpec{kappa, 3.0 * kappa * h2, +1, std::nullopt, g}, q, s);
    const bool single_ok = r.converged && (std::abs(r.energy.total - best) <= 1e-12 * std::abs(best) ||
                                           std::find(argmins.begin(), argmins.end(), r.patch.cells) != argmins.end());

    // two components, one cell each in disjoint 2x2 blocks
    const double k2 = 20.0;
    const ClassSpec ca{k2, k2 * h2, +1, Ball{{0.25, 0.25}, 0.2}, g};
    const ClassSpec cb{k2, k2 * h2, -1, Ball{{0.75, 0.75}, 0.2}, g};
    double best2 = std::numeric_limits<double>::infinity();
    std::vector<std::pair<int, int>> argmins2;
    int count2 = 0;
    for (int x : ca.admissible_cells())
        for (int y : cb.admissible_cells()) {
            ++count2;
            const double e = energy_of({{x, k2}, {y, -k2}});
            if (e < best2 - 1e-13 * std::abs(e)) {
                best2 = e;
                argmins2 = {{x, y}};
            } else if (std::abs(e - best2) <= 1e-13 * std::abs(e)) {
                argmins2.push_back({x, y});
            }
        }
    const MultiSolveResult m = solve_multi(MultiPatchSpec{{ca, cb}}, q, s, MultiMode::pinned_min_energy, {}, 1.0);
    const std::pair<int, int> got{m.patches[0].cells.at(0), m.patches[1].cells.at(0)};
    const bool multi_ok = m.converged && (std::abs(m.energy.total - best2) <= 1e-12 * std::abs(best2) ||
                                          std::find(argmins2.begin(), argmins2.end(), got) != argmins2.end());
    const double secs = seconds_since(t0);
    return {single_ok && multi_ok && count == 560 && count2 == 16 && secs < 10.0,
            "single: solver " + fmt("%.12e", r.energy.total) + " vs exhaustive " + fmt("%.12e", best) + " over " +
                std::to_string(count) + " patches; two-component: solver " + fmt("%.12e", m.energy.total) +
                " vs exhaustive " + fmt("%.12e", best2) + " over " + std::to_string(count2) + "; " +
                fmt("%.2f", secs) + " s"};
}

// --- 3: localization along the sweep
Outcome localization(const DiskSweep& ds) {
    bool ok = ds.seconds < 120.0;
    std::string trail;
    for (std::size_t k = 0; k < ds.min_sweep.rows.size(); ++k) {
        const double d = ds.min_sweep.rows[k].supdist;
        trail += (k ? " " : "") + fmt("%.4f", d);
        if (k > 0 && d > ds.min_sweep.rows[k - 1].supdist) ok = false;
    }
    const double last_min = ds.min_sweep.rows.back().supdist, last_max = ds.max_sweep.rows.back().supdist;
    ok = ok && last_min <= 0.3 && last_max <= 0.3;
    // mirror image: max-mode centroid reflects the min-mode centroid across x = 0
    const Point cmin = ds.min_sweep.rows.back().centroid, cmax = ds.max_sweep.rows.back().centroid;
    const double mirror = std::hypot(cmin.x + cmax.x, cmin.y - cmax.y);
    ok = ok && mirror <= 2.0 * ds.grid->h() && cmax.x > 0.9;
    for (std::size_t k = 1; k < ds.max_sweep.rows.size(); ++k)
        if (ds.max_sweep.rows[k].supdist > ds.max_sweep.rows[k - 1].supdist) ok = false;
    return {ok, "supdist " + trail + "; max-mode supdist " + fmt("%.4f", last_max) + ", centroid x " +
                    fmt("%.4f", cmax.x) + ", mirror defect " + fmt("%.2e", mirror) + "; sweeps " +
                    fmt("%.1f", ds.seconds) + " s"};
}

// --- 4: multiplier above min q with bounded lambda^{-1/2} ratio
Outcome multiplier_bounds(const DiskSweep& ds) {
    const double qmin = ds.q.min_value();
    bool ok = true, growing = true;
    std::string trail;
    double prev = -1.0;
    for (std::size_t k = 0; k < ds.min_sweep.rows.size(); ++k) {
        const SweepRow& row = ds.min_sweep.rows[k];
        ok = ok && row.mu_mid > qmin + 1e-8;
        const double ratio = (row.mu_mid - qmin) / std::sqrt(row.lambda);
        trail += (k ? " " : "") + fmt("%.4f", ratio);
        if (k > 0 && !(ratio > prev)) growing = false;
        prev = ratio;
    }
    return {ok && !growing, "(mid - min q)/sqrt(lambda): " + trail + (growing ? " (grows monotonically)" : "")};
}

// --- 5: energy between lambda*min q and the trial-ball energy
Outcome energy_bounds(const DiskSweep& ds) {
    const double qmin = ds.q.min_value();
    bool ok = true;
    double lower_margin = std::numeric_limits<double>::infinity(), upper_margin = lower_margin;
    for (const SweepRow& row : ds.min_sweep.rows) {
        lower_margin = std::min(lower_margin, row.energy - row.lambda * qmin);
        upper_margin = std::min(upper_margin, row.trial_energy - row.energy);
        ok = ok && row.energy >= row.lambda * qmin - 1e-8 && row.energy <= row.trial_energy + 1e-8;
    }
    return {ok, "min(E - lambda*min q) " + fmt("%.3e", lower_margin) + ", min(trial - E) " + fmt("%.3e", upper_margin)};
}

// --- 6: weak residual and its refinement factor
Outcome weak_residual_check() {
    const auto t0 = Clock::now();
    auto residual_at = [](int res) {
        const GridPtr g = unit_disk(res);
        const PoissonSolver s(g);
        const HarmonicBackground q = HarmonicBackground::linear(g, 1.0, 0.0);
        const SolveResult r = solve(ClassSpec{1.0, 0.1, +1, std::nullopt, g}, q, s);
        return max_normalized_residual(r, q, default_test_suite(g, 7));
    };
    const double r128 = residual_at(128), r256 = residual_at(256);
    const double factor = r128 / r256;
    const double secs = seconds_since(t0);
    const bool ok = r128 <= 0.1 && factor >= 1.5 && factor <= 3.0 && secs < 180.0;
    return {ok, "residual " + fmt("%.3e", r128) + " at 128, " + fmt("%.3e", r256) + " at 256, factor " +
                    fmt("%.3f", factor) + "; " + fmt("%.1f", secs) + " s"};
}

// --- 7: random starts agree
Outcome uniqueness() {
    const GridPtr g = unit_disk(128);
    const PoissonSolver s(g);
    const HarmonicBackground q = HarmonicBackground::linear(g, 1.0, 0.0);
    const ClassSpec spec{1.0, 0.05, +1, std::nullopt, g};
    std::vector<Patch> patches;
    bool ok = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        SolverOptions o;
        o.init = InitKind::random;
        o.seed = seed;
        const SolveResult r = solve(spec, q, s, Objective::minimize, o);
        ok = ok && r.converged;
        patches.push_back(r.patch);
    }
    const double bound = 4.0 * g->cell_measure() * std::sqrt(static_cast<double>(spec.cell_budget()));
    double worst = 0.0;
    for (std::size_t i = 0; i < patches.size(); ++i)
        for (std::size_t j = i + 1; j < patches.size(); ++j)
            worst = std::max(worst, symmetric_difference(patches[i], patches[j]));
    return {ok && worst <= bound, "worst pairwise symmetric difference " + fmt("%.3e", worst) + " (bound " +
                                      fmt("%.3e", bound) + ")"};
}

// --- 8: convexity and Green-form properties
Outcome convexity() {
    const GridPtr g = unit_disk(64);
    const PoissonSolver s(g);
    const HarmonicBackground q = HarmonicBackground::linear(g, 1.0, 0.3);
    const ClassSpec spec{1.0, 0.2, +1, std::nullopt, g};
    std::mt19937_64 rng(2024);
    int midpoint_fail = 0, positivity_fail = 0, symmetry_fail = 0;
    double worst_asym = 0.0;
    std::vector<int> cells = g->interior_cells();
    auto random_patch = [&] {
        std::shuffle(cells.begin(), cells.end(), rng);
        std::vector<int> c(cells.begin(), cells.begin() + spec.cell_budget());
        std::sort(c.begin(), c.end());
        return Patch{spec, c}.omega();
    };
    for (int k = 0; k < 50; ++k) {
        const ScalarField a = random_patch(), b = random_patch();
        const double ea = energy(a, q, s).total, eb = energy(b, q, s).total;
        const double em = energy(0.5 * (a + b), q, s).total;
        if (!(em <= 0.5 * (ea + eb) + 1e-12 * (std::abs(ea) + std::abs(eb)))) ++midpoint_fail;
    }
    std::normal_distribution<double> n;
    std::vector<ScalarField> fields;
    for (int k = 0; k < 50; ++k) fields.push_back(ScalarField::from_function(g, [&](Point) { return n(rng); }));
    for (int k = 0; k < 50; ++k) {
        const ScalarField& f = fields[k];
        const ScalarField& h = fields[(k + 1) % 50];
        const ScalarField gf = s.solve(f), gh = s.solve(h);
        if (!(inner(f, gf) >= 0.0)) ++positivity_fail;
        const double x = inner(f, gh), y = inner(h, gf);
        const double asym = std::abs(x - y) / std::max(std::abs(x), std::abs(y));
        worst_asym = std::max(worst_asym, asym);
        if (asym > 1e-8) ++symmetry_fail;
    }
    return {midpoint_fail == 0 && positivity_fail == 0 && symmetry_fail == 0,
            "midpoint failures " + std::to_string(midpoint_fail) + "/50, positivity failures " +
                std::to_string(positivity_fail) + "/50, worst relative asymmetry " + fmt("%.2e", worst_asym)};
}

// --- 9: four-patch confinement and localization
Outcome four_patch() {
    const GridPtr g = unit_disk(128);
    const PoissonSolver s(g);
    const HarmonicBackground q = HarmonicBackground::quadratic(g);
    const std::vector<std::pair<Point, int>> anchors{{{0.0, 1.0}, +1}, {{0.0, -1.0}, +1}, {{1.0, 0.0}, -1}, {{-1.0, 0.0}, -1}};
    bool confined = true, ok = true;
    std::vector<double> prev(4, std::numeric_limits<double>::infinity());
    std::string trail;
    for (double lambda : {0.04, 0.02, 0.01}) {
        MultiPatchSpec spec;
        for (auto [c, sign] : anchors) spec.components.push_back(ClassSpec{1.0, lambda, sign, Ball{c, 0.5}, g});
        const MultiSolveResult r = solve_multi(spec, q, s, MultiMode::pinned_min_energy);
        ok = ok && r.converged;
        confined = confined && r.confined_every_iterate;
        double worst = 0.0;
        for (std::size_t p = 0; p < 4; ++p) {
            const double qa = q.value_at(anchors[p].first);
            double dev = 0.0;
            for (int c : r.patches[p].cells) {
                dev = std::max(dev, std::abs(q[c] - qa));
                if (distance(g->center(c), anchors[p].first) >= 0.5) confined = false;
            }
            if (dev > prev[p]) ok = false;
            prev[p] = dev;
            worst = std::max(worst, dev);
        }
        trail += (trail.empty() ? "" : " ") + fmt("%.4f", worst);
    }
    return {ok && confined, std::string(confined ? "confined at every iterate" : "left its ball") +
                                "; max |q - q(anchor)| per lambda: " + trail};
}

// --- 10: sign equivalence
Outcome sign_equivalence() {
    const GridPtr g = unit_disk(96);
    const PoissonSolver s(g);
    struct Case {
        HarmonicBackground q;
        double lambda;
        Objective objective;
    };
    const std::vector<Case> cases{{HarmonicBackground::linear(g, 1.0, 0.0), 0.05, Objective::minimize},
                                  {HarmonicBackground::quadratic(g), 0.1, Objective::minimize},
                                  {HarmonicBackground::linear(g, 0.6, -0.8, 0.2), 0.08, Objective::maximize}};
    int same = 0;
    for (const Case& c : cases) {
        const SolveResult a = solve(ClassSpec{1.0, c.lambda, +1, std::nullopt, g}, c.q, s, c.objective);
        const SolveResult b = solve(ClassSpec{1.0, c.lambda, -1, std::nullopt, g}, c.q.negated(), s, c.objective);
        if (a.converged && b.converged && a.patch.cells == b.patch.cells) ++same;
    }
    return {same == 3, std::to_string(same) + "/3 configurations give identical cell sets"};
}

}  // namespace

int main() {
    int failures = 0;
    auto report = [&](int n, const std::function<Outcome()>& check) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", n, o.detail.c_str());
        std::fflush(stdout);
    };
    report(1, one_dimensional);
    report(2, brute_force);
    {
        const DiskSweep ds;
        report(3, [&] { return localization(ds); });
        report(4, [&] { return multiplier_bounds(ds); });
        report(5, [&] { return energy_bounds(ds); });
    }
    report(6, weak_residual_check);
    report(7, uniqueness);
    report(8, convexity);
    report(9, four_patch);
    report(10, sign_equivalence);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
