#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "vpatch/classes.hpp"
#include "vpatch/elliptic.hpp"
#include "vpatch/errors.hpp"
#include "vpatch/solver.hpp"

namespace vpatch {

/// Orientation of a multi-patch problem.
///   pinned_min_energy: minimize E; positive patches sit at local minima of q,
///                      negative patches at local maxima.
///   pinned_max_energy: maximize E; positive patches at local maxima of q,
///                      negative patches at local minima.
enum class MultiMode { pinned_min_energy, pinned_max_energy };

inline Objective objective_of(MultiMode mode) {
    return mode == MultiMode::pinned_min_energy ? Objective::minimize : Objective::maximize;
}

/// Ordered components, each restricted to its own ball around an anchor point.
struct MultiPatchSpec {
    std::vector<ClassSpec> components;

    /// Balls must not share an interior cell (closures taken with h/2 slack).
    void check_disjoint() const {
        for (std::size_t a = 0; a < components.size(); ++a) {
            if (!components[a].region) throw ConfigError("component " + std::to_string(a) + " has no region ball");
            for (std::size_t b = a + 1; b < components.size(); ++b) {
                if (!components[b].region) throw ConfigError("component " + std::to_string(b) + " has no region ball");
                const Ball& ba = *components[a].region;
                const Ball& bb = *components[b].region;
                const Grid& g = *components[a].grid;
                const double slack = 0.5 * g.h();
                for (int idx : g.interior_cells()) {
                    const Point c = g.center(idx);
                    if (distance(c, ba.center) <= ba.radius + slack && distance(c, bb.center) <= bb.radius + slack)
                        throw ConfigError("region balls of components " + std::to_string(a) + " and " +
                                          std::to_string(b) + " overlap inside the domain");
                }
            }
        }
    }

    /// The extremal cell of q inside each ball (min for sub-level components,
    /// max otherwise) must lie within `tolerance` of the ball center.
    void check_anchors(const HarmonicBackground& q, MultiMode mode, double tolerance) const {
        for (std::size_t p = 0; p < components.size(); ++p) {
            const ClassSpec& c = components[p];
            const bool lowest = selects_lowest(c.sign, objective_of(mode));
            int best = -1;
            for (int idx : c.admissible_cells()) {
                if (best < 0 || (lowest ? q[idx] < q[best] : q[idx] > q[best])) best = idx;
            }
            if (best < 0) throw InfeasibleError("component " + std::to_string(p) + " has no admissible cells");
            const double d = distance(c.grid->center(best), c.region->center);
            if (d > tolerance)
                throw ConfigError("component " + std::to_string(p) + ": extremum of q in the ball lies " +
                                  std::to_string(d) + " from the anchor (tolerance " + std::to_string(tolerance) +
                                  ")");
        }
    }

    void validate(const HarmonicBackground& q, MultiMode mode, double anchor_tolerance) const {
        if (components.empty()) throw ConfigError("multi-patch spec has no components");
        for (const ClassSpec& c : components) c.validate();
        check_disjoint();
        check_anchors(q, mode, anchor_tolerance);
    }
};

/// Default anchor tolerance: four cells, enough to absorb the staircase
/// boundary where extrema of q sit on the boundary.
inline double default_anchor_tolerance(const Grid& g) { return 4.0 * g.h(); }

/// Conditional gradient on the product class; the oracle decomposes into one
/// bathtub selection per ball.
inline MultiSolveResult solve_multi(const MultiPatchSpec& spec, const HarmonicBackground& q,
                                    const PoissonSolver& solver, MultiMode mode, const SolverOptions& opts = {},
                                    double anchor_tolerance = -1.0) {
    if (anchor_tolerance < 0.0) anchor_tolerance = default_anchor_tolerance(solver.grid());
    spec.validate(q, mode, anchor_tolerance);
    return solve_components(spec.components, q, solver, objective_of(mode), opts);
}

struct MultiplierBoundRow {
    std::size_t component = 0;
    double lambda = 0.0;
    double multiplier = 0.0;      // bracket midpoint
    double anchor_value = 0.0;    // q at the ball center
    double deviation = 0.0;       // |multiplier - anchor_value|
    double ratio = 0.0;           // deviation / sqrt(lambda)
};

struct MultiplierBoundsReport {
    std::vector<MultiplierBoundRow> rows;
    /// Set by check_multiplier_sweep when a component's ratio grows at every
    /// step of a decreasing-lambda sweep.
    bool ratio_grows = false;
};

/// One row per component: deviation of the multiplier from q at the anchor,
/// and its ratio to lambda^{1/2}.
inline MultiplierBoundsReport multiplier_bounds_check(const MultiSolveResult& result, const HarmonicBackground& q) {
    MultiplierBoundsReport report;
    for (std::size_t p = 0; p < result.patches.size(); ++p) {
        const ClassSpec& spec = result.patches[p].spec;
        MultiplierBoundRow row;
        row.component = p;
        row.lambda = spec.effective_lambda();
        row.multiplier = result.multipliers[p].midpoint();
        row.anchor_value = q.value_at(spec.region ? spec.region->center : result.patches[p].centroid());
        row.deviation = std::abs(row.multiplier - row.anchor_value);
        row.ratio = row.deviation / std::sqrt(row.lambda);
        report.rows.push_back(row);
    }
    return report;
}

/// Merges per-lambda reports (ordered by decreasing lambda) and flags a
/// component whose ratio increases at every step.
inline MultiplierBoundsReport check_multiplier_sweep(const std::vector<MultiplierBoundsReport>& sweep) {
    MultiplierBoundsReport merged;
    for (const auto& r : sweep) merged.rows.insert(merged.rows.end(), r.rows.begin(), r.rows.end());
    if (sweep.size() < 3) return merged;
    const std::size_t n = sweep.front().rows.size();
    for (std::size_t p = 0; p < n; ++p) {
        bool growing = true;
        for (std::size_t k = 1; k < sweep.size(); ++k)
            if (!(sweep[k].rows[p].ratio > sweep[k - 1].rows[p].ratio)) growing = false;
        if (growing) merged.ratio_grows = true;
    }
    return merged;
}

}  // namespace vpatch
