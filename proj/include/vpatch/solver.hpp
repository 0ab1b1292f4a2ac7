#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/SparseLU>

#include "vpatch/classes.hpp"
#include "vpatch/elliptic.hpp"
#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"

namespace vpatch {

/// E = quadratic + linear, with quadratic = 1/2 <G omega, omega> and
/// linear = <q, omega>. kinetic_check is 1/2 the Dirichlet form of psi and
/// agrees with `quadratic` by summation by parts.
struct EnergyReport {
    double total = 0.0;
    double quadratic = 0.0;
    double linear = 0.0;
    double kinetic_check = 0.0;
};

inline EnergyReport energy_with_psi(const ScalarField& omega, const ScalarField& psi, const HarmonicBackground& q) {
    EnergyReport r;
    r.quadratic = 0.5 * inner(psi, omega);
    r.linear = inner(q.field(), omega);
    r.kinetic_check = 0.5 * dirichlet_form(psi);
    r.total = r.quadratic + r.linear;
    return r;
}

inline EnergyReport energy(const ScalarField& omega, const HarmonicBackground& q, const PoissonSolver& solver) {
    return energy_with_psi(omega, solver.solve(omega), q);
}

enum class InitKind { zero_potential, random, explicit_cells };

struct SolverOptions {
    double gap_tol = 1e-10;
    int max_iters = 500;
    InitKind init = InitKind::zero_potential;
    std::uint64_t seed = 0;
    std::vector<int> explicit_cells;
    /// Pairwise-swap refinement of the final patch.
    bool polish = true;
    int max_polish_swaps = 2000;
    /// Pairwise iterations between exact solves on the iterate's face.
    int face_step_every = 5;
};

enum class StopReason { gap, vertex_cycle, max_iters };

inline const char* to_string(StopReason r) {
    switch (r) {
        case StopReason::gap: return "gap";
        case StopReason::vertex_cycle: return "vertex_cycle";
        case StopReason::max_iters: return "max_iters";
    }
    return "?";
}

/// Outcome of the conditional-gradient loop over a product of classes.
struct MultiSolveResult {
    Objective objective = Objective::minimize;
    std::vector<Patch> patches;
    std::vector<MultiplierBracket> multipliers;
    ScalarField omega;
    ScalarField psi;
    ScalarField potential;
    EnergyReport energy;
    std::vector<double> gap_trace;
    std::vector<double> energy_trace;
    int iterations = 0;
    bool converged = false;
    StopReason stop_reason = StopReason::max_iters;
    /// Duality gap of the reported patch against its own oracle vertex.
    double final_gap = 0.0;
    /// Energy of the last mixed (fractional) iterate.
    double mixed_energy = 0.0;
    /// The reported patch is returned unchanged by the oracle at its own potential.
    bool fixed_point = false;
    /// Every mixed iterate kept each component inside its admissible region.
    bool confined_every_iterate = true;
    int polish_swaps = 0;
};

/// Single-class result.
struct SolveResult {
    Objective objective = Objective::minimize;
    Patch patch;
    ScalarField psi;
    ScalarField potential;
    MultiplierBracket multiplier_bracket;
    EnergyReport energy;
    std::vector<double> gap_trace;
    std::vector<double> energy_trace;
    int iterations = 0;
    bool converged = false;
    StopReason stop_reason = StopReason::max_iters;
    double final_gap = 0.0;
    double mixed_energy = 0.0;
    bool fixed_point = false;
    int polish_swaps = 0;
};

namespace detail {

inline std::vector<int> initial_cells(const ClassSpec& spec, std::size_t component, const HarmonicBackground& q,
                                      Objective objective, const SolverOptions& opts) {
    const auto m = static_cast<std::size_t>(spec.cell_budget());
    switch (opts.init) {
        case InitKind::zero_potential: return bathtub_select(q.field(), spec, objective).first.cells;
        case InitKind::random: {
            std::vector<int> cells = spec.admissible_cells();
            std::mt19937_64 rng(opts.seed + 0x9E3779B97F4A7C15ULL * component);
            std::shuffle(cells.begin(), cells.end(), rng);
            cells.resize(m);
            std::sort(cells.begin(), cells.end());
            return cells;
        }
        case InitKind::explicit_cells: {
            const std::vector<int> admissible = spec.admissible_cells();
            std::vector<int> cells;
            for (int c : opts.explicit_cells)
                if (std::binary_search(admissible.begin(), admissible.end(), c)) cells.push_back(c);
            std::sort(cells.begin(), cells.end());
            cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
            if (cells.size() != m)
                throw ConfigError("explicit initial patch has " + std::to_string(cells.size()) +
                                  " admissible cells, expected " + std::to_string(m));
            return cells;
        }
    }
    return {};
}

/// Columns of the discrete Green matrix K = A^{-1} (psi = K omega pointwise),
/// computed on demand.
class GreenColumns {
public:
    explicit GreenColumns(const PoissonSolver& solver) : solver_(solver) {}

    const Eigen::VectorXd& column(int cell) {
        auto it = cache_.find(cell);
        if (it != cache_.end()) return it->second;
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(solver_.grid().interior_cells().size()));
        e[solver_.unknown_of(cell)] = 1.0;
        return cache_.emplace(cell, solver_.solve_vector(e)).first->second;
    }

    double entry(int row_cell, int col_cell) { return column(col_cell)[solver_.unknown_of(row_cell)]; }

private:
    const PoissonSolver& solver_;
    std::unordered_map<int, Eigen::VectorXd> cache_;
};

/// Best-improvement pairwise swaps (one cell out, one admissible cell in, same
/// component) near each component's threshold. Updates `potential` in place
/// and returns the number of swaps applied.
inline int polish_patches(std::vector<Patch>& patches, ScalarField& potential, const PoissonSolver& solver,
                          Objective objective, double tolerance, int max_swaps) {
    const Grid& g = solver.grid();
    const double h2 = g.cell_measure();
    const double sigma = objective == Objective::minimize ? 1.0 : -1.0;
    GreenColumns green(solver);
    int swaps = 0;
    while (swaps < max_swaps) {
        double best_gain = -tolerance;
        int best_p = -1, best_out = -1, best_in = -1;
        for (std::size_t p = 0; p < patches.size(); ++p) {
            Patch& patch = patches[p];
            const bool lowest = selects_lowest(patch.spec.sign, objective);
            const auto m = patch.cells.size();
            const std::size_t window = 8 + 2 * static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(m))));
            // rank: smaller is "better" for the oracle orientation
            auto rank = [&](int c) { return lowest ? potential[c] : -potential[c]; };

            std::vector<int> out = patch.cells;
            std::vector<int> in;
            {
                const std::vector<int> admissible = patch.spec.admissible_cells();
                std::set_difference(admissible.begin(), admissible.end(), patch.cells.begin(), patch.cells.end(),
                                    std::back_inserter(in));
            }
            auto keep = [&](std::vector<int>& v, std::size_t k, bool worst) {
                k = std::min(k, v.size());
                std::partial_sort(v.begin(), v.begin() + static_cast<long>(k), v.end(), [&](int a, int b) {
                    const double ra = rank(a), rb = rank(b);
                    if (ra != rb) return worst ? ra > rb : ra < rb;
                    return a < b;
                });
                v.resize(k);
            };
            keep(out, window, true);
            keep(in, window, false);

            const double sk = patch.spec.sign * patch.spec.kappa;
            const double kk = patch.spec.kappa * patch.spec.kappa;
            for (int i : out) {
                const double kii = green.entry(i, i);
                for (int j : in) {
                    const double kjj = green.entry(j, j);
                    const double kij = green.entry(i, j);
                    const double delta = h2 * sk * (potential[j] - potential[i]) + 0.5 * h2 * kk * (kii + kjj - 2.0 * kij);
                    const double gain = sigma * delta;
                    if (gain < best_gain) {
                        best_gain = gain;
                        best_p = static_cast<int>(p);
                        best_out = i;
                        best_in = j;
                    }
                }
            }
        }
        if (best_p < 0) break;
        Patch& patch = patches[best_p];
        const double sk = patch.spec.sign * patch.spec.kappa;
        const Eigen::VectorXd delta_psi = sk * (green.column(best_in) - green.column(best_out));
        const auto& cells = g.interior_cells();
        for (std::size_t k = 0; k < cells.size(); ++k) potential[cells[k]] += delta_psi[static_cast<Eigen::Index>(k)];
        auto pos = std::lower_bound(patch.cells.begin(), patch.cells.end(), best_out);
        patch.cells.erase(pos);
        patch.cells.insert(std::lower_bound(patch.cells.begin(), patch.cells.end(), best_in), best_in);
        ++swaps;
    }
    return swaps;
}

/// Vertex of the iterate's minimal face that is worst for the oracle: every
/// full cell plus the fractional cells with the worst potential.
inline Patch away_vertex(const ScalarField& part, const ClassSpec& spec, const ScalarField& potential,
                         Objective objective) {
    const auto m = static_cast<std::size_t>(spec.cell_budget());
    const bool lowest = selects_lowest(spec.sign, objective);
    std::vector<int> full, fractional;
    for (int c : spec.admissible_cells()) {
        const double fill = part[c] * spec.sign / spec.kappa;
        if (fill >= 1.0) full.push_back(c);
        else if (fill > 0.0) fractional.push_back(c);
    }
    const std::size_t need = m > full.size() ? m - full.size() : 0;
    std::partial_sort(fractional.begin(), fractional.begin() + static_cast<long>(std::min(need, fractional.size())),
                      fractional.end(), [&](int a, int b) {
                          if (potential[a] != potential[b]) return lowest ? potential[a] > potential[b] : potential[a] < potential[b];
                          return a < b;
                      });
    fractional.resize(std::min(need, fractional.size()));
    full.insert(full.end(), fractional.begin(), fractional.end());
    std::sort(full.begin(), full.end());
    return Patch{spec, std::move(full)};
}

/// Exact minimizer of E on the face of the current iterate: cells at 0 or
/// kappa stay fixed, fractional cells are free subject to each component's
/// mass. Stationarity makes the potential equal to a per-component constant
/// mu_p on the free cells, which gives one sparse linear system in (psi, mu).
/// The iterate moves toward that minimizer as far as the box allows. Returns
/// false when there is nothing to do or the system is singular.
inline bool face_step(std::vector<ScalarField>& parts, const std::vector<ClassSpec>& components, ScalarField& omega,
                      ScalarField& psi, const HarmonicBackground& q, const PoissonSolver& solver) {
    const Grid& g = solver.grid();
    const auto& cells = g.interior_cells();
    const auto n = static_cast<Eigen::Index>(cells.size());
    std::vector<int> owner(g.size(), -1);
    std::vector<Eigen::Index> mu_index(components.size(), -1);
    Eigen::Index extra = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        for (int c : components[p].admissible_cells()) {
            const double fill = parts[p][c] * components[p].sign / components[p].kappa;
            if (fill > 0.0 && fill < 1.0) {
                owner[c] = static_cast<int>(p);
                if (mu_index[p] < 0) mu_index[p] = n + extra++;
            }
        }
    }
    if (extra == 0) return false;

    const auto& a = solver.matrix();
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(static_cast<std::size_t>(a.nonZeros()) * 2 + static_cast<std::size_t>(n));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + extra);
    for (std::size_t p = 0; p < parts.size(); ++p) {
        if (mu_index[p] < 0) continue;
        const ClassSpec& spec = components[p];
        double target = spec.sign * spec.kappa * static_cast<double>(spec.cell_budget());
        for (int c : spec.admissible_cells())
            if (owner[c] != static_cast<int>(p)) target -= parts[p][c];
        rhs[mu_index[p]] = target;
    }
    for (Eigen::Index k = 0; k < n; ++k) {
        const int c = cells[static_cast<std::size_t>(k)];
        if (owner[c] >= 0) {
            triplets.emplace_back(k, k, 1.0);
            triplets.emplace_back(k, mu_index[owner[c]], -1.0);
            rhs[k] = -q[c];
            // the free cell's vorticity (A psi)_c enters its component's mass row
            for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it)
                triplets.emplace_back(mu_index[owner[c]], it.row(), it.value());
        } else {
            for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it)
                triplets.emplace_back(k, it.row(), it.value());
            rhs[k] = omega[c];
        }
    }
    Eigen::SparseMatrix<double> system(n + extra, n + extra);
    system.setFromTriplets(triplets.begin(), triplets.end());
    system.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
    lu.compute(system);
    if (lu.info() != Eigen::Success) return false;
    const Eigen::VectorXd sol = lu.solve(rhs);
    if (lu.info() != Eigen::Success || !sol.allFinite()) return false;
    const Eigen::VectorXd psi_new = sol.head(n);
    const Eigen::VectorXd omega_new = a * psi_new;

    // ratio test against 0 <= fill <= 1 on the free cells
    double theta = 1.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const int c = cells[static_cast<std::size_t>(k)];
        if (owner[c] < 0) continue;
        const ClassSpec& spec = components[owner[c]];
        const double from = parts[owner[c]][c] * spec.sign / spec.kappa;
        const double to = omega_new[k] * spec.sign / spec.kappa;
        if (to < 0.0) theta = std::min(theta, from / (from - to));
        if (to > 1.0) theta = std::min(theta, (1.0 - from) / (to - from));
    }
    if (!(theta > 0.0)) return false;
    for (Eigen::Index k = 0; k < n; ++k) {
        const int c = cells[static_cast<std::size_t>(k)];
        if (owner[c] < 0) continue;
        const ClassSpec& spec = components[owner[c]];
        double& v = parts[owner[c]][c];
        const double fill = std::clamp((v + theta * (omega_new[k] - v)) * spec.sign / spec.kappa, 0.0, 1.0);
        v = fill < 1e-12 ? 0.0 : fill > 1.0 - 1e-12 ? spec.sign * spec.kappa : fill * spec.sign * spec.kappa;
    }
    omega.values().assign(omega.values().size(), 0.0);
    for (const auto& f : parts) omega += f;
    psi = solver.solve(omega);
    return true;
}

inline ScalarField combine(const std::vector<Patch>& patches, const GridPtr& grid) {
    ScalarField out(grid);
    for (const Patch& p : patches) p.add_to(out);
    return out;
}

}  // namespace detail

/// Conditional gradient (Frank-Wolfe) over the product of the given classes.
/// Each iteration linearizes E at the mixed iterate, whose derivative is the
/// potential G omega + q, asks the bathtub oracle of every component for a
/// vertex, and moves toward the combined vertex with the exact line-search
/// step of the quadratic. Minimization steps are interior; for maximization
/// of the convex energy the exact step is always the full step.
///
/// Stops when the duality gap drops to gap_tol * (|E| + lambda max|q|) or when
/// the oracle returns a vertex it has returned before. The reported patches are
/// the last oracle vertex, refined by pairwise swaps, and re-scored.
inline MultiSolveResult solve_components(const std::vector<ClassSpec>& components, const HarmonicBackground& q,
                                         const PoissonSolver& solver, Objective objective,
                                         const SolverOptions& opts = {}) {
    if (components.empty()) throw UsageError("no vorticity classes to solve over");
    const GridPtr& grid = solver.grid_ptr();
    for (const ClassSpec& c : components) {
        c.validate();
        if (!(c.grid == grid || c.grid->same_layout(*grid))) throw UsageError("class grid differs from solver grid");
    }
    if (opts.max_iters < 1) throw ConfigError("max_iters must be at least 1");
    const double sigma = objective == Objective::minimize ? 1.0 : -1.0;

    double lambda_total = 0.0;
    for (const ClassSpec& c : components) lambda_total += c.effective_lambda();
    const double q_scale = q.field().max_abs();

    // admissibility masks for the confinement check
    std::vector<std::vector<std::uint8_t>> allowed(components.size(), std::vector<std::uint8_t>(grid->size(), 0));
    for (std::size_t p = 0; p < components.size(); ++p)
        for (int c : components[p].admissible_cells()) allowed[p][c] = 1;

    std::vector<ScalarField> parts;
    for (std::size_t p = 0; p < components.size(); ++p) {
        Patch init{components[p], detail::initial_cells(components[p], p, q, objective, opts)};
        parts.push_back(init.omega());
    }
    ScalarField omega(grid);
    for (const auto& f : parts) omega += f;
    ScalarField psi = solver.solve(omega);
    double e = energy_with_psi(omega, psi, q).total;

    MultiSolveResult result;
    result.objective = objective;
    std::set<std::vector<int>> seen;
    std::vector<Patch> vertices;

    auto oracle = [&](const ScalarField& potential) {
        std::vector<Patch> out;
        for (const ClassSpec& c : components) out.push_back(bathtub_select(potential, c, objective).first);
        return out;
    };
    auto vertex_key = [](const std::vector<Patch>& v) {
        std::vector<int> key;
        for (const Patch& p : v) {
            key.insert(key.end(), p.cells.begin(), p.cells.end());
            key.push_back(-1);
        }
        return key;
    };

    for (int it = 0;; ++it) {
        const ScalarField potential = psi + q.field();
        vertices = oracle(potential);
        const ScalarField vertex = detail::combine(vertices, grid);
        const double gap = sigma * (inner(potential, omega) - inner(potential, vertex));
        result.energy_trace.push_back(e);
        result.gap_trace.push_back(gap);
        const double scale = std::max(std::abs(e) + lambda_total * q_scale, 1e-300);
        if (gap <= opts.gap_tol * scale) {
            result.converged = true;
            result.stop_reason = StopReason::gap;
            break;
        }
        if (objective == Objective::maximize && !seen.insert(vertex_key(vertices)).second) {
            result.converged = true;
            result.stop_reason = StopReason::vertex_cycle;
            break;
        }
        if (it >= opts.max_iters) {
            result.stop_reason = StopReason::max_iters;
            break;
        }
        result.iterations = it + 1;

        if (objective == Objective::maximize) {
            // full step: the exact maximizer of a convex quadratic on [0, 1]
            // sits at an endpoint, and the positive gap rules out t = 0
            const ScalarField psi_vertex = solver.solve(vertex);
            const ScalarField direction = vertex - omega;
            const double slope = inner(potential, direction);
            const double curvature = inner(direction, psi_vertex - psi);
            const double t = slope + 0.5 * curvature < 0.0 ? 0.0 : 1.0;
            for (std::size_t p = 0; p < parts.size(); ++p) {
                ScalarField v(grid);
                vertices[p].add_to(v);
                parts[p] += t * (v - parts[p]);
            }
            omega += t * direction;
            psi += t * (psi_vertex - psi);
            e += t * slope + 0.5 * t * t * curvature;
        } else {
            // pairwise step: trade the away vertex of the iterate's minimal
            // face for the oracle vertex
            ScalarField direction(grid);
            double step_max = 1.0;
            std::vector<Patch> aways;
            for (std::size_t p = 0; p < parts.size(); ++p) {
                const double kappa = components[p].kappa;
                const Patch& away = aways.emplace_back(detail::away_vertex(parts[p], components[p], potential, objective));
                ScalarField d(grid);
                vertices[p].add_to(d);
                away.add_to(d, -1.0);
                for (int c : grid->interior_cells()) {
                    if (d[c] == 0.0) continue;
                    const double fill = std::abs(parts[p][c]) / kappa;
                    const bool entering = d[c] * components[p].sign > 0.0;
                    step_max = std::min(step_max, entering ? 1.0 - fill : fill);
                }
                direction += d;
            }
            const ScalarField psi_direction = solver.solve(direction);
            const double slope = inner(potential, direction);
            const double curvature = inner(direction, psi_direction);
            double t = step_max;
            if (curvature > 0.0) t = std::clamp(-slope / curvature, 0.0, step_max);
            for (std::size_t p = 0; p < parts.size(); ++p) {
                const double kappa = components[p].kappa;
                const double sk = components[p].sign * kappa;
                const Patch& away = aways[p];
                for (int c : vertices[p].cells) parts[p][c] += t * sk;
                for (int c : away.cells) parts[p][c] -= t * sk;
                // snap round-off at the box bounds
                for (int c : grid->interior_cells()) {
                    double& v = parts[p][c];
                    const double fill = std::clamp(v * components[p].sign / kappa, 0.0, 1.0);
                    v = fill < 1e-12 ? 0.0 : fill > 1.0 - 1e-12 ? sk : fill * sk;
                    if (v != 0.0 && !allowed[p][c]) result.confined_every_iterate = false;
                }
            }
            omega.values().assign(omega.values().size(), 0.0);
            for (const auto& f : parts) omega += f;
            if ((it + 1) % opts.face_step_every == 0 && detail::face_step(parts, components, omega, psi, q, solver)) {
                e = energy_with_psi(omega, psi, q).total;
            } else if ((it + 1) % 25 == 0) {
                psi = solver.solve(omega);
                e = energy_with_psi(omega, psi, q).total;
            } else {
                psi += t * psi_direction;
                e += t * slope + 0.5 * t * t * curvature;
            }
        }
    }
    result.mixed_energy = e;

    std::vector<Patch> patches = vertices;
    ScalarField potential = solver.solve(detail::combine(patches, grid)) + q.field();
    if (opts.polish) {
        const double scale = std::abs(e) + lambda_total * q_scale;
        result.polish_swaps = detail::polish_patches(patches, potential, solver, objective, 1e-13 * std::max(scale, 1e-300),
                                                     opts.max_polish_swaps);
    }

    result.omega = detail::combine(patches, grid);
    result.psi = solver.solve(result.omega);
    result.potential = result.psi + q.field();
    result.energy = energy_with_psi(result.omega, result.psi, q);
    result.fixed_point = true;
    double final_gap = 0.0;
    for (const Patch& patch : patches) {
        auto [vertex, bracket] = bathtub_select(result.potential, patch.spec, objective);
        result.multipliers.push_back(bracket);
        if (vertex.cells != patch.cells) result.fixed_point = false;
        final_gap += sigma * (inner(result.potential, patch.omega()) - inner(result.potential, vertex.omega()));
    }
    result.final_gap = final_gap;
    result.patches = std::move(patches);
    return result;
}

/// Minimizes (or maximizes) E over one class.
inline SolveResult solve(const ClassSpec& spec, const HarmonicBackground& q, const PoissonSolver& solver,
                         Objective objective = Objective::minimize, const SolverOptions& opts = {}) {
    MultiSolveResult r = solve_components({spec}, q, solver, objective, opts);
    SolveResult out;
    out.objective = objective;
    out.patch = std::move(r.patches.front());
    out.psi = std::move(r.psi);
    out.potential = std::move(r.potential);
    out.multiplier_bracket = r.multipliers.front();
    out.energy = r.energy;
    out.gap_trace = std::move(r.gap_trace);
    out.energy_trace = std::move(r.energy_trace);
    out.iterations = r.iterations;
    out.converged = r.converged;
    out.stop_reason = r.stop_reason;
    out.final_gap = r.final_gap;
    out.mixed_energy = r.mixed_energy;
    out.fixed_point = r.fixed_point;
    out.polish_swaps = r.polish_swaps;
    return out;
}

/// Multiplier bracket of a converged solve.
inline MultiplierBracket extract_multiplier(const SolveResult& result) {
    if (!result.converged) throw UsageError("extract_multiplier called on an unconverged result");
    return result.multiplier_bracket;
}

/// Total velocity perp-grad(psi + q).
inline VectorField velocity_field(const ScalarField& psi, const HarmonicBackground& q) {
    return perp_gradient(psi + q.field());
}

inline VectorField velocity_field(const SolveResult& result, const HarmonicBackground& q) {
    return velocity_field(result.psi, q);
}

}  // namespace vpatch
