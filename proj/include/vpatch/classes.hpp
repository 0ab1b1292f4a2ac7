#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"

namespace vpatch {

enum class Objective { minimize, maximize };

struct Ball {
    Point center{};
    double radius = 0.0;

    bool contains(Point p) const { return distance(p, center) < radius; }
};

/// One bounded vorticity class: sign * omega in [0, kappa], integral of
/// |omega| equal to lambda, support optionally restricted to a ball.
struct ClassSpec {
    double kappa = 1.0;
    double lambda = 0.0;
    int sign = +1;
    std::optional<Ball> region;
    GridPtr grid;

    /// Interior cells inside the region, in lexicographic order.
    std::vector<int> admissible_cells() const {
        if (!region) return grid->interior_cells();
        std::vector<int> out;
        for (int idx : grid->interior_cells())
            if (region->contains(grid->center(idx))) out.push_back(idx);
        return out;
    }

    double admissible_measure() const {
        return grid->cell_measure() * static_cast<double>(admissible_cells().size());
    }

    /// m = round(lambda / (kappa h^2)).
    long cell_budget() const { return std::lround(lambda / (kappa * grid->cell_measure())); }

    /// kappa * m * h^2, the vorticity amount actually enforced.
    double effective_lambda() const { return kappa * static_cast<double>(cell_budget()) * grid->cell_measure(); }

    /// Throws InfeasibleError unless 0 < lambda < kappa |region| and m >= 1.
    void validate() const {
        if (!grid) throw UsageError("class spec has no grid");
        if (!(kappa > 0.0)) throw InfeasibleError("kappa must be positive");
        if (!(lambda > 0.0)) throw InfeasibleError("lambda must be positive");
        if (sign != 1 && sign != -1) throw InfeasibleError("sign must be +1 or -1");
        const std::size_t admissible = admissible_cells().size();
        const double capacity = kappa * grid->cell_measure() * static_cast<double>(admissible);
        if (!(lambda < capacity))
            throw InfeasibleError("lambda = " + std::to_string(lambda) + " is not below kappa*|D| = " +
                                  std::to_string(capacity));
        const long m = cell_budget();
        if (m < 1) throw InfeasibleError("cell budget rounds to zero; refine the grid or raise lambda");
        if (static_cast<std::size_t>(m) > admissible)
            throw InfeasibleError("cell budget " + std::to_string(m) + " exceeds " + std::to_string(admissible) +
                                  " admissible cells");
    }
};

/// True when the oracle for (sign, objective) picks the lowest potentials.
/// Minimizing a positive patch or maximizing a negative one selects a
/// sub-level set; the other two combinations select a super-level set.
inline bool selects_lowest(int sign, Objective objective) { return (sign > 0) == (objective == Objective::minimize); }

/// Bang-bang vorticity sign * kappa * indicator(cells).
struct Patch {
    ClassSpec spec;
    std::vector<int> cells;  // sorted

    ScalarField omega() const {
        ScalarField out(spec.grid);
        add_to(out);
        return out;
    }

    void add_to(ScalarField& f, double weight = 1.0) const {
        const double v = weight * spec.sign * spec.kappa;
        for (int c : cells) f[c] += v;
    }

    Point centroid() const {
        Point sum{};
        for (int c : cells) sum = sum + spec.grid->center(c);
        return (1.0 / static_cast<double>(cells.size())) * sum;
    }
};

/// Discrete Lagrange multiplier: the potential level separating the patch
/// from its complement. `inner` is the extreme potential over selected cells
/// (sup for sub-level selection, inf for super-level selection); `outer` is
/// the opposite extreme over unselected admissible cells. When every
/// admissible cell is selected, outer == inner.
struct MultiplierBracket {
    double inner = 0.0;
    double outer = 0.0;

    double lo() const { return std::min(inner, outer); }
    double hi() const { return std::max(inner, outer); }
    double midpoint() const { return 0.5 * (inner + outer); }
    double width() const { return std::abs(outer - inner); }
};

/// Linear minimization oracle over the discretized class: picks the m
/// admissible cells with the lowest (or highest) potential, ties broken by
/// cell index. For a positive patch under minimization this minimizes
/// integrate(potential * omega) exactly.
inline std::pair<Patch, MultiplierBracket> bathtub_select(const ScalarField& potential, const ClassSpec& spec,
                                                          Objective objective = Objective::minimize) {
    spec.validate();
    std::vector<int> cells = spec.admissible_cells();
    const auto m = static_cast<std::size_t>(spec.cell_budget());
    const bool lowest = selects_lowest(spec.sign, objective);
    auto before = [&](int a, int b) {
        const double pa = potential[a], pb = potential[b];
        if (pa != pb) return lowest ? pa < pb : pa > pb;
        return a < b;
    };
    std::nth_element(cells.begin(), cells.begin() + static_cast<long>(m) - 1, cells.end(), before);
    MultiplierBracket bracket;
    bracket.inner = potential[cells[m - 1]];
    bracket.outer = bracket.inner;
    if (m < cells.size()) {
        const auto rest = std::min_element(cells.begin() + static_cast<long>(m), cells.end(), before);
        bracket.outer = potential[*rest];
    }
    Patch patch{spec, std::vector<int>(cells.begin(), cells.begin() + static_cast<long>(m))};
    std::sort(patch.cells.begin(), patch.cells.end());
    return {std::move(patch), bracket};
}

/// h^2 |cells|.
inline double measure_of(const Patch& patch) {
    return patch.spec.grid->cell_measure() * static_cast<double>(patch.cells.size());
}

/// h^2 times the size of the cell-set symmetric difference.
inline double symmetric_difference(const Patch& a, const Patch& b) {
    if (!a.spec.grid || !b.spec.grid || !(a.spec.grid == b.spec.grid || a.spec.grid->same_layout(*b.spec.grid)))
        throw UsageError("symmetric_difference needs patches on the same grid");
    std::vector<int> diff;
    std::set_symmetric_difference(a.cells.begin(), a.cells.end(), b.cells.begin(), b.cells.end(),
                                  std::back_inserter(diff));
    return a.spec.grid->cell_measure() * static_cast<double>(diff.size());
}

}  // namespace vpatch
