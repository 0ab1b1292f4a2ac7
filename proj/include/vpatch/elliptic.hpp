#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "vpatch/errors.hpp"
#include "vpatch/grid.hpp"

namespace vpatch {

/// Dirichlet Green operator on a masked grid: solves -Laplacian_h psi = omega
/// over interior cells with psi = 0 at every exterior (or out-of-array)
/// stencil neighbor. The matrix is factored once with a sparse Cholesky and
/// reused; solve() is const and may be called concurrently.
class PoissonSolver {
public:
    using SparseMatrix = Eigen::SparseMatrix<double>;

    explicit PoissonSolver(GridPtr grid, double tolerance = 1e-10) : grid_(std::move(grid)), tolerance_(tolerance) {
        const Grid& g = *grid_;
        const auto& cells = g.interior_cells();
        unknown_.assign(g.size(), -1);
        for (int k = 0; k < static_cast<int>(cells.size()); ++k) unknown_[cells[k]] = k;

        const double inv_h2 = 1.0 / (g.h() * g.h());
        std::vector<Eigen::Triplet<double>> triplets;
        triplets.reserve(cells.size() * 5);
        const auto stencil = g.stencil();
        for (int k = 0; k < static_cast<int>(cells.size()); ++k) {
            const int i = g.ix(cells[k]), j = g.iy(cells[k]);
            triplets.emplace_back(k, k, static_cast<double>(stencil.size()) * inv_h2);
            for (auto [dx, dy] : stencil)
                if (g.interior(i + dx, j + dy)) triplets.emplace_back(k, unknown_[g.index(i + dx, j + dy)], -inv_h2);
        }
        matrix_.resize(static_cast<Eigen::Index>(cells.size()), static_cast<Eigen::Index>(cells.size()));
        matrix_.setFromTriplets(triplets.begin(), triplets.end());
        matrix_.makeCompressed();

        factor_.compute(matrix_);
        factored_ = factor_.info() == Eigen::Success;
        if (!factored_) {
            cg_.setTolerance(tolerance_);
            cg_.setMaxIterations(10 * static_cast<int>(cells.size()));
            cg_.compute(matrix_);
        }
    }

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const { return grid_; }
    double tolerance() const noexcept { return tolerance_; }
    bool uses_factorization() const noexcept { return factored_; }
    const SparseMatrix& matrix() const noexcept { return matrix_; }

    /// psi = G omega. Throws NumericalError if the relative residual exceeds
    /// the tolerance.
    ScalarField solve(const ScalarField& omega) const {
        Eigen::VectorXd rhs = gather(omega);
        Eigen::VectorXd x = solve_vector(rhs);
        return scatter(x);
    }

    /// Same as solve() on packed interior vectors.
    Eigen::VectorXd solve_vector(const Eigen::VectorXd& rhs) const {
        const double rhs_norm = rhs.norm();
        if (rhs_norm == 0.0) return Eigen::VectorXd::Zero(rhs.size());
        Eigen::VectorXd x = factored_ ? Eigen::VectorXd(factor_.solve(rhs)) : Eigen::VectorXd(cg_.solve(rhs));
        double residual = (matrix_ * x - rhs).norm() / rhs_norm;
        if (residual > tolerance_ && factored_) {
            // one step of iterative refinement before giving up
            x += factor_.solve(rhs - matrix_ * x);
            residual = (matrix_ * x - rhs).norm() / rhs_norm;
        }
        if (!(residual <= tolerance_))
            throw NumericalError("Poisson solve missed tolerance (relative residual " + std::to_string(residual) + ")",
                                 residual);
        return x;
    }

    /// -Laplacian_h f with zero exterior values.
    ScalarField apply_laplacian(const ScalarField& f) const { return scatter(matrix_ * gather(f)); }

    Eigen::VectorXd gather(const ScalarField& f) const {
        const auto& cells = grid_->interior_cells();
        Eigen::VectorXd v(static_cast<Eigen::Index>(cells.size()));
        for (std::size_t k = 0; k < cells.size(); ++k) v[static_cast<Eigen::Index>(k)] = f[cells[k]];
        return v;
    }

    ScalarField scatter(const Eigen::VectorXd& v) const {
        ScalarField out(grid_);
        const auto& cells = grid_->interior_cells();
        for (std::size_t k = 0; k < cells.size(); ++k) out[cells[k]] = v[static_cast<Eigen::Index>(k)];
        return out;
    }

    /// Packed position of an interior cell, -1 for exterior cells.
    int unknown_of(int cell) const { return unknown_[cell]; }

private:
    GridPtr grid_;
    double tolerance_;
    std::vector<int> unknown_;
    SparseMatrix matrix_;
    Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>> factor_;
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg_;
    bool factored_ = false;
};

inline ScalarField apply_green(const PoissonSolver& solver, const ScalarField& omega) { return solver.solve(omega); }

enum class BackgroundKind { linear, quadratic, custom_boundary };

/// Dirichlet data for custom backgrounds, keyed by the (ix, iy) position of
/// each exterior stencil neighbor of the domain (positions may lie outside the
/// array).
using BoundarySamples = std::map<std::pair<int, int>, double>;

/// Harmonic background stream function q, stored at cell centers.
///   linear:    q = a x + b y + c
///   quadratic: q = x^2 - y^2
///   custom:    discrete Laplace solve from boundary samples
/// Every kind is multiplied by `scale` (scale = -1 gives the mirrored problem).
class HarmonicBackground {
public:
    static HarmonicBackground linear(GridPtr grid, double a, double b, double c = 0.0, double scale = 1.0) {
        HarmonicBackground q(BackgroundKind::linear, grid, scale);
        q.a_ = a;
        q.b_ = b;
        q.c_ = c;
        q.field_ = ScalarField::from_function(grid, [&](Point p) { return q.value_at(p); });
        return q;
    }

    static HarmonicBackground quadratic(GridPtr grid, double scale = 1.0) {
        HarmonicBackground q(BackgroundKind::quadratic, grid, scale);
        q.field_ = ScalarField::from_function(grid, [&](Point p) { return q.value_at(p); });
        return q;
    }

    static HarmonicBackground custom_boundary(const PoissonSolver& solver, const BoundarySamples& samples,
                                              double scale = 1.0) {
        const Grid& g = solver.grid();
        HarmonicBackground q(BackgroundKind::custom_boundary, solver.grid_ptr(), scale);
        ScalarField rhs(solver.grid_ptr());
        const double inv_h2 = 1.0 / (g.h() * g.h());
        for (int idx : g.interior_cells()) {
            const int i = g.ix(idx), j = g.iy(idx);
            for (auto [dx, dy] : g.stencil()) {
                if (g.interior(i + dx, j + dy)) continue;
                const auto it = samples.find({i + dx, j + dy});
                if (it == samples.end())
                    throw ConfigError("missing boundary sample at cell (" + std::to_string(i + dx) + ", " +
                                      std::to_string(j + dy) + ")");
                rhs[idx] += it->second * inv_h2;
            }
        }
        q.field_ = solver.solve(rhs);
        q.field_ *= scale;
        q.samples_ = samples;
        return q;
    }

    /// Samples `f` at the center of every exterior stencil neighbor.
    static BoundarySamples sample_boundary(const Grid& g, const std::function<double(Point)>& f) {
        BoundarySamples out;
        for (int idx : g.interior_cells()) {
            const int i = g.ix(idx), j = g.iy(idx);
            for (auto [dx, dy] : g.stencil())
                if (!g.interior(i + dx, j + dy)) out[{i + dx, j + dy}] = f(g.center(i + dx, j + dy));
        }
        return out;
    }

    BackgroundKind kind() const noexcept { return kind_; }
    double scale() const noexcept { return scale_; }
    const ScalarField& field() const noexcept { return field_; }
    double operator[](int idx) const { return field_[idx]; }

    /// Formula value for analytic kinds; nearest interior cell for custom.
    double value_at(Point p) const {
        switch (kind_) {
            case BackgroundKind::linear: return scale_ * (a_ * p.x + b_ * p.y + c_);
            case BackgroundKind::quadratic: return scale_ * (p.x * p.x - p.y * p.y);
            case BackgroundKind::custom_boundary: break;
        }
        return field_[nearest_interior_cell(field_.grid(), p)];
    }

    /// The same background with opposite sign.
    HarmonicBackground negated() const {
        HarmonicBackground q = *this;
        q.scale_ = -scale_;
        q.field_ *= -1.0;
        return q;
    }

    double min_value() const { return extreme(true); }
    double max_value() const { return extreme(false); }

private:
    HarmonicBackground(BackgroundKind kind, GridPtr grid, double scale)
        : kind_(kind), scale_(scale), field_(std::move(grid)) {}

    double extreme(bool lowest) const {
        const auto& cells = field_.grid().interior_cells();
        double v = field_[cells.front()];
        for (int idx : cells) v = lowest ? std::min(v, field_[idx]) : std::max(v, field_[idx]);
        return v;
    }

    BackgroundKind kind_;
    double scale_ = 1.0;
    double a_ = 0.0, b_ = 0.0, c_ = 0.0;
    ScalarField field_;
    BoundarySamples samples_;
};

/// Method-of-images Green's function of the unit disk,
/// -(1/2pi) [ ln|x - y| - ln(|y| |x - y*|) ],  y* = y / |y|^2.
inline double analytic_disk_green(Point x, Point y) {
    const double d = distance(x, y);
    if (d == 0.0) throw UsageError("analytic_disk_green is singular at x = y");
    const double ry = norm(y);
    // |y| |x - y*| = | |y| x - y/|y| |, which tends to 1 as y -> 0
    double image = 1.0;
    if (ry > 0.0) image = norm(ry * x - (1.0 / ry) * y);
    return -(std::log(d) - std::log(image)) / (2.0 * std::numbers::pi);
}

}  // namespace vpatch
