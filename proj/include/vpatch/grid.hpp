#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <utility>
#include <variant>
#include <vector>

#include "vpatch/errors.hpp"

namespace vpatch {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend Point operator*(double s, Point a) { return {s * a.x, s * a.y}; }
    friend bool operator==(Point a, Point b) = default;
};

inline double norm(Point p) { return std::hypot(p.x, p.y); }
inline double distance(Point a, Point b) { return norm(a - b); }

/// Axis-aligned rectangle with lower-left corner `origin`.
struct Rectangle {
    double width = 1.0;
    double height = 1.0;
    Point origin{};
};

struct Disk {
    Point center{};
    double radius = 1.0;
};

/// The unit-thickness strip (origin, origin + length) used by the 1D problems.
/// Grids of this kind have ny = 1 and use a 3-point Laplacian.
struct Interval {
    double length = 1.0;
    double origin = 0.0;
};

using DomainShape = std::variant<Rectangle, Disk, Interval>;

/// Masked uniform cell-centered lattice. Cells are indexed row-major,
/// index = iy * nx + ix, which is also the lexicographic (row, column) order
/// used for every tie-break in the library.
class Grid {
public:
    Grid(DomainShape shape, int nx, int ny, Point lower_left, double h, std::vector<std::uint8_t> mask)
        : shape_(shape), nx_(nx), ny_(ny), x0_(lower_left.x), y0_(lower_left.y), h_(h), mask_(std::move(mask)) {
        interior_.reserve(mask_.size());
        for (int i = 0; i < static_cast<int>(mask_.size()); ++i)
            if (mask_[i]) interior_.push_back(i);
    }

    int nx() const noexcept { return nx_; }
    int ny() const noexcept { return ny_; }
    double x0() const noexcept { return x0_; }
    double y0() const noexcept { return y0_; }
    double h() const noexcept { return h_; }
    double cell_measure() const noexcept { return h_ * h_; }
    const DomainShape& shape() const noexcept { return shape_; }
    bool is_1d() const noexcept { return std::holds_alternative<Interval>(shape_); }

    int size() const noexcept { return nx_ * ny_; }
    int index(int ix, int iy) const noexcept { return iy * nx_ + ix; }
    int ix(int idx) const noexcept { return idx % nx_; }
    int iy(int idx) const noexcept { return idx / nx_; }

    bool in_array(int ix, int iy) const noexcept { return ix >= 0 && iy >= 0 && ix < nx_ && iy < ny_; }
    /// Out-of-array positions count as exterior.
    bool interior(int ix, int iy) const noexcept { return in_array(ix, iy) && mask_[index(ix, iy)] != 0; }
    bool interior(int idx) const noexcept { return mask_[idx] != 0; }

    Point center(int ix, int iy) const noexcept { return {x0_ + (ix + 0.5) * h_, y0_ + (iy + 0.5) * h_}; }
    Point center(int idx) const noexcept { return center(ix(idx), iy(idx)); }

    const std::vector<std::uint8_t>& mask() const noexcept { return mask_; }
    /// Interior cell indices in increasing (lexicographic) order.
    const std::vector<int>& interior_cells() const noexcept { return interior_; }
    double domain_measure() const noexcept { return cell_measure() * static_cast<double>(interior_.size()); }

    /// Neighbor offsets of the Laplacian stencil (2 in 1D, 4 in 2D).
    std::vector<std::array<int, 2>> stencil() const {
        if (is_1d()) return {{-1, 0}, {1, 0}};
        return {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    }

    /// Interior cell with at least one exterior stencil neighbor.
    bool mask_adjacent(int idx) const {
        if (!interior(idx)) return false;
        const int i = ix(idx), j = iy(idx);
        for (auto [dx, dy] : stencil())
            if (!interior(i + dx, j + dy)) return true;
        return false;
    }

    bool same_layout(const Grid& other) const noexcept {
        return nx_ == other.nx_ && ny_ == other.ny_ && x0_ == other.x0_ && y0_ == other.y0_ && h_ == other.h_ &&
               mask_ == other.mask_;
    }

private:
    DomainShape shape_;
    int nx_;
    int ny_;
    double x0_;
    double y0_;
    double h_;
    std::vector<std::uint8_t> mask_;
    std::vector<int> interior_;
};

using GridPtr = std::shared_ptr<const Grid>;

namespace detail {

/// Counts 4-connected components of cells equal to `value` on the array padded
/// by one ring of exterior cells.
inline int count_components(const Grid& g, std::uint8_t value) {
    const int px = g.nx() + 2, py = g.ny() + 2;
    auto cell_value = [&](int i, int j) -> std::uint8_t {
        return g.interior(i - 1, j - 1) ? 1 : 0;
    };
    std::vector<std::uint8_t> seen(static_cast<std::size_t>(px) * py, 0);
    std::vector<int> stack;
    int components = 0;
    for (int j = 0; j < py; ++j) {
        for (int i = 0; i < px; ++i) {
            const int start = j * px + i;
            if (seen[start] || cell_value(i, j) != value) continue;
            ++components;
            seen[start] = 1;
            stack.push_back(start);
            while (!stack.empty()) {
                const int cur = stack.back();
                stack.pop_back();
                const int ci = cur % px, cj = cur / px;
                const int nb[4][2] = {{ci - 1, cj}, {ci + 1, cj}, {ci, cj - 1}, {ci, cj + 1}};
                for (auto& n : nb) {
                    if (n[0] < 0 || n[1] < 0 || n[0] >= px || n[1] >= py) continue;
                    const int k = n[1] * px + n[0];
                    if (!seen[k] && cell_value(n[0], n[1]) == value) {
                        seen[k] = 1;
                        stack.push_back(k);
                    }
                }
            }
        }
    }
    return components;
}

}  // namespace detail

/// Builds the masked lattice for `shape`. The longest bounding-box side is
/// split into `resolution` cells.
inline GridPtr build_grid(const DomainShape& shape, int resolution) {
    if (resolution < 4) throw ConfigError("grid resolution must be at least 4");
    std::shared_ptr<Grid> grid;
    if (const auto* r = std::get_if<Rectangle>(&shape)) {
        if (!(r->width > 0.0 && r->height > 0.0)) throw ConfigError("rectangle sides must be positive");
        const double h = std::max(r->width, r->height) / resolution;
        const int nx = static_cast<int>(std::lround(r->width / h));
        const int ny = static_cast<int>(std::lround(r->height / h));
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(nx) * ny, 0);
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i) {
                const double cx = r->origin.x + (i + 0.5) * h, cy = r->origin.y + (j + 0.5) * h;
                const bool inside = cx > r->origin.x && cx < r->origin.x + r->width && cy > r->origin.y &&
                                    cy < r->origin.y + r->height;
                mask[static_cast<std::size_t>(j) * nx + i] = inside ? 1 : 0;
            }
        grid = std::make_shared<Grid>(shape, nx, ny, r->origin, h, std::move(mask));
    } else if (const auto* d = std::get_if<Disk>(&shape)) {
        if (!(d->radius > 0.0)) throw ConfigError("disk radius must be positive");
        const double h = 2.0 * d->radius / resolution;
        const int n = resolution;
        const Point ll{d->center.x - d->radius, d->center.y - d->radius};
        std::vector<std::uint8_t> mask(static_cast<std::size_t>(n) * n, 0);
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const Point c{ll.x + (i + 0.5) * h, ll.y + (j + 0.5) * h};
                mask[static_cast<std::size_t>(j) * n + i] = distance(c, d->center) < d->radius ? 1 : 0;
            }
        grid = std::make_shared<Grid>(shape, n, n, ll, h, std::move(mask));
    } else {
        const auto& iv = std::get<Interval>(shape);
        if (!(iv.length > 0.0)) throw ConfigError("interval length must be positive");
        const double h = iv.length / resolution;
        grid = std::make_shared<Grid>(shape, resolution, 1, Point{iv.origin, -0.5 * h}, h,
                                      std::vector<std::uint8_t>(resolution, 1));
    }
    if (grid->interior_cells().empty()) throw ConfigError("domain mask has no interior cells");
    // Supported shapes always give one interior and one exterior component.
    assert(detail::count_components(*grid, 1) == 1);
    assert(detail::count_components(*grid, 0) == 1);
    return grid;
}

inline bool simply_connected(const Grid& g) {
    return detail::count_components(g, 1) == 1 && detail::count_components(g, 0) == 1;
}

/// Real values on grid cells; exterior cells hold 0.
class ScalarField {
public:
    ScalarField() = default;
    explicit ScalarField(GridPtr grid) : grid_(std::move(grid)), values_(grid_->size(), 0.0) {}
    ScalarField(GridPtr grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (static_cast<int>(values_.size()) != grid_->size()) throw UsageError("field size does not match grid");
        for (int i = 0; i < grid_->size(); ++i)
            if (!grid_->interior(i)) values_[i] = 0.0;
    }

    /// Evaluates `f(center)` at every interior cell.
    template <class F>
    static ScalarField from_function(GridPtr grid, F&& f) {
        ScalarField out(grid);
        for (int idx : grid->interior_cells()) out.values_[idx] = f(grid->center(idx));
        return out;
    }

    const Grid& grid() const { return *grid_; }
    const GridPtr& grid_ptr() const noexcept { return grid_; }
    bool empty() const noexcept { return grid_ == nullptr; }

    double operator[](int idx) const noexcept { return values_[idx]; }
    double& operator[](int idx) noexcept { return values_[idx]; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::vector<double>& values() noexcept { return values_; }

    ScalarField& operator+=(const ScalarField& o) {
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

private:
    GridPtr grid_;
    std::vector<double> values_;
};

/// h^2 times the sum over interior cells.
inline double integrate(const ScalarField& f) {
    const Grid& g = f.grid();
    double sum = 0.0;
    for (int idx : g.interior_cells()) sum += f[idx];
    return g.cell_measure() * sum;
}

/// h^2 * sum f*g over interior cells.
inline double inner(const ScalarField& f, const ScalarField& g) {
    const Grid& grid = f.grid();
    double sum = 0.0;
    for (int idx : grid.interior_cells()) sum += f[idx] * g[idx];
    return grid.cell_measure() * sum;
}

inline ScalarField pointwise_product(const ScalarField& a, const ScalarField& b) {
    ScalarField out(a.grid_ptr());
    for (int idx : a.grid().interior_cells()) out[idx] = a[idx] * b[idx];
    return out;
}

struct VectorField {
    ScalarField x;
    ScalarField y;
};

/// Centered differences where both neighbors along an axis are interior,
/// one-sided where only one is, zero otherwise.
inline VectorField gradient(const ScalarField& f) {
    const Grid& g = f.grid();
    VectorField out{ScalarField(f.grid_ptr()), ScalarField(f.grid_ptr())};
    const double h = g.h();
    auto axis_derivative = [&](int i, int j, int dx, int dy) {
        const bool lo = g.interior(i - dx, j - dy), hi = g.interior(i + dx, j + dy);
        const double c = f[g.index(i, j)];
        if (lo && hi) return (f[g.index(i + dx, j + dy)] - f[g.index(i - dx, j - dy)]) / (2.0 * h);
        if (hi) return (f[g.index(i + dx, j + dy)] - c) / h;
        if (lo) return (c - f[g.index(i - dx, j - dy)]) / h;
        return 0.0;
    };
    for (int idx : g.interior_cells()) {
        const int i = g.ix(idx), j = g.iy(idx);
        out.x[idx] = axis_derivative(i, j, 1, 0);
        out.y[idx] = g.is_1d() ? 0.0 : axis_derivative(i, j, 0, 1);
    }
    return out;
}

/// (df/dy, -df/dx).
inline VectorField perp_gradient(const ScalarField& f) {
    VectorField grad = gradient(f);
    VectorField out{std::move(grad.y), std::move(grad.x)};
    out.y *= -1.0;
    return out;
}

/// Staggered Dirichlet form: sum over stencil edges of (f_a - f_b)^2, with
/// exterior neighbors held at zero. Equals integrate(f * (-Laplacian_h f))
/// exactly, so it is the discrete counterpart of the integral of |grad f|^2.
inline double dirichlet_form(const ScalarField& f) {
    const Grid& g = f.grid();
    double sum = 0.0;
    for (int idx : g.interior_cells()) {
        const int i = g.ix(idx), j = g.iy(idx);
        for (auto [dx, dy] : g.stencil()) {
            const int ni = i + dx, nj = j + dy;
            if (g.interior(ni, nj)) {
                // count interior edges once
                if (g.index(ni, nj) > idx) {
                    const double d = f[idx] - f[g.index(ni, nj)];
                    sum += d * d;
                }
            } else {
                sum += f[idx] * f[idx];
            }
        }
    }
    return sum;
}

/// Bilinear interpolation of cell-centered values; exterior cells read 0.
inline double sample(const ScalarField& f, Point p) {
    const Grid& g = f.grid();
    const double fx = (p.x - g.x0()) / g.h() - 0.5, fy = (p.y - g.y0()) / g.h() - 0.5;
    const int i = static_cast<int>(std::floor(fx)), j = static_cast<int>(std::floor(fy));
    const double tx = fx - i, ty = fy - j;
    auto at = [&](int a, int b) { return g.interior(a, b) ? f[g.index(a, b)] : 0.0; };
    if (g.is_1d()) return (1 - tx) * at(i, 0) + tx * at(i + 1, 0);
    return (1 - tx) * (1 - ty) * at(i, j) + tx * (1 - ty) * at(i + 1, j) + (1 - tx) * ty * at(i, j + 1) +
           tx * ty * at(i + 1, j + 1);
}

/// Index of the interior cell whose center is closest to p (ties: lowest index).
inline int nearest_interior_cell(const Grid& g, Point p) {
    int best = -1;
    double best_d = 0.0;
    for (int idx : g.interior_cells()) {
        const double d = distance(g.center(idx), p);
        if (best < 0 || d < best_d) {
            best = idx;
            best_d = d;
        }
    }
    return best;
}

}  // namespace vpatch
