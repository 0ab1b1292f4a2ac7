#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "vpatch/grid.hpp"

using namespace vpatch;

namespace {

GridPtr unit_square(int res) { return build_grid(Rectangle{1.0, 1.0, {0.0, 0.0}}, res); }
GridPtr unit_disk(int res) { return build_grid(Disk{{0.0, 0.0}, 1.0}, res); }

// cells with both x-neighbours and both y-neighbours interior
bool full_stencil(const Grid& g, int idx) {
    const int i = g.ix(idx), j = g.iy(idx);
    return g.interior(i - 1, j) && g.interior(i + 1, j) && g.interior(i, j - 1) && g.interior(i, j + 1);
}

}  // namespace

TEST(BuildGrid, UnitSquareAtResolutionFour) {
    const GridPtr g = unit_square(4);
    EXPECT_EQ(g->interior_cells().size(), 16u);
    EXPECT_DOUBLE_EQ(g->h(), 0.25);
    EXPECT_DOUBLE_EQ(g->cell_measure(), 0.0625);
}

TEST(BuildGrid, AspectRatioSetsCellCounts) {
    const GridPtr g = build_grid(Rectangle{2.0, 1.0, {0.0, 0.0}}, 8);
    EXPECT_DOUBLE_EQ(g->h(), 0.25);
    EXPECT_EQ(g->nx(), 8);
    EXPECT_EQ(g->ny(), 4);
    EXPECT_EQ(g->interior_cells().size(), 32u);
}

TEST(BuildGrid, DiskAreaMatchesPixelCount) {
    const GridPtr g = unit_disk(64);
    // independent count over the same lattice of cell centres
    const double h = 2.0 / 64.0;
    int inside = 0;
    for (int j = 0; j < 64; ++j)
        for (int i = 0; i < 64; ++i) {
            const double x = -1.0 + (i + 0.5) * h, y = -1.0 + (j + 0.5) * h;
            if (x * x + y * y < 1.0) ++inside;
        }
    EXPECT_EQ(static_cast<int>(g->interior_cells().size()), inside);
    EXPECT_NEAR(g->domain_measure(), std::numbers::pi, 0.2);
}

TEST(BuildGrid, MaskIsSimplyConnected) {
    EXPECT_TRUE(simply_connected(*unit_disk(33)));
    EXPECT_TRUE(simply_connected(*unit_square(7)));
    EXPECT_TRUE(simply_connected(*build_grid(Disk{{0.3, -0.2}, 0.5}, 16)));
}

TEST(BuildGrid, RejectsCoarseResolution) {
    EXPECT_THROW(unit_square(3), ConfigError);
    EXPECT_THROW(unit_disk(0), ConfigError);
}

TEST(BuildGrid, IndexIsRowMajor) {
    const GridPtr g = build_grid(Rectangle{2.0, 1.0, {0.0, 0.0}}, 8);
    EXPECT_EQ(g->index(3, 2), 2 * 8 + 3);
    EXPECT_EQ(g->ix(19), 3);
    EXPECT_EQ(g->iy(19), 2);
    EXPECT_FALSE(g->interior(-1, 0));
    EXPECT_FALSE(g->interior(0, 4));
}

TEST(Integrate, ConstantsAndLinearFunctions) {
    const GridPtr g = unit_square(64);
    const ScalarField one = ScalarField::from_function(g, [](Point) { return 1.0; });
    EXPECT_NEAR(integrate(one), 1.0, g->h());
    EXPECT_EQ(integrate(ScalarField(g)), 0.0);
    const ScalarField x = ScalarField::from_function(g, [](Point p) { return p.x; });
    EXPECT_NEAR(integrate(x), 0.5, 1e-2);
}

TEST(Integrate, IsLinear) {
    const GridPtr g = unit_disk(40);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n;
    const ScalarField f = ScalarField::from_function(g, [&](Point) { return n(rng); });
    const ScalarField k = ScalarField::from_function(g, [&](Point) { return n(rng); });
    const double a = 1.7, b = -0.3;
    EXPECT_NEAR(integrate(a * f + b * k), a * integrate(f) + b * integrate(k), 1e-12);
}

TEST(Integrate, RefinementErrorOrders) {
    // smooth f = x^2 + y^2: exact integrals 2/3 on [0,1]^2 and pi/2 on the unit disk
    auto f = [](Point p) { return p.x * p.x + p.y * p.y; };
    const double sq32 = std::abs(integrate(ScalarField::from_function(unit_square(32), f)) - 2.0 / 3.0);
    const double sq64 = std::abs(integrate(ScalarField::from_function(unit_square(64), f)) - 2.0 / 3.0);
    EXPECT_NEAR(sq32 / sq64, 4.0, 0.5);
    const double d64 = std::abs(integrate(ScalarField::from_function(unit_disk(64), f)) - std::numbers::pi / 2.0);
    EXPECT_LT(d64, 4.0 * (2.0 / 64.0));
}

TEST(Gradient, ConstantIsZero) {
    const GridPtr g = unit_disk(24);
    const ScalarField c = ScalarField::from_function(g, [](Point) { return 2.5; });
    const VectorField d = gradient(c);
    for (int idx = 0; idx < static_cast<int>(g->size()); ++idx) {
        EXPECT_EQ(d.x[idx], 0.0);
        EXPECT_EQ(d.y[idx], 0.0);
    }
}

TEST(Gradient, ExactForLinearOnFullStencil) {
    const GridPtr g = unit_disk(32);
    const ScalarField f = ScalarField::from_function(g, [](Point p) { return p.x; });
    const VectorField d = gradient(f);
    for (int idx : g->interior_cells()) {
        const int i = g->ix(idx), j = g->iy(idx);
        if (g->interior(i - 1, j) && g->interior(i + 1, j)) {
            EXPECT_NEAR(d.x[idx], 1.0, 1e-12);
            EXPECT_NEAR(d.y[idx], 0.0, 1e-12);
        }
    }
}

TEST(Gradient, SecondOrderOnFullStencil) {
    auto max_error = [](int res) {
        const GridPtr g = unit_disk(res);
        const ScalarField f = ScalarField::from_function(g, [](Point p) { return p.x * p.x * p.x + p.y * p.y; });
        const VectorField d = gradient(f);
        double err = 0.0;
        for (int idx : g->interior_cells()) {
            if (!full_stencil(*g, idx)) continue;
            const Point c = g->center(idx);
            err = std::max(err, std::hypot(d.x[idx] - 3.0 * c.x * c.x, d.y[idx] - 2.0 * c.y));
        }
        return err;
    };
    const double e64 = max_error(64), e128 = max_error(128);
    EXPECT_NEAR(e64 / e128, 4.0, 0.6);
}

TEST(PerpGradient, LinearFields) {
    const GridPtr g = unit_square(16);
    const VectorField vx = perp_gradient(ScalarField::from_function(g, [](Point p) { return p.x; }));
    const VectorField vy = perp_gradient(ScalarField::from_function(g, [](Point p) { return p.y; }));
    for (int idx : g->interior_cells()) {
        if (!full_stencil(*g, idx)) continue;
        EXPECT_NEAR(vx.x[idx], 0.0, 1e-12);
        EXPECT_NEAR(vx.y[idx], -1.0, 1e-12);
        EXPECT_NEAR(vy.x[idx], 1.0, 1e-12);
        EXPECT_NEAR(vy.y[idx], 0.0, 1e-12);
    }
}

TEST(PerpGradient, OrthogonalToGradient) {
    const GridPtr g = unit_disk(30);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const ScalarField f = ScalarField::from_function(g, [&](Point) { return u(rng); });
    const VectorField d = gradient(f), p = perp_gradient(f);
    for (int idx = 0; idx < static_cast<int>(g->size()); ++idx)
        EXPECT_NEAR(d.x[idx] * p.x[idx] + d.y[idx] * p.y[idx], 0.0, 1e-12);
}

TEST(ScalarField, ExteriorHoldsZero) {
    const GridPtr g = unit_disk(16);
    const ScalarField f = ScalarField::from_function(g, [](Point) { return 1.0; });
    for (int idx = 0; idx < static_cast<int>(g->size()); ++idx)
        if (!g->interior(idx)) { EXPECT_EQ(f[idx], 0.0); }
}

TEST(Sample, BilinearReproducesLinear) {
    const GridPtr g = unit_square(20);
    const ScalarField f = ScalarField::from_function(g, [](Point p) { return 2.0 * p.x - p.y + 0.5; });
    EXPECT_NEAR(sample(f, {0.41, 0.57}), 2.0 * 0.41 - 0.57 + 0.5, 1e-12);
}

TEST(Interval, StripLayout) {
    const GridPtr g = build_grid(Interval{1.0, 0.0}, 64);
    EXPECT_TRUE(g->is_1d());
    EXPECT_EQ(g->ny(), 1);
    EXPECT_EQ(g->interior_cells().size(), 64u);
    EXPECT_DOUBLE_EQ(g->center(0).x, 0.5 / 64.0);
    EXPECT_EQ(g->stencil().size(), 2u);
}
