#include <gtest/gtest.h>

#include <cmath>

#include "dwelldos/analysis.hpp"
#include "dwelldos/oracles.hpp"

using namespace dwelldos;

TEST(Simpson, Constant) {
    EXPECT_DOUBLE_EQ(oracles::quadrature_integral([](double) { return 1.0; }, 0.0, 2.0, 2), 2.0);
    EXPECT_THROW(oracles::quadrature_integral([](double) { return 1.0; }, 0.0, 2.0, 3), Error);
}

TEST(Simpson, SineSquared) {
    auto f = [](double x) { return std::sin(x); };
    EXPECT_NEAR(oracles::quadrature_integral(f, 0.0, pi, 10000), pi / 2.0, 1e-10);
}

TEST(Simpson, FourthOrder) {
    auto f = [](double x) { return std::exp(0.3 * x) * std::cos(2.0 * x); };
    auto exact = [](double b) {
        // integral of e^{0.6x} cos^2(2x) = (e^{0.6x}/2)(1/0.6 + (0.6 cos 4x + 4 sin 4x)/(0.36 + 16))
        return 0.5 * std::exp(0.6 * b) * (1.0 / 0.6 + (0.6 * std::cos(4.0 * b) + 4.0 * std::sin(4.0 * b)) / 16.36);
    };
    double ref = exact(2.0) - exact(0.0);
    double e1 = std::abs(oracles::quadrature_integral(f, 0.0, 2.0, 50) - ref);
    double e2 = std::abs(oracles::quadrature_integral(f, 0.0, 2.0, 100) - ref);
    EXPECT_NEAR(e1 / e2, 16.0, 1.0);
}

TEST(BarrierClosedForm, KnownValue) { EXPECT_NEAR(oracles::rectangular_barrier_transmission(0.5, 1.0, 1.0), 0.62929, 1e-5); }

TEST(Box, Validation) {
    auto free = build_stack({{2.0, 0.0}});
    oracles::BoxSpec ok;
    EXPECT_NO_THROW(ok.validate(free, 1.5, 3.0));
    oracles::BoxSpec short_pad{10.0, 10.0, 0.05, 0.05};
    EXPECT_THROW(short_pad.validate(free, 1.5, 3.0), Error);
    oracles::BoxSpec coarse{150.0, 150.0, 0.2, 0.05};
    EXPECT_THROW(coarse.validate(free, 1.0, 3.0), Error);
}

TEST(Box, TraceAndNormalization) {
    auto st = rectangular_barrier(1.0, 1.0);
    oracles::BoxSpec box{5.0, 5.0, 0.05, 0.1};
    auto spec = oracles::box_spectrum(st, box);
    auto grid = oracles::make_box_grid(st, box);
    double omega_total = 0.0, omega_nodes = 0.0;
    for (std::size_t k = 0; k < spec.energies.size(); ++k) {
        EXPECT_NEAR(spec.box_weight[k], 1.0, 1e-10);
        omega_total += spec.omega_weight[k];
    }
    // completeness: sum over states of the weight in [0, L] is the node count there
    for (std::size_t i = 0; i < grid.x.size(); ++i)
        if (grid.omega_weight[i] > 0.0) {
            double lo = i == 0 ? grid.x[0] - grid.h : grid.x[i - 1];
            double hi = i + 1 == grid.x.size() ? grid.x[i] + grid.h : grid.x[i + 1];
            omega_nodes += grid.omega_weight[i] / (0.5 * (hi - lo));
        }
    EXPECT_NEAR(omega_total, omega_nodes, 1e-6);
}

TEST(Box, FreeStackDos) {
    auto free = build_stack({{2.0, 0.0}});
    oracles::BoxSpec box;   // pads 150, h 0.05, eta 0.05
    box.validate(free, 1.5, 3.0);
    EnergyGrid grid(1.5, 3.0, 4);
    auto dos = oracles::box_dos(free, box, grid);
    for (std::size_t i = 0; i < dos.size(); ++i) {
        double e = grid.energy(i);
        double exact = 2.0 / (2.0 * pi * std::sqrt(e));
        EXPECT_NEAR(dos[i], exact, 0.02 * exact) << e;
    }
}

TEST(Box, BarrierDos) {
    auto st = rectangular_barrier(1.0, 1.0);
    oracles::BoxSpec box;
    box.validate(st, 1.5, 3.0);
    EnergyGrid grid(1.5, 3.0, 4);
    auto dos = oracles::box_dos(st, box, grid);
    for (std::size_t i = 0; i < dos.size(); ++i) {
        double exact = dos_region_1d(st, grid.energy(i));
        EXPECT_NEAR(dos[i], exact, 0.02 * exact) << grid.energy(i);
    }
}

TEST(FiniteDifference, FreeSecondOrder) {
    auto free = build_stack({{2.0, 0.0}});
    double e1 = std::abs(oracles::fd_green(free, {1.0, 1.0, 0.02, 1e-8}, 4.0, 1.0).imag() + 0.25);
    double e2 = std::abs(oracles::fd_green(free, {1.0, 1.0, 0.01, 1e-8}, 4.0, 1.0).imag() + 0.25);
    EXPECT_NEAR(e1 / e2, 4.0, 0.3);
}

TEST(FiniteDifference, BarrierRefinement) {
    auto st = rectangular_barrier(1.0, 1.0);
    cplx exact = greens_function_1d(st, 0.5, 0.5, 0.5);
    double e1 = std::abs(oracles::fd_green(st, {1.0, 1.0, 0.01, 1e-8}, 0.5, 0.5) - exact);
    double e2 = std::abs(oracles::fd_green(st, {1.0, 1.0, 0.005, 1e-8}, 0.5, 0.5) - exact);
    EXPECT_NEAR(e1 / e2, 4.0, 0.5);
}

TEST(Decimation, SingleChannelBandCenter) {
    auto g = oracles::lead_surface_green(1, 0.0);
    EXPECT_NEAR(std::abs(g(0, 0) - cplx(0.0, -1.0)), 0.0, 1e-6);
}
