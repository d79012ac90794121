#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "abp/information.hpp"
#include "abp/kernel.hpp"
#include "abp/potential.hpp"
#include "test_support.hpp"

using namespace abp;
using abp::testing::two_pi;

TEST(PeriodicGrid, Validation)
{
    EXPECT_THROW(PeriodicGrid::line(7), ParameterError);
    EXPECT_THROW(PeriodicGrid::line(0), ParameterError);
    EXPECT_THROW(PeriodicGrid(3, 1, {4, 4}), ParameterError);
    EXPECT_THROW(PeriodicGrid(2, 2, {4, 4}), ParameterError);
    const auto g = PeriodicGrid::plane(8, 4);
    EXPECT_EQ(g.size(), 32u);
    EXPECT_DOUBLE_EQ(g.cell_volume() * static_cast<double>(g.size()), 1.0);
    EXPECT_DOUBLE_EQ(g.coord(0, 0), -0.5);
    EXPECT_DOUBLE_EQ(g.coord(1, 2), 0.0);
}

TEST(GridDensity, Validation)
{
    const auto g = PeriodicGrid::line(8);
    EXPECT_THROW(GridDensity(GridFunction(g, 2.0)), ParameterError);
    GridFunction neg(g, 1.0);
    neg.values[2] = -0.1;
    EXPECT_THROW(GridDensity::normalize(neg), ParameterError);
    EXPECT_THROW(GridDensity::normalize(GridFunction(g, 0.0)), ParameterError);
    EXPECT_NEAR(GridDensity::normalize(GridFunction(g, 3.0)).function().integral(), 1.0, 1e-15);
}

TEST(Marginal, ProductDensity)
{
    const auto g = PeriodicGrid::plane(64, 32);
    auto p = [](double x) { return std::exp(std::cos(two_pi * x)); };
    auto q = [](double y) { return 2.0 + std::sin(two_pi * y); };
    const auto rho = GridDensity::normalize(GridFunction::from(g, [&](double x, double y) { return p(x) * q(y); }));
    const auto expected = GridDensity::normalize(GridFunction::from(g.reaction_grid(), p));
    EXPECT_LE((marginal(rho).function() - expected.function()).sup_norm(), 1e-12);
}

TEST(Marginal, UniformPlane)
{
    const auto m = marginal(GridDensity::uniform(PeriodicGrid::plane(16, 8)));
    EXPECT_EQ(m.grid(), PeriodicGrid::line(16));
    for (double v : m.values()) EXPECT_NEAR(v, 1.0, 1e-14);
}

TEST(Marginal, GibbsMarginalIsExpMinusA)
{
    const auto g = PeriodicGrid::plane(64, 64);
    const auto V = GridFunction::from(g, [](double x, double y) {
        return std::cos(two_pi * x) + 0.7 * std::sin(two_pi * y) * std::cos(two_pi * x) + 0.3 * std::cos(4.0 * std::numbers::pi * y);
    });
    // brute-force oracle for exp(-A) up to normalization
    GridFunction ea(g.reaction_grid());
    for (int i = 0; i < 64; ++i) {
        double s = 0.0;
        for (int j = 0; j < 64; ++j) s += std::exp(-V.values[g.index(i, j)]);
        ea.values[static_cast<std::size_t>(i)] = s;
    }
    const auto expected = GridDensity::normalize(ea);
    EXPECT_LE((marginal(GridDensity::gibbs(V)).function() - expected.function()).sup_norm(), 1e-12);
}

TEST(Entropy, UniformIsZero) { EXPECT_NEAR(entropy(GridDensity::uniform(PeriodicGrid::line(32))), 0.0, 1e-15); }

TEST(Entropy, NarrowKernelMatchesGaussian)
{
    const auto g = PeriodicGrid::line(2048);
    const auto k = GridDensity::normalize(sample_kernel(WrappedGaussianKernel(1e-3), g));
    EXPECT_NEAR(entropy(k), -0.5 * std::log(two_pi * std::exp(1.0) * 1e-3), 1e-3);
}

TEST(Entropy, ZeroCellsContributeNothing)
{
    GridFunction f(PeriodicGrid::line(4), 0.0);
    f.values[0] = 4.0;
    EXPECT_NEAR(entropy(GridDensity(f)), std::log(4.0), 1e-15);
}

TEST(Entropy, JensenAndEpsilonMonotonicity)
{
    std::mt19937_64 rng(5);
    const auto g = PeriodicGrid::line(256);
    for (int trial = 0; trial < 20; ++trial) {
        const auto rho = abp::testing::random_density(g, rng, 1.5);
        double prev = entropy(rho);
        for (double eps : {1e-4, 1e-3, 1e-2, 1e-1, 1.0}) {
            const double h = entropy(convolve(WrappedGaussianKernel(eps), rho));
            EXPECT_LE(h, prev + 1e-14);
            prev = h;
        }
    }
}

TEST(RelativeEntropy, SelfAndNonnegative)
{
    std::mt19937_64 rng(9);
    const auto g = PeriodicGrid::plane(32, 32);
    for (int trial = 0; trial < 20; ++trial) {
        const auto a = abp::testing::random_density(g, rng);
        const auto b = abp::testing::random_density(g, rng);
        EXPECT_NEAR(relative_entropy(a, a), 0.0, 1e-13);
        EXPECT_GE(relative_entropy(a, b), -1e-13);
    }
}

TEST(RelativeEntropy, UniformAgainstGibbsCosine)
{
    const auto g = PeriodicGrid::line(256);
    const auto V = GridFunction::from(g, [](double x) { return std::cos(two_pi * x); });
    // H(1 | e^{-V}/Z) = ln Z + mean V, with Z = I_0(1) and mean V = 0
    EXPECT_NEAR(relative_entropy(GridDensity::uniform(g), GridDensity::gibbs(V)), std::log(std::cyl_bessel_i(0.0, 1.0)), 1e-13);
}

TEST(RelativeEntropy, InfiniteWhenSupportEscapes)
{
    const auto g = PeriodicGrid::line(4);
    GridFunction mu(g, 0.0);
    mu.values[0] = 2.0;
    mu.values[1] = 2.0;
    EXPECT_TRUE(std::isinf(relative_entropy(GridDensity::uniform(g), GridDensity(mu))));
    EXPECT_THROW(relative_entropy(GridDensity::uniform(g), GridDensity::uniform(PeriodicGrid::line(8))), ParameterError);
}

TEST(FisherInformation, Basics)
{
    const auto g = PeriodicGrid::line(256);
    const auto V = GridFunction::from(g, [](double x) { return std::cos(two_pi * x); });
    const auto rho = GridDensity::gibbs(V);
    EXPECT_NEAR(fisher_information(rho, rho), 0.0, 1e-11);
    // mu and mu shifted by a constant in log space
    const auto w = GridFunction::from(g, [](double x) { return std::sin(two_pi * x); });
    GridFunction w3 = w;
    for (double& v : w3.values) v += 3.0;
    EXPECT_NEAR(fisher_information(rho, GridDensity::gibbs(w)), fisher_information(rho, GridDensity::gibbs(w3)), 1e-12);
    // oracle: integral of (2 pi sin)^2 rho
    double oracle = 0.0;
    for (int i = 0; i < 256; ++i) {
        const double s = two_pi * std::sin(two_pi * g.coord(0, i));
        oracle += s * s * rho[static_cast<std::size_t>(i)];
    }
    EXPECT_NEAR(fisher_information(rho, GridDensity::uniform(g)), oracle / 256.0, 1e-10);
}

TEST(FisherInformation, ZeroCells)
{
    const auto g = PeriodicGrid::line(4);
    GridFunction f(g, 0.0);
    f.values[0] = 4.0;
    EXPECT_THROW(fisher_information(GridDensity(f), GridDensity::uniform(g)), DomainError);
}

TEST(Distances, IdenticalAndPinsker)
{
    std::mt19937_64 rng(13);
    const auto g = PeriodicGrid::line(128);
    const auto a = abp::testing::random_density(g, rng);
    const auto d0 = distances(a, a);
    EXPECT_EQ(d0.tv, 0.0);
    EXPECT_EQ(d0.sup, 0.0);
    EXPECT_EQ(d0.l2, 0.0);
    EXPECT_EQ(d0.h1, 0.0);
    EXPECT_EQ(*d0.w1_1d, 0.0);
    for (int trial = 0; trial < 30; ++trial) {
        const auto p = abp::testing::random_density(g, rng, 1.5);
        const auto q = abp::testing::random_density(g, rng, 1.5);
        EXPECT_LE(distances(p, q).tv, std::sqrt(relative_entropy(p, q) / 2.0) + 1e-14);
    }
    EXPECT_FALSE(distances(GridDensity::uniform(PeriodicGrid::plane(8, 8)), GridDensity::uniform(PeriodicGrid::plane(8, 8))).w1_1d);
}

TEST(Distances, TranslateGivesShift)
{
    const auto g = PeriodicGrid::line(512);
    const double s = 5.0 / 512.0;
    auto f = [](double x) { return std::exp(2.0 * std::cos(two_pi * x)); };
    const auto p = GridDensity::normalize(GridFunction::from(g, f));
    const auto q = GridDensity::normalize(GridFunction::from(g, [&](double x) { return f(x - s); }));
    EXPECT_NEAR(*distances(p, q).w1_1d, s, 1.0 / 512.0);
}

TEST(FreeEnergyA, SeparableAndZero)
{
    const auto g = PeriodicGrid::plane(32, 32);
    auto v1 = [](double x) { return std::cos(two_pi * x) + 0.5 * std::sin(4.0 * std::numbers::pi * x); };
    const auto V = GridFunction::from(g, [&](double x, double y) { return v1(x) + std::cos(two_pi * y); });
    const auto A = free_energy_A(V);
    const double c = A.values[0] - v1(g.coord(0, 0));
    for (int i = 0; i < 32; ++i) EXPECT_NEAR(A.values[static_cast<std::size_t>(i)] - v1(g.coord(0, i)), c, 1e-13);
    for (double a : free_energy_A(GridFunction(g, 0.0)).values) EXPECT_NEAR(a, 0.0, 1e-15);
}

TEST(FreeEnergyA, CoupledCosineBessel)
{
    const auto g = PeriodicGrid::plane(64, 64);
    const auto V = GridFunction::from(g, [](double x, double y) { return std::cos(two_pi * x) * std::cos(two_pi * y); });
    const auto A = free_energy_A(V);
    // A = -ln I_0(cos 2 pi x1) + const
    const double c = A.values[0] + std::log(std::cyl_bessel_i(0.0, std::abs(std::cos(two_pi * g.coord(0, 0)))));
    for (int i = 0; i < 64; ++i) {
        const double b = std::cyl_bessel_i(0.0, std::abs(std::cos(two_pi * g.coord(0, i))));
        EXPECT_NEAR(A.values[static_cast<std::size_t>(i)] + std::log(b), c, 1e-12);
    }
    double z = 0.0;
    for (double a : A.values) z += std::exp(-a);
    EXPECT_NEAR(z / 64.0, 1.0, 1e-13);
}

TEST(Potential, BuiltinsAndCache)
{
    const std::vector<double> coef{1.0, 0.5, 0.8};
    const auto p = builtin_potential("coupled-2d", coef, 32);
    EXPECT_EQ(p.grid(), PeriodicGrid::plane(32, 32));
    const auto A = free_energy_A(p);
    EXPECT_LE((A - p.free_energy_A()).sup_norm(), 1e-13);
    // analytic gradient agrees with the spectral grid gradient at nodes
    for (int i = 0; i < 32; i += 5)
        for (int j = 0; j < 32; j += 7) {
            const Potential::Point x{p.grid().coord(0, i), p.grid().coord(1, j)};
            const auto gr = p.gradient_at(x);
            EXPECT_NEAR(gr[0], p.grid_gradient()[0].values[p.grid().index(i, j)], 1e-10);
            EXPECT_NEAR(gr[1], p.grid_gradient()[1].values[p.grid().index(i, j)], 1e-10);
        }
    EXPECT_THROW(builtin_potential("nope", {}, 32), ParameterError);
    EXPECT_THROW(builtin_potential("cosine-1d", coef, 32), ParameterError);
    GridFunction bad(PeriodicGrid::line(8), 0.0);
    bad.values[1] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(Potential::tabulated("bad", bad), ParameterError);
}

TEST(Potential, TabulatedInterpolation)
{
    const auto g = PeriodicGrid::line(16);
    const auto p = Potential::tabulated("lin", GridFunction::from(g, [](double x) { return x; }));
    EXPECT_FALSE(p.is_closed_form());
    EXPECT_NEAR(p.value_at({-0.5 + 1.5 / 16.0, 0.0}), -0.5 + 1.5 / 16.0, 1e-15);
    // wraps across the seam: halfway between x = 0.4375 and x = -0.5
    EXPECT_NEAR(p.value_at({0.46875, 0.0}), 0.5 * (0.4375 - 0.5), 1e-15);
    EXPECT_NEAR(p.value_at({0.46875 - 1.0, 0.0}), 0.5 * (0.4375 - 0.5), 1e-15);
}

TEST(SpectralGradient, BandLimitedExact)
{
    const auto g = PeriodicGrid::plane(32, 32);
    const auto f = GridFunction::from(g, [](double x, double y) { return std::sin(two_pi * 3 * x) * std::cos(two_pi * 2 * y); });
    const auto grad = spectral::gradient(f);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            const double x = g.coord(0, i), y = g.coord(1, j);
            EXPECT_NEAR(grad[0].values[g.index(i, j)], 3 * two_pi * std::cos(two_pi * 3 * x) * std::cos(two_pi * 2 * y), 1e-10);
            EXPECT_NEAR(grad[1].values[g.index(i, j)], -2 * two_pi * std::sin(two_pi * 3 * x) * std::sin(two_pi * 2 * y), 1e-10);
        }
}

TEST(SpectralSynthesis, LineSeries)
{
    const auto g = PeriodicGrid::line(64);
    const std::vector<spectral::Complex> c{{1.0, 0.0}, {0.25, -0.1}, {0.0, 0.05}};
    const auto f = spectral::synthesize_line(g, c);
    for (int i = 0; i < 64; ++i) {
        const double x = g.coord(0, i);
        double v = 1.0;
        for (int k = 1; k < 3; ++k) v += 2.0 * (c[static_cast<std::size_t>(k)] * std::polar(1.0, two_pi * k * x)).real();
        EXPECT_NEAR(f.values[static_cast<std::size_t>(i)], v, 1e-14);
    }
}
