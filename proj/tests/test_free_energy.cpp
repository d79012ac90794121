#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "abp/free_energy.hpp"
#include "abp/toy_gaussian.hpp"
#include "test_support.hpp"

using namespace abp;
using abp::testing::two_pi;

namespace {

const PeriodicGrid line = PeriodicGrid::line(256);

GridFunction cosine(double c = 1.0)
{
    return GridFunction::from(line, [c](double x) { return c * std::cos(two_pi * x); });
}

GridFunction double_well()
{
    return GridFunction::from(line, [](double x) { return std::cos(2.0 * two_pi * x) + 0.2 * std::cos(two_pi * x); });
}

GridFunction coupled(int n)
{
    return GridFunction::from(PeriodicGrid::plane(n, n), [](double x, double y) {
        return std::cos(two_pi * x) + std::cos(two_pi * y) * std::cos(two_pi * x);
    });
}

AbpParams params(double alpha, double eps, double beta = 1.0) { return AbpParams{alpha, beta, eps, 1}; }

}  // namespace

TEST(AbpParams, Validation)
{
    EXPECT_THROW(params(-1.0, 0.1).validate(), ParameterError);
    EXPECT_THROW(params(1.0, -0.1).validate(), ParameterError);
    EXPECT_THROW(params(1.0, 0.1, 0.0).validate(), ParameterError);
    EXPECT_NO_THROW(params(AbpParams::alpha_infinity, 0.1).validate());
    EXPECT_FALSE(params(1.0, 0.0).kernel());
}

TEST(BiasPotential, Trivial)
{
    const auto u = GridDensity::uniform(line);
    EXPECT_LE(bias_potential(u, params(3.0, 0.01)).sup_norm(), 1e-13);
    std::mt19937_64 rng(1);
    EXPECT_EQ(bias_potential(abp::testing::random_density(line, rng), params(0.0, 0.01)).sup_norm(), 0.0);
}

TEST(BiasPotential, KernelCompositionOracle)
{
    const double eps = 2e-3, delta = 5e-3, alpha = 1.7;
    const auto rho = GridDensity::normalize(sample_kernel(WrappedGaussianKernel(delta), line));
    // oracle: K_eps * ln K_{eps+delta} with the lattice sum for the inner kernel
    const WrappedGaussianKernel outer(eps), inner(eps + delta);
    GridFunction log_inner = GridFunction::from(line, [&](double x) { return std::log(inner.eval_1d(x)); });
    auto oracle = convolve(outer, log_inner);
    oracle *= alpha;
    EXPECT_LE((bias_potential(rho, params(alpha, eps)) - oracle).sup_norm(), 1e-9);
}

TEST(BiasPotential, UnregularizedNeedsPositiveMarginal)
{
    GridFunction f(line, 0.0);
    f.values[0] = 256.0;
    EXPECT_THROW(bias_potential(GridDensity(f), params(1.0, 0.0)), DomainError);
}

TEST(FreeEnergy, Trivial)
{
    EXPECT_NEAR(free_energy(GridDensity::uniform(line), GridFunction(line, 0.0), params(0.0, 0.0)), 0.0, 1e-15);
    std::mt19937_64 rng(2);
    const auto V = cosine(1.3);
    const auto gibbs = GridDensity::gibbs(V);
    double z = 0.0;
    for (double v : V.values) z += std::exp(-v);
    z /= 256.0;
    for (int t = 0; t < 10; ++t) {
        const auto rho = abp::testing::random_density(line, rng);
        EXPECT_NEAR(free_energy(rho, V, params(0.0, 0.01)), relative_entropy(rho, gibbs) - std::log(z), 1e-12);
    }
}

TEST(FreeEnergy, BetaScalesPotential)
{
    std::mt19937_64 rng(4);
    const auto rho = abp::testing::random_density(line, rng);
    EXPECT_NEAR(free_energy(rho, cosine(1.0), params(0.5, 0.01, 2.5)), free_energy(rho, cosine(2.5), params(0.5, 0.01)), 1e-13);
}

TEST(FreeEnergy, Convexity)
{
    std::mt19937_64 rng(3);
    const auto V = double_well();
    for (double alpha : {0.5, 4.0}) {
        const auto p = params(alpha, 0.01);
        for (int t = 0; t < 20; ++t) {
            const auto r0 = abp::testing::random_density(line, rng, 1.5);
            const auto r1 = abp::testing::random_density(line, rng, 1.5);
            for (double lam : {0.25, 0.5, 0.75}) {
                const auto mix = GridDensity::normalize(lam * r0.function() + (1.0 - lam) * r1.function());
                EXPECT_LE(free_energy(mix, V, p), lam * free_energy(r0, V, p) + (1.0 - lam) * free_energy(r1, V, p) + 1e-12);
            }
        }
    }
}

TEST(GammaMap, Trivial)
{
    const auto V = double_well();
    const auto gibbs = GridDensity::gibbs(V);
    EXPECT_LE((gamma_map(GridDensity::uniform(line), V, params(2.0, 0.01)).function() - gibbs.function()).sup_norm(), 1e-12);
    std::mt19937_64 rng(5);
    EXPECT_LE((gamma_map(abp::testing::random_density(line, rng), V, params(0.0, 0.01)).function() - gibbs.function()).sup_norm(), 1e-14);
    const auto g = gamma_map(abp::testing::random_density(line, rng, 3.0), V, params(4.0, 0.01));
    for (double v : g.values()) EXPECT_GT(v, 0.0);
}

TEST(GammaMap, ClosedFormIsNearlyFixedForSmallEpsilon)
{
    const auto V = cosine();
    const double alpha = 2.0;
    const auto r0 = closed_form_minimizer(V, params(alpha, 0.0));
    std::vector<double> ratio;
    double prev = 1e300;
    for (double eps : {1e-2, 3e-3, 1e-3}) {
        const double gap = (gamma_map(r0, V, params(alpha, eps)).function() - r0.function()).sup_norm();
        EXPECT_LT(gap, prev);
        prev = gap;
        ratio.push_back(gap / std::sqrt(eps));
    }
    // O(sqrt eps) envelope: once the kernel is narrow the ratio never grows
    EXPECT_LE(ratio[1], ratio[0]);
    EXPECT_LE(ratio[2], ratio[1]);
}

TEST(ClosedForm, Trivial)
{
    const auto flat = closed_form_minimizer(GridFunction(line, 0.0), params(3.0, 0.0));
    for (double v : flat.values()) EXPECT_NEAR(v, 1.0, 1e-14);
    const auto V = double_well();
    EXPECT_LE((closed_form_minimizer(V, params(0.0, 0.0)).function() - GridDensity::gibbs(V).function()).sup_norm(), 1e-14);
    EXPECT_THROW(closed_form_minimizer(V, params(1.0, 0.01)), ParameterError);
}

TEST(ClosedForm, MarginalOfCoupledPotential)
{
    const auto V = coupled(64);
    const auto A = free_energy_A(V);
    for (double alpha : {0.0, 0.5, 4.0}) {
        GridFunction target(A.grid);
        for (std::size_t i = 0; i < target.values.size(); ++i) target.values[i] = std::exp(-A.values[i] / (alpha + 1.0));
        const auto expected = GridDensity::normalize(target);
        const auto got = marginal(closed_form_minimizer(V, params(alpha, 0.0)));
        EXPECT_LE((got.function() - expected.function()).sup_norm(), 1e-12) << alpha;
    }
    const auto flat = marginal(closed_form_minimizer(V, params(AbpParams::alpha_infinity, 0.0)));
    for (double v : flat.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(FixedPoint, AlphaZeroIsOneStep)
{
    const auto V = double_well();
    const auto res = fixed_point_solve(V, params(0.0, 0.01));
    EXPECT_TRUE(res.report.converged);
    EXPECT_EQ(res.report.iterations, 1);
    EXPECT_LE((res.rho.function() - GridDensity::gibbs(V).function()).sup_norm(), 1e-14);
}

TEST(FixedPoint, UndampedContraction)
{
    FixedPointOptions opt;
    opt.damping = 1.0;
    const auto res = fixed_point_solve(double_well(), params(0.5, 0.01), opt);
    EXPECT_TRUE(res.report.converged);
    EXPECT_LT(res.report.final_residual_sup, 1e-10);
    EXPECT_EQ(res.report.damping_used, 1.0);
    EXPECT_EQ(res.report.residual_trace.size(), static_cast<std::size_t>(res.report.iterations + 1));
}

TEST(FixedPoint, DampingIndependence)
{
    const auto V = double_well();
    FixedPointOptions a, b;
    a.damping = 1.0 / 5.0;
    a.tol = b.tol = 1e-12;
    const auto ra = fixed_point_solve(V, params(4.0, 0.01), a);
    const auto rb = fixed_point_solve(V, params(4.0, 0.01), b);
    ASSERT_TRUE(ra.report.converged);
    ASSERT_TRUE(rb.report.converged);
    EXPECT_DOUBLE_EQ(rb.report.damping_used, 2.0 / 6.0);
    EXPECT_LE((ra.rho.function() - rb.rho.function()).sup_norm(), 1e-9);
}

TEST(FixedPoint, NonConvergenceIsReported)
{
    FixedPointOptions opt;
    opt.max_iter = 3;
    const auto res = fixed_point_solve(double_well(), params(4.0, 0.01), opt);
    EXPECT_FALSE(res.report.converged);
    EXPECT_EQ(res.report.iterations, 3);
    EXPECT_GT(res.report.final_residual_sup, opt.tol);
}

TEST(FixedPoint, Preconditions)
{
    EXPECT_THROW(fixed_point_solve(double_well(), params(1.0, 0.0)), ParameterError);
    FixedPointOptions opt;
    opt.damping = 1.5;
    EXPECT_THROW(fixed_point_solve(double_well(), params(1.0, 0.01), opt), ParameterError);
    EXPECT_THROW(fixed_point_solve(double_well(), params(AbpParams::alpha_infinity, 0.01)), ParameterError);
}

TEST(FixedPoint, IdempotenceAndOptimality)
{
    std::mt19937_64 rng(17);
    const auto V = double_well();
    for (double alpha : {0.5, 2.0}) {
        const auto p = params(alpha, 0.01);
        const auto res = fixed_point_solve(V, p);
        ASSERT_TRUE(res.report.converged);
        EXPECT_LE((gamma_map(res.rho, V, p).function() - res.rho.function()).sup_norm(), 10.0 * res.report.tolerance);
        const double fstar = free_energy(res.rho, V, p);
        for (int t = 0; t < 100; ++t) EXPECT_LE(fstar, free_energy(abp::testing::random_density(line, rng, 1.0), V, p));
    }
}

TEST(FixedPoint, TwoDimensional)
{
    const auto V = coupled(32);
    const auto p = params(1.0, 0.02);
    const auto res = fixed_point_solve(V, p);
    ASSERT_TRUE(res.report.converged);
    // conditional law along x2 is the Gibbs conditional
    const auto& g = V.grid;
    for (int i = 0; i < 32; i += 9) {
        const double r0 = res.rho[g.index(i, 0)] * std::exp(V.values[g.index(i, 0)]);
        for (int j = 1; j < 32; ++j) EXPECT_NEAR(res.rho[g.index(i, j)] * std::exp(V.values[g.index(i, j)]) / r0, 1.0, 1e-9);
    }
}

TEST(FixedPoint, UniformBoundsBelowOne)
{
    const auto V = double_well();
    const double vmax = V.sup_norm();
    for (double alpha : {0.3, 0.8})
        for (double eps : {1e-3, 1e-2, 1e-1}) {
            const auto res = fixed_point_solve(V, params(alpha, eps));
            ASSERT_TRUE(res.report.converged);
            double lo = 1e300, hi = -1e300;
            for (double v : res.rho.values()) {
                lo = std::min(lo, std::log(v));
                hi = std::max(hi, std::log(v));
            }
            EXPECT_LE(hi - lo, 2.0 * vmax / (1.0 - alpha));
        }
}

TEST(FixedPoint, MinimumIncreasesAsEpsilonShrinks)
{
    const auto V = double_well();
    double prev = -1e300;
    for (double eps : {1e-1, 3e-2, 1e-2, 3e-3, 1e-3}) {
        const auto p = params(2.0, eps);
        const auto res = fixed_point_solve(V, p);
        ASSERT_TRUE(res.report.converged);
        const double f = free_energy(res.rho, V, p);
        EXPECT_GE(f, prev - 1e-12) << eps;
        prev = f;
    }
}

TEST(Sandwich, AtFixedPointAndAlphaZero)
{
    const auto V = double_well();
    FixedPointOptions opt;
    opt.tol = 1e-12;
    const auto p = params(2.0, 0.01);
    const auto star = fixed_point_solve(V, p, opt).rho;
    const auto s = sandwich_gap(star, V, p, star);
    EXPECT_LE(std::abs(s.lower), 1e-10);
    EXPECT_LE(std::abs(s.middle), 1e-10);
    EXPECT_LE(std::abs(s.upper), 1e-10);

    std::mt19937_64 rng(8);
    const auto p0 = params(0.0, 0.01);
    const auto gibbs = fixed_point_solve(V, p0).rho;
    const auto rho = abp::testing::random_density(line, rng);
    const auto s0 = sandwich_gap(rho, V, p0, gibbs);
    EXPECT_NEAR(s0.lower, s0.middle, 1e-13);
    EXPECT_NEAR(s0.middle, s0.upper, 1e-13);
}

TEST(Sandwich, OrderingOnRandomDensities)
{
    std::mt19937_64 rng(23);
    const auto V = double_well();
    for (double alpha : {0.5, 4.0}) {
        const auto p = params(alpha, 0.01);
        FixedPointOptions opt;
        opt.tol = 1e-12;
        const auto star = fixed_point_solve(V, p, opt).rho;
        const double fstar = free_energy(star, V, p);
        for (int t = 0; t < 50; ++t) {
            // mix of rho* and a random density, from far to very close
            const double w = std::pow(10.0, -0.1 * t);
            const auto rho = GridDensity::normalize((1.0 - w) * star.function() + w * abp::testing::random_density(line, rng, 1.0).function());
            const auto s = sandwich_gap(rho, V, p, star);
            EXPECT_TRUE(s.ordered(1e-9)) << s.lower << " " << s.middle << " " << s.upper;
            EXPECT_NEAR(s.middle, free_energy(rho, V, p) - fstar, 1e-11);
        }
    }
}

TEST(AlphaLimit, SeparableWithFlatFreeEnergy)
{
    const auto g = PeriodicGrid::plane(32, 32);
    const auto V = GridFunction::from(g, [](double, double y) { return std::cos(two_pi * y); });
    EXPECT_NEAR(alpha_limit_entropy(V, params(0.0, 0.01)).entropy, 0.0, 1e-14);
}

TEST(AlphaLimit, DecreasesAndRespectsBound)
{
    const auto r = PeriodicGrid::line(64);
    const auto B = GridFunction::from(r, [](double x) { return std::cos(two_pi * x) + 0.3 * std::sin(2.0 * two_pi * x); });
    const auto w = GridFunction::from(r, [](double y) { return 0.5 * std::cos(two_pi * y); });
    const double eps = 0.01;
    const auto V = preimage_potential(B, w, WrappedGaussianKernel(eps));
    // A equals K * B up to a constant
    const auto A = free_energy_A(V);
    const auto kb = convolve(WrappedGaussianKernel(eps), B);
    EXPECT_LE(((A - kb) - GridFunction(r, A.values[0] - kb.values[0])).sup_norm(), 1e-12);
    double prev = 1e300;
    for (double alpha : {4.0, 8.0, 16.0, 32.0}) {
        const auto res = alpha_limit_entropy(V, params(alpha, eps), B);
        ASSERT_TRUE(res.report.converged);
        EXPECT_LT(res.entropy, prev);
        prev = res.entropy;
        ASSERT_TRUE(res.bound);
        EXPECT_LE(res.entropy, *res.bound);
    }
}

TEST(ToyGaussian, Roots)
{
    EXPECT_NEAR(toy_gaussian_sigma({2.0, 1.5, 0.0}), 5.0, 1e-14);
    EXPECT_NEAR(toy_gaussian_sigma({2.0, 0.0, 0.3}), 2.0, 1e-14);
    // bisection oracle on 1/s - 1 + 1/(s + 0.5)
    double lo = 1.0, hi = 3.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (1.0 / mid - 1.0 + 1.0 / (mid + 0.5) > 0.0 ? lo : hi) = mid;
    }
    EXPECT_NEAR(toy_gaussian_sigma({1.0, 1.0, 0.5}), lo, 1e-12);
    EXPECT_NEAR(toy_gaussian_sigma({1.0, 1.0, 0.5}), 1.7808, 1e-4);
    EXPECT_THROW(toy_gaussian_sigma({0.0, 1.0, 0.1}), ParameterError);
    EXPECT_THROW(toy_gaussian_sigma({1.0, -1.0, 0.0}), DomainError);
}

TEST(ToyGaussian, IterationContracts)
{
    const ToyGaussianParams p{1.0, 0.9, 0.1};
    const double u = 1.0 / toy_gaussian_sigma(p);
    for (double u0 : {0.05, 0.5, 1.0}) {
        const auto it = toy_inverse_iteration(p, u0);
        EXPECT_TRUE(it.converged);
        EXPECT_NEAR(it.inverse_variance, u, 1e-12);
    }
}
